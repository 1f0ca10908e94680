#include "cmp/csv.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "tempdir.hpp"

using namespace cmp;

TEST_SUITE("csv") {
  TEST_CASE("format_double is shortest and exact") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(42.0) == "42");
    CHECK(format_double(-2.5e-10) == "-2.5e-10");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
      CHECK(parse_double(format_double(v)) == v);
    }
  }

  TEST_CASE("strict parsing") {
    CHECK(parse_double(" 1.5 ") == 1.5);
    CHECK(parse_int("-12") == -12);
    CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_int("3.0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_int("x"), std::invalid_argument);
  }

  TEST_CASE("splitting") {
    const auto f = split_csv_line(" a, b ,,c");
    REQUIRE(f.size() == 4);
    CHECK(f[0] == "a");
    CHECK(f[1] == "b");
    CHECK(f[2].empty());
    CHECK(f[3] == "c");
    const auto w = split_whitespace("  3\t4   5\r");
    REQUIRE(w.size() == 3);
    CHECK(w[2] == "5");
    CHECK(split_whitespace("   ").empty());
    CHECK(trim("\t x \n") == "x");
  }

  TEST_CASE("text files") {
    cmp::testing::TempDir dir;
    const auto p = dir / "nested/deeper/f.txt";
    write_text_file(p, "one\ntwo\n");
    CHECK(read_text_file(p) == "one\ntwo\n");
    write_text_file(p, "x");
    CHECK(read_text_file(p) == "x");
    CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), std::runtime_error);
  }
}
