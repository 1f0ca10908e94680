#include "cmp/info_theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "theory_points.hpp"

using namespace cmp;
using namespace cmp::testing;

TEST_SUITE("info_theory") {
  TEST_CASE("positive-edge gain examples") {
    for (int c : {2, 5, 10, 17}) {
      CHECK(std::abs(delta_h_pos(1.0 / c, c)) <= 1e-12);
      CHECK(std::abs(delta_h_pos(1.0, c) - std::log(double(c))) <= 1e-12);
    }
    CHECK(std::abs(delta_h_pos(0.357, 10) - oracle::gain_after_edge(0.357, 0.07, 10)) <= 1e-12);
    CHECK(std::abs(delta_h_pos(0.0, 10) - (std::log(10.0) + std::log(1.0 / 9.0))) <= 1e-12);
    CHECK_THROWS_AS(delta_h_pos(0.5, 1), DomainError);
  }

  TEST_CASE("negative-edge gain examples") {
    CHECK(std::abs(h_minus(0.1, 0.05, 10) - 0.1) <= 1e-15);
    CHECK(std::abs(delta_h_neg(0.1, 0.05, 10)) <= 1e-12);
    CHECK(std::abs(delta_h_neg(0.357, 0.07, 10) - oracle::gain_after_non_edge(0.357, 0.07, 10)) <=
          1e-12);
    // h_minus matches the closed form (1 - sCd) / (C(1 - d)).
    CHECK(std::abs(h_minus(0.357, 0.07, 10) - (1 - 0.357 * 10 * 0.07) / (10 * 0.93)) <= 1e-15);
    double previous = delta_h_neg(0.6, 0.05, 10);
    for (double d : {1e-2, 1e-3, 1e-4, 1e-6}) {
      const double g = delta_h_neg(0.6, d, 10);
      CHECK(g < previous);
      previous = g;
    }
    CHECK(previous <= 1e-10);
    CHECK_THROWS_AS(h_minus(1.0, 0.5, 10), DomainError);
  }

  TEST_CASE("redundancy examples") {
    const Redundancy none = redundancy(0.0, 0.4, 0.05, 20.0);
    CHECK(none.f_pos == 1.0);
    CHECK(none.f_neg == 1.0);
    // d s r = 0.05
    CHECK(redundancy(0.5, 0.5, 0.2, 20.0).f_pos == doctest::Approx(0.5).epsilon(1e-15));
    double fp = 2.0, fn = 2.0;
    for (double r = 0.0; r <= 1.0; r += 0.05) {
      const Redundancy f = redundancy(r, 0.3, 0.05, 20.0);
      CHECK(f.f_pos <= fp);
      CHECK(f.f_neg <= fn);
      CHECK(f.f_pos > 0.0);
      fp = f.f_pos;
      fn = f.f_neg;
    }
  }

  TEST_CASE("info_gains examples") {
    const InfoGainResult zero = info_gains({1000, 10, 0.357, 0.0, 0.07, 20});
    CHECK(zero.ig_pos == 0.0);
    CHECK(zero.ig_neg == 0.0);
    CHECK(zero.r_neg == 0.0);

    const InfoGainResult neutral = info_gains({1000, 10, 0.1, 0.2, 0.07, 20});
    CHECK(neutral.dh_pos <= 1e-12);
    CHECK(neutral.dh_neg <= 1e-12);
    CHECK(neutral.r_neg == 0.0);

    const TheoryParams p{1000, 10, 0.357, 0.1, 0.07, 20};
    const InfoGainResult a = info_gains(p);
    const InfoGainResult b = oracle::info_gains(p);
    CHECK(theory_difference(a, b) <= 1e-12);
    CHECK(a.h_plus == 0.357);
    CHECK(a.ig_pos == doctest::Approx(100 * 0.07 * a.dh_pos * a.f_pos).epsilon(1e-14));
    CHECK(a.r_neg == doctest::Approx(a.ig_neg / (a.ig_pos + a.ig_neg)).epsilon(1e-15));
  }

  TEST_CASE("domain validation") {
    CHECK_THROWS_AS(info_gains({1000, 10, 1.0, 0.1, 0.2, 20}), DomainError);
    CHECK_THROWS_AS(info_gains({1000, 10, 0.3, 0.1, 0.0, 20}), DomainError);
    CHECK_THROWS_AS(info_gains({1000, 10, 0.3, 1.5, 0.05, 20}), DomainError);
    CHECK_THROWS_AS(info_gains({1000, 10, 0.3, 0.1, 0.05, 0}), DomainError);
    CHECK_THROWS_AS(info_gains({1000, 1, 0.3, 0.1, 0.05, 20}), DomainError);
  }

  TEST_CASE("oracle equivalence over 500 random points") {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
      const TheoryParams p = random_theory_point(rng);
      worst = std::max(worst, theory_difference(info_gains(p), oracle::info_gains(p)));
      worst = std::max(worst, std::abs(delta_h_pos(p.s, p.num_classes) -
                                       oracle::gain_after_edge(p.s, p.d, p.num_classes)));
      worst = std::max(worst, std::abs(delta_h_neg(p.s, p.d, p.num_classes) -
                                       oracle::gain_after_non_edge(p.s, p.d, p.num_classes)));
    }
    CHECK(worst <= 1e-12);
  }

  TEST_CASE("bounds on the valid domain") {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 2000; ++i) {
      const TheoryParams p = random_theory_point(rng);
      const InfoGainResult g = info_gains(p);
      const double lnc = std::log(static_cast<double>(p.num_classes));
      REQUIRE(g.h_plus >= 0.0);
      REQUIRE(g.h_plus <= 1.0);
      REQUIRE(g.h_minus >= 0.0);
      REQUIRE(g.h_minus <= 1.0);
      REQUIRE(g.dh_pos >= 0.0);
      REQUIRE(g.dh_pos <= lnc + 1e-15);
      REQUIRE(g.dh_neg >= 0.0);
      REQUIRE(g.dh_neg <= lnc + 1e-15);
      REQUIRE(g.r_neg >= 0.0);
      REQUIRE(g.r_neg <= 1.0);
    }
  }

  TEST_CASE("grid ranges") {
    CHECK(GridRange{0.1, 0.9, 0.05}.values().size() == 17);
    CHECK(GridRange{0.01, 0.5, 0.01}.values().size() == 50);
    CHECK(GridRange{0.01, 0.09, 0.01}.values().back() == 0.09);
    CHECK(GridRange{0.3, 0.3, 0.1}.values() == std::vector<double>{0.3});
    CHECK_THROWS_AS((GridRange{0.1, 0.2, 0.0}.values()), DomainError);
    CHECK_THROWS_AS((GridRange{0.3, 0.2, 0.1}.values()), DomainError);
  }

  TEST_CASE("one-point sweep matches info_gains") {
    GridSpec g;
    g.s = {0.357, 0.357, 1};
    g.r = {0.1, 0.1, 1};
    g.d = {0.07, 0.07, 1};
    const SweepResult r = sweep_grid(g);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.skipped.empty());
    CHECK(theory_difference(r.rows[0], info_gains({1000, 10, 0.357, 0.1, 0.07, 20})) == 0.0);
    const std::string csv = sweep_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  }

  TEST_CASE("invalid corner is skipped and reported") {
    GridSpec g;
    g.num_classes = 10;
    g.s = {0.5, 1.0, 0.5};
    g.r = {0.1, 0.1, 1};
    g.d = {0.1, 0.15, 0.05};
    // Only (s=1, d=0.15) implies p_in > 1.
    const SweepResult r = sweep_grid(g);
    CHECK(r.rows.size() == 3);
    REQUIRE(r.skipped.size() == 1);
    CHECK(r.skipped[0].s == 1.0);
    CHECK(r.skipped[0].d == 0.15);
  }

  TEST_CASE("empty grid throws") {
    GridSpec g;
    g.s = {1.0, 1.0, 1};
    g.d = {0.5, 0.5, 1};
    CHECK_THROWS_AS(sweep_grid(g), EmptyGridError);
  }

  TEST_CASE("rows are ordered s-major, then r, then d") {
    GridSpec g;
    g.s = {0.2, 0.3, 0.1};
    g.r = {0.1, 0.2, 0.1};
    g.d = {0.01, 0.02, 0.01};
    const SweepResult r = sweep_grid(g);
    REQUIRE(r.rows.size() == 8);
    CHECK(r.rows[1].d == 0.02);
    CHECK(r.rows[2].r == 0.2);
    CHECK(r.rows[4].s == 0.3);
  }

  TEST_CASE("default grid shows every expected trend") {
    const GridSpec g;
    const SweepResult r = sweep_grid(g);
    CHECK(r.rows.size() == 17 * 50 * 9);
    CHECK(r.skipped.empty());
    CHECK(check_trends(r, g).empty());
  }

  TEST_CASE("trend scan reports a corrupted cell") {
    GridSpec g;
    g.s = {0.5, 0.5, 1};
    g.d = {0.05, 0.05, 1};
    g.r = {0.1, 0.3, 0.1};
    SweepResult r = sweep_grid(g);
    CHECK(check_trends(r, g).empty());
    r.rows[1].ig_pos = 0.0;
    const auto bad = check_trends(r, g);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].trend == "ig_pos non-decreasing in r");
  }

  TEST_CASE("CSV header") {
    GridSpec g;
    g.s = {0.5, 0.5, 1};
    g.r = {0.1, 0.1, 1};
    g.d = {0.05, 0.05, 1};
    const SweepResult r = sweep_grid(g);
    const std::string csv = sweep_csv(r);
    CHECK(csv.substr(0, csv.find('\n')) == "s,r,d,h_plus,h_minus,dh_pos,dh_neg,f_pos,f_neg,ig_pos,ig_neg,r_neg");
    const std::string totals = sweep_csv(r, true);
    CHECK(totals.substr(0, totals.find('\n')).ends_with(",r_neg,ig_pos_total,ig_neg_total"));
  }
}
