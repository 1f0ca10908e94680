#include "cmp/eig.hpp"

#include <cmath>
#include <random>

#include "cmp/autodiff.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cmp;
using cmp::testing::compose;
using cmp::testing::random_orthogonal;
using cmp::testing::random_tensor;

namespace {

Tensor random_symmetric(std::size_t d, std::mt19937_64& rng) {
  Tensor a = random_tensor({d, d}, rng, -1.0, 1.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) a(j, i) = a(i, j);
  return a;
}

Tensor rescaled(const Tensor& w, const Tensor& z, double tau) {
  Tape t;
  return t.value(eig_rescaled_apply(t, t.constant(w), t.constant(z), t.constant(Tensor::scalar(tau))));
}

}  // namespace

TEST_SUITE("eig") {
  TEST_CASE("diagonal input is sorted and yields permuted unit vectors") {
    const EigPair e = symmetric_eig(Tensor::from_rows({{3, 0}, {0, -1}}));
    CHECK(e.values == std::vector<double>{-1.0, 3.0});
    CHECK(e.vectors == Tensor::from_rows({{0, 1}, {1, 0}}));
  }

  TEST_CASE("identity has unit spectrum") {
    const EigPair e = symmetric_eig(Tensor::identity(5));
    for (double v : e.values) CHECK(v == 1.0);
    CHECK(orthonormality_residual(e) == 0.0);
  }

  TEST_CASE("known 2x2 spectrum") {
    const EigPair e = symmetric_eig(Tensor::from_rows({{2, 1}, {1, 2}}));
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e.values[1] == doctest::Approx(3.0).epsilon(1e-14));
    const double h = std::sqrt(0.5);
    CHECK(std::abs(e.vectors(0, 1) - h) < 1e-14);
    CHECK(std::abs(e.vectors(1, 1) - h) < 1e-14);
  }

  TEST_CASE("residuals over 1000 random symmetric matrices") {
    std::mt19937_64 rng(1);
    const std::size_t dims[] = {2, 4, 8, 64};
    double worst_orth = 0.0, worst_rec = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const std::size_t d = dims[k % 4];
      const Tensor w = random_symmetric(d, rng);
      const EigPair e = symmetric_eig(w);
      worst_orth = std::max(worst_orth, orthonormality_residual(e));
      worst_rec = std::max(worst_rec, reconstruction_residual(e, w));
      for (std::size_t i = 1; i < d; ++i) REQUIRE(e.values[i - 1] <= e.values[i]);
    }
    CHECK(worst_orth <= 1e-8);
    CHECK(worst_rec <= 1e-8);
  }

  TEST_CASE("largest-magnitude entry of every eigenvector is positive") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
      const EigPair e = symmetric_eig(random_symmetric(7, rng));
      for (std::size_t c = 0; c < 7; ++c) {
        std::size_t arg = 0;
        for (std::size_t r = 1; r < 7; ++r)
          if (std::abs(e.vectors(r, c)) > std::abs(e.vectors(arg, c))) arg = r;
        CHECK(e.vectors(arg, c) > 0.0);
      }
    }
  }

  TEST_CASE("decomposition is a deterministic function of the input") {
    std::mt19937_64 rng(3);
    const Tensor w = random_symmetric(12, rng);
    const EigPair a = symmetric_eig(w);
    const EigPair b = symmetric_eig(w);
    CHECK(a.values == b.values);
    CHECK(a.vectors == b.vectors);
  }

  TEST_CASE("repeated eigenvalues still reconstruct") {
    std::mt19937_64 rng(4);
    const Tensor q = random_orthogonal(6, rng);
    const Tensor w = compose(q, {-2, -2, 1, 1, 1, 4});
    const EigPair e = symmetric_eig(w);
    CHECK(reconstruction_residual(e, w) <= 1e-10);
    CHECK(orthonormality_residual(e) <= 1e-10);
    CHECK(e.values[0] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(e.values[4] == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("non-convergence reports the residual") {
    std::mt19937_64 rng(5);
    const Tensor w = random_symmetric(6, rng);
    JacobiOptions opts;
    opts.max_sweeps = 1;
    try {
      symmetric_eig(w, opts);
      FAIL("expected EigError");
    } catch (const EigError& e) {
      CHECK(e.residual() > 0.0);
    }
  }

  TEST_CASE("input validation") {
    CHECK_THROWS_AS(symmetric_eig(Tensor::matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(symmetric_eig(Tensor::from_rows({{1, 2}, {0, 1}})), ShapeError);
    Tensor bad = Tensor::identity(2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(symmetric_eig(bad), NumericError);
  }

  TEST_CASE("spectral map and parts") {
    std::mt19937_64 rng(6);
    const Tensor w = random_symmetric(5, rng);
    const EigPair e = symmetric_eig(w);
    const Tensor p = spectral_map(e, positive_part);
    const Tensor n = spectral_map(e, negative_part);
    Tensor sum = p;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += n[i];
    CHECK(max_abs_diff(sum, w) <= 1e-12);
    const EigPair ep = symmetric_eig(p);
    CHECK(ep.values.front() >= -1e-12);
    const EigPair en = symmetric_eig(n);
    CHECK(en.values.back() <= 1e-12);
  }

  TEST_CASE("Loewner matrix uses the derivative mean on tiny gaps") {
    EigPair e;
    e.values = {-1.0, -1.0 + 1e-10, 2.0};
    e.vectors = Tensor::identity(3);
    const Tensor k = loewner_matrix(e, positive_part, positive_part_slope);
    CHECK(k(0, 1) == 0.0);
    CHECK(k(0, 2) == doctest::Approx(2.0 / 3.0));
    CHECK(k(2, 2) == 1.0);
    CHECK(k(0, 0) == 0.0);

    // Across zero the derivatives differ, so the mean is one half.
    e.values = {-1e-10, 1e-10, 3.0};
    const Tensor k2 = loewner_matrix(e, positive_part, positive_part_slope);
    CHECK(k2(0, 1) == 0.5);
  }

  TEST_CASE("rescaled apply examples") {
    const Tensor z = Tensor::vector({1, 1});
    const Tensor w = Tensor::from_rows({{2, 0}, {0, -3}});
    const Tensor out = rescaled(w, z, 0.5);
    CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(-1.5).epsilon(1e-14));

    const Tensor psd = Tensor::from_rows({{2, 0}, {0, 1}});
    for (double tau : {0.0, 0.3, 1.0}) {
      const Tensor o = rescaled(psd, Tensor::vector({0.7, -2.0}), tau);
      CHECK(o[0] == doctest::Approx(1.4));
      CHECK(o[1] == doctest::Approx(-2.0));
    }

    Tensor neg = Tensor::identity(3);
    for (double& v : neg.data()) v = -v;
    const Tensor zero = rescaled(neg, Tensor::vector({1, 2, 3}), 0.0);
    for (double v : zero.data()) CHECK(std::abs(v) <= 1e-15);
  }

  TEST_CASE("tau = 0 gives a PSD effective matrix") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t d = 6;
      const Tensor w = random_tensor({d, d}, rng);
      // Column k of the effective matrix is its product with e_k.
      Tensor m = Tensor::matrix(d, d);
      for (std::size_t k = 0; k < d; ++k) {
        Tensor ek = Tensor::vector(std::vector<double>(d, 0.0));
        ek[k] = 1.0;
        const Tensor col = rescaled(w, ek, 0.0);
        for (std::size_t r = 0; r < d; ++r) m(r, k) = col[r];
      }
      for (int s = 0; s < 100; ++s) {
        const Tensor v = random_tensor({d}, rng);
        double q = 0.0;
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) q += v[i] * m(i, j) * v[j];
        CHECK(q >= -1e-10);
      }
    }
  }

  TEST_CASE("tau = 1 reproduces the symmetrized product") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t d = 7;
      const Tensor w = random_tensor({d, d}, rng);
      const Tensor z = random_tensor({d}, rng);
      const Tensor out = rescaled(w, z, 1.0);
      for (std::size_t i = 0; i < d; ++i) {
        double ref = 0.0;
        for (std::size_t j = 0; j < d; ++j) ref += 0.5 * (w(i, j) + w(j, i)) * z[j];
        CHECK(std::abs(out[i] - ref) <= 1e-10);
      }
    }
  }
}
