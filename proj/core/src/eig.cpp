#include "cmp/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"

namespace cmp {
namespace {

double off_diagonal_norm(const std::vector<double>& a, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j) s += a[i * d + j] * a[i * d + j];
  return std::sqrt(s);
}

// C = A * B for square row-major matrices.
void square_matmul(const double* a, const double* b, double* c, std::size_t d) {
  std::fill(c, c + d * d, 0.0);
  kernels::gemm_nn(a, b, c, d, d, d);
}

}  // namespace

EigPair symmetric_eig(const Tensor& w, const JacobiOptions& opts) {
  if (w.rank() != 2 || w.rows() != w.cols()) {
    throw ShapeError("symmetric_eig requires a square matrix, got " + w.shape_string());
  }
  if (!w.all_finite()) throw NumericError("symmetric_eig: non-finite input");
  const std::size_t d = w.rows();

  double scale = 1.0;
  for (double v : w.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if (std::abs(w(i, j) - w(j, i)) > opts.symmetry_tolerance * scale) {
        throw ShapeError("symmetric_eig: input is not symmetric at (" + std::to_string(i) + "," +
                         std::to_string(j) + ")");
      }

  // Work on the exactly symmetric average so round-off asymmetry never leaks in.
  std::vector<double> a(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a[i * d + j] = 0.5 * (w(i, j) + w(j, i));

  // vt holds eigenvectors as rows during the sweeps (contiguous updates).
  std::vector<double> vt(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) vt[i * d + i] = 1.0;

  double frob = 0.0;
  for (double v : a) frob += v * v;
  frob = std::sqrt(frob);
  const double tol = opts.off_tolerance * frob;

  double off = off_diagonal_norm(a, d);
  int sweep = 0;
  while (off > tol && sweep < opts.max_sweeps) {
    ++sweep;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (apq == 0.0) continue;
        const double app = a[p * d + p];
        const double aqq = a[q * d + q];
        // Past the first few sweeps, entries below the diagonal's resolution are dropped.
        if (sweep > 4 && std::abs(app) + 100.0 * std::abs(apq) == std::abs(app) &&
            std::abs(aqq) + 100.0 * std::abs(apq) == std::abs(aqq)) {
          a[p * d + q] = 0.0;
          a[q * d + p] = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a[p * d + p] = app - t * apq;
        a[q * d + q] = aqq + t * apq;
        a[p * d + q] = 0.0;
        a[q * d + p] = 0.0;
        double* rp = a.data() + p * d;
        double* rq = a.data() + q * d;
        for (std::size_t r = 0; r < d; ++r) {
          if (r == p || r == q) continue;
          const double g = rp[r];
          const double h = rq[r];
          const double gp = g - s * (h + g * tau);
          const double hq = h + s * (g - h * tau);
          rp[r] = gp;
          rq[r] = hq;
          a[r * d + p] = gp;
          a[r * d + q] = hq;
        }
        double* vp = vt.data() + p * d;
        double* vq = vt.data() + q * d;
        for (std::size_t r = 0; r < d; ++r) {
          const double g = vp[r];
          const double h = vq[r];
          vp[r] = g - s * (h + g * tau);
          vq[r] = h + s * (g - h * tau);
        }
      }
    }
    off = off_diagonal_norm(a, d);
  }
  if (off > tol) {
    throw EigError("symmetric_eig: Jacobi did not converge after " +
                       std::to_string(opts.max_sweeps) +
                       " sweeps (off-diagonal residual " + std::to_string(off) + ")",
                   off);
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * d + x] < a[y * d + y]; });

  EigPair out;
  out.values.resize(d);
  out.vectors = Tensor::matrix(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t src = order[k];
    out.values[k] = a[src * d + src];
    const double* v = vt.data() + src * d;
    std::size_t arg = 0;
    for (std::size_t r = 1; r < d; ++r)
      if (std::abs(v[r]) > std::abs(v[arg])) arg = r;
    const double sign = v[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < d; ++r) out.vectors(r, k) = sign * v[r];
  }
  return out;
}

Tensor spectral_map(const EigPair& eig, const std::function<double(double)>& f) {
  const std::size_t d = eig.dim();
  const Tensor& q = eig.vectors;
  std::vector<double> scaled(d * d);  // Q diag(f)
  for (std::size_t k = 0; k < d; ++k) {
    const double fk = f(eig.values[k]);
    for (std::size_t r = 0; r < d; ++r) scaled[r * d + k] = q(r, k) * fk;
  }
  Tensor out = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += scaled[i * d + k] * q(j, k);
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
  return out;
}

Tensor loewner_matrix(const EigPair& eig, const std::function<double(double)>& f,
                      const std::function<double(double)>& df, double gap_tolerance) {
  const std::size_t d = eig.dim();
  Tensor k = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    const double li = eig.values[i];
    k(i, i) = df(li);
    for (std::size_t j = i + 1; j < d; ++j) {
      const double lj = eig.values[j];
      const double gap = li - lj;
      const double kij = std::abs(gap) < gap_tolerance ? 0.5 * (df(li) + df(lj))
                                                       : (f(li) - f(lj)) / gap;
      k(i, j) = kij;
      k(j, i) = kij;
    }
  }
  return k;
}

Tensor spectral_backward(const EigPair& eig, const Tensor& loewner, const Tensor& grad_out) {
  const std::size_t d = eig.dim();
  const double* q = eig.vectors.raw();
  AlignedVector qt(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) qt[i * d + j] = q[j * d + i];

  AlignedVector tmp(d * d);
  AlignedVector inner(d * d);
  square_matmul(qt.data(), grad_out.raw(), tmp.data(), d);  // Q^T G
  square_matmul(tmp.data(), q, inner.data(), d);            // Q^T G Q
  for (std::size_t i = 0; i < d * d; ++i) inner[i] *= loewner[i];
  square_matmul(q, inner.data(), tmp.data(), d);  // Q (K o .)
  Tensor out = Tensor::matrix(d, d);
  square_matmul(tmp.data(), qt.data(), out.raw(), d);  // ... Q^T
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double m = 0.5 * (out(i, j) + out(j, i));
      out(i, j) = m;
      out(j, i) = m;
    }
  return out;
}

double positive_part(double x) noexcept { return x >= 0.0 ? x : 0.0; }
double negative_part(double x) noexcept { return x >= 0.0 ? 0.0 : x; }
double positive_part_slope(double x) noexcept { return x >= 0.0 ? 1.0 : 0.0; }
double negative_part_slope(double x) noexcept { return x >= 0.0 ? 0.0 : 1.0; }

double orthonormality_residual(const EigPair& eig) {
  const std::size_t d = eig.dim();
  double m = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d; ++r) acc += eig.vectors(r, i) * eig.vectors(r, j);
      m = std::max(m, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  return m;
}

double reconstruction_residual(const EigPair& eig, const Tensor& w) {
  const Tensor rec = spectral_map(eig, [](double x) { return x; });
  return max_abs_diff(rec, w);
}

}  // namespace cmp
