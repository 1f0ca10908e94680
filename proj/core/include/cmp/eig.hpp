#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cmp/tensor.hpp"

namespace cmp {

class EigError : public std::runtime_error {
 public:
  EigError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Eigendecomposition of a symmetric matrix: W = Q diag(values) Q^T.
/// Values are sorted ascending; column k of `vectors` pairs with values[k].
struct EigPair {
  std::vector<double> values;
  Tensor vectors;  // d x d, orthonormal columns

  std::size_t dim() const noexcept { return values.size(); }
};

struct JacobiOptions {
  double off_tolerance = 1e-12;  // relative to the Frobenius norm of the input
  int max_sweeps = 100;
  double symmetry_tolerance = 1e-10;
};

/// Cyclic Jacobi eigendecomposition.
///
/// The input must be symmetric within `symmetry_tolerance` (absolute, scaled by
/// max(1, max|w|)); callers symmetrize raw parameters first. Each eigenvector is
/// normalized so that its largest-magnitude entry is positive, which makes the
/// result a deterministic function of the input.
EigPair symmetric_eig(const Tensor& w, const JacobiOptions& opts = {});

/// Q diag(f(values)) Q^T.
Tensor spectral_map(const EigPair& eig, const std::function<double(double)>& f);

/// Loewner (divided-difference) matrix of a scalar function f on the spectrum:
/// K_ij = (f(l_i) - f(l_j)) / (l_i - l_j) off the diagonal, f'(l_i) on it.
/// When |l_i - l_j| < gap_tolerance the quotient is replaced by the mean of the
/// two derivatives.
Tensor loewner_matrix(const EigPair& eig, const std::function<double(double)>& f,
                      const std::function<double(double)>& df, double gap_tolerance = 1e-8);

/// Pulls a gradient G on F = Q diag(f(l)) Q^T back to the symmetric input:
/// Q (K o (Q^T G Q)) Q^T, symmetrized.
Tensor spectral_backward(const EigPair& eig, const Tensor& loewner, const Tensor& grad_out);

/// Positive and negative spectral parts used by the soft-PSD constraint.
double positive_part(double x) noexcept;
double negative_part(double x) noexcept;
double positive_part_slope(double x) noexcept;
double negative_part_slope(double x) noexcept;

double orthonormality_residual(const EigPair& eig);
double reconstruction_residual(const EigPair& eig, const Tensor& w);

}  // namespace cmp
