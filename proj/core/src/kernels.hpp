#pragma once

// Dense row-major GEMM kernels backed by Eigen. All accumulate into c.

#include <cstddef>

#include <Eigen/Core>

namespace cmp::kernels {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  Map(c, idx(m), idx(n)).noalias() += ConstMap(a, idx(m), idx(k)) * ConstMap(b, idx(k), idx(n));
}

// c[m x k] += g[m x n] * b[k x n]^T
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  Map(c, idx(m), idx(k)).noalias() +=
      ConstMap(g, idx(m), idx(n)) * ConstMap(b, idx(k), idx(n)).transpose();
}

// c[k x n] += a[m x k]^T * g[m x n]
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  Map(c, idx(k), idx(n)).noalias() +=
      ConstMap(a, idx(m), idx(k)).transpose() * ConstMap(g, idx(m), idx(n));
}

}  // namespace cmp::kernels
