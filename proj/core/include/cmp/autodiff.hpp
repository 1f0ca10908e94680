#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "cmp/eig.hpp"
#include "cmp/tensor.hpp"

namespace cmp {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t npos = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so every
/// node's inputs precede it; backward() walks them once in reverse.
///
/// A Tape is single-threaded. Independent tapes share nothing.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Differentiable leaf (a parameter or an input under test).
  Var leaf(Tensor value);

  /// Records an op output. `backward` is dropped when no input requires grad.
  /// `op` names the operation in NaN/Inf diagnostics.
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulated by backward(); zeros when the node was not reached.
  Tensor grad(Var v) const;
  /// Mutable accumulator used by backward rules (allocated on first use).
  Tensor& grad_accumulator(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ShapeError unless the
  /// loss is a one-element tensor. Leaves always end with a gradient buffer.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  /// NaN/Inf check on every recorded value (on by default).
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool check_finite_ = true;
};

/// Directed message edges (src -> dst), grouped by dst.
struct EdgeIndex {
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::size_t num_nodes = 0;

  std::size_t size() const noexcept { return src.size(); }
};

// ---- elementwise (operands of equal shape, or one operand with one element) ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double factor);
Var add_scalar(Tape& t, Var a, double offset);
Var leaky_relu(Tape& t, Var a, double slope);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);

// ---- reductions and linear algebra ----
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
/// (a + a^T) / 2
Var symmetrize(Tape& t, Var a);
/// x[n x d] + bias[d] broadcast across rows.
Var add_row_bias(Tape& t, Var x, Var bias);
/// Per-row zero mean / unit variance with learnable gain and bias (eps added to variance).
Var layer_norm(Tape& t, Var x, Var gain, Var bias, double eps = 1e-5);

// ---- similarity ----
/// u.v / (|u||v| + eps), clamped to [-1, 1]. Zero vectors give 0.
Var cosine_similarity(Tape& t, Var u, Var v, double eps = 1e-12);

// ---- segment / graph ops ----
/// Row s of the result is the mean of the rows of `values` whose segment is s;
/// empty segments give a zero row.
Var segment_mean(Tape& t, Var values, std::span<const std::uint32_t> segment_of,
                 std::size_t num_segments);
/// Softmax of `scores` within each segment (max-subtracted).
Var segment_softmax(Tape& t, Var scores, std::span<const std::uint32_t> segment_of,
                    std::size_t num_segments);
/// Per-edge cosine similarity between h[dst] and h[src].
Var edge_cosine(Tape& t, Var h, const EdgeIndex& edges, double eps = 1e-12);
/// Per-edge inner product h[dst] . h[src].
Var edge_dot(Tape& t, Var h, const EdgeIndex& edges);
/// Per-edge u[dst] + v[src] for node vectors u, v (length n, or n x 1).
Var edge_sum(Tape& t, Var u, Var v, const EdgeIndex& edges);
/// out[dst] += coef[e] * x[src]; `coef` may be constant or differentiable.
Var spmm(Tape& t, Var coef, Var x, const EdgeIndex& edges);
/// out[dst] += coef[e] * (p[src] + tau[e] * q[src]); tau may be one scalar.
/// Fused form of spmm(coef, p) + spmm(coef * tau, q).
Var spmm_pair(Tape& t, Var coef, Var p, Var tau, Var q, const EdgeIndex& edges);

// ---- soft-PSD spectral ops ----
struct SpectralParts {
  Var positive;  // Q diag(max(l, 0)) Q^T
  Var negative;  // Q diag(min(l, 0)) Q^T
  std::shared_ptr<const EigPair> eig;
};

/// Splits sym(w_raw) into its positive and negative spectral parts, so that the
/// soft-PSD matrix for factor tau is positive + tau * negative. Gradients flow
/// back to w_raw through the Loewner-matrix rule. `cached` (when given) must be
/// the eigendecomposition of sym(w_raw).
SpectralParts spectral_parts(Tape& t, Var w_raw, std::shared_ptr<const EigPair> cached = nullptr);

/// Q diag(l_hat) Q^T z with l_hat_i = l_i (l_i >= 0) or tau * l_i (l_i < 0), where
/// (Q, l) = eig(sym(w_raw)). z is a vector of length d or a batch [m x d] whose
/// rows share the scalar tau. Computed in eigen-coordinates.
Var eig_rescaled_apply(Tape& t, Var w_raw, Var z, Var tau,
                       std::shared_ptr<const EigPair> cached = nullptr);

// ---- losses ----
/// Mean over masked rows of -log softmax(logits)[label].
Var cross_entropy(Tape& t, Var logits, std::span<const int> labels, std::span<const std::uint8_t> mask);
/// Mean over masked entries of the logistic loss with targets in [0, 1].
Var binary_ce(Tape& t, Var logits, std::span<const double> targets, std::span<const std::uint8_t> mask);

}  // namespace cmp
