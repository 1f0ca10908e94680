#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cmp/autodiff.hpp"
#include "cmp/graph.hpp"
#include "cmp/nn.hpp"
#include "gradcheck.hpp"

namespace cmp::testing {

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
inline Tensor random_orthogonal(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor q = Tensor::matrix(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> v(d);
    for (double& x : v) x = n01(rng);
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += v[r] * q(r, p);
      for (std::size_t r = 0; r < d; ++r) v[r] -= dot * q(r, p);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < d; ++r) q(r, c) = v[r] / norm;
  }
  return q;
}

/// Q diag(values) Q^T.
inline Tensor compose(const Tensor& q, const std::vector<double>& values) {
  const std::size_t d = values.size();
  Tensor m = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += q(i, k) * values[k] * q(j, k);
      m(i, j) = s;
    }
  return m;
}

/// Raw (non-symmetric) weight whose symmetric part has eigenvalues of both
/// signs separated by at least `gap` and kept away from zero.
inline Tensor random_raw_weight(std::size_t d, std::mt19937_64& rng, double gap = 0.1) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> values(d);
  double v = -1.0 - u(rng);
  for (std::size_t i = 0; i < d; ++i) {
    values[i] = v;
    v += gap + 0.5 * u(rng);
    if (v > -gap && v < gap) v = gap + 0.2 * u(rng);
  }
  Tensor w = compose(random_orthogonal(d, rng), values);
  // Antisymmetric noise is removed by the symmetrization inside the ops.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double a = 0.3 * (u(rng) - 0.5);
      w(i, j) += a;
      w(j, i) -= a;
    }
  return w;
}

/// Small random graph with features, labels and negative edges. Every node
/// has at least one positive neighbour.
inline Graph random_graph(std::size_t n, std::size_t feat_dim, int num_classes,
                          std::mt19937_64& rng, double p = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Graph g;
  g.num_nodes = n;
  g.features = random_tensor({n, feat_dim}, rng);
  for (std::size_t i = 0; i < n; ++i) g.labels.push_back(static_cast<int>(i % num_classes));
  EdgeList und;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (u(rng) < p || j == i + 1) und.push_back({i, j});
  g.pos_edges = symmetrize_edges(und);
  std::uniform_int_distribution<std::uint64_t> seed_dist;
  const std::size_t complement = n * (n - 1) / 2 - und.size();
  return sample_negative_edges(std::move(g), std::min(und.size(), complement), seed_dist(rng));
}

struct OpCase {
  std::string name;
  Builder build;
  std::vector<Tensor> inputs;
};

/// One random instance of every differentiable primitive.
inline std::vector<OpCase> op_cases(std::mt19937_64& rng) {
  auto R = [&](Tensor::Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(std::move(s), rng, lo, hi);
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<OpCase> c;
  c.push_back({"matmul", [](Tape& t, const auto& v) { return matmul(t, v[0], v[1]); },
               {R({5, 4}), R({4, 3})}});
  c.push_back({"matmul_vector", [](Tape& t, const auto& v) { return matmul(t, v[0], v[1]); },
               {R({4, 3}), R({3})}});
  c.push_back({"add", [](Tape& t, const auto& v) { return add(t, v[0], v[1]); },
               {R({3, 2}), R({3, 2})}});
  c.push_back({"sub", [](Tape& t, const auto& v) { return sub(t, v[0], v[1]); },
               {R({3, 2}), R({3, 2})}});
  c.push_back({"mul", [](Tape& t, const auto& v) { return mul(t, v[0], v[1]); },
               {R({3, 2}), R({3, 2})}});
  c.push_back({"mul_scalar", [](Tape& t, const auto& v) { return mul(t, v[0], v[1]); },
               {R({}), R({4})}});
  c.push_back({"scale", [](Tape& t, const auto& v) { return scale(t, v[0], -1.7); }, {R({5})}});
  c.push_back({"add_scalar", [](Tape& t, const auto& v) { return add_scalar(t, v[0], 0.3); },
               {R({5})}});
  c.push_back({"leaky_relu", [](Tape& t, const auto& v) { return leaky_relu(t, v[0], 0.2); },
               {R({6})}});
  c.push_back({"sigmoid", [](Tape& t, const auto& v) { return sigmoid(t, v[0]); }, {R({6}, -3, 3)}});
  c.push_back({"softplus", [](Tape& t, const auto& v) { return softplus(t, v[0]); },
               {R({6}, -3, 3)}});
  c.push_back({"sum", [](Tape& t, const auto& v) { return sum(t, v[0]); }, {R({3, 3})}});
  c.push_back({"mean", [](Tape& t, const auto& v) { return mean(t, v[0]); }, {R({3, 3})}});
  c.push_back({"transpose", [](Tape& t, const auto& v) { return transpose(t, v[0]); },
               {R({2, 5})}});
  c.push_back({"symmetrize", [](Tape& t, const auto& v) { return symmetrize(t, v[0]); },
               {R({4, 4})}});
  c.push_back({"add_row_bias", [](Tape& t, const auto& v) { return add_row_bias(t, v[0], v[1]); },
               {R({4, 3}), R({3})}});
  c.push_back({"layer_norm",
               [](Tape& t, const auto& v) { return layer_norm(t, v[0], v[1], v[2]); },
               {R({4, 8}), R({8}, 0.5, 1.5), R({8})}});
  c.push_back({"cosine_similarity",
               [](Tape& t, const auto& v) { return cosine_similarity(t, v[0], v[1]); },
               {R({5}), R({5})}});

  static const std::vector<std::uint32_t> seg6{0, 0, 1, 2, 2, 2};
  static const std::vector<std::uint32_t> seg6b{0, 1, 0, 1, 1, 0};
  c.push_back({"segment_mean",
               [](Tape& t, const auto& v) { return segment_mean(t, v[0], seg6, 4); },
               {R({6, 3})}});
  c.push_back({"segment_softmax",
               [](Tape& t, const auto& v) { return segment_softmax(t, v[0], seg6b, 2); },
               {R({6}, -2, 2)}});

  static const EdgeIndex edges{{1, 2, 0, 2, 3, 0, 1}, {0, 0, 1, 1, 2, 3, 3}, 4};
  c.push_back({"edge_cosine", [](Tape& t, const auto& v) { return edge_cosine(t, v[0], edges); },
               {R({4, 3})}});
  c.push_back({"edge_dot", [](Tape& t, const auto& v) { return edge_dot(t, v[0], edges); },
               {R({4, 3})}});
  c.push_back({"edge_sum", [](Tape& t, const auto& v) { return edge_sum(t, v[0], v[1], edges); },
               {R({4}), R({4})}});
  c.push_back({"spmm", [](Tape& t, const auto& v) { return spmm(t, v[0], v[1], edges); },
               {R({7}), R({4, 3})}});
  c.push_back({"spmm_pair",
               [](Tape& t, const auto& v) { return spmm_pair(t, v[0], v[1], v[2], v[3], edges); },
               {R({7}), R({4, 3}), R({7}, 0, 1), R({4, 3})}});
  c.push_back({"spmm_pair_scalar_tau",
               [](Tape& t, const auto& v) { return spmm_pair(t, v[0], v[1], v[2], v[3], edges); },
               {R({7}), R({4, 3}), R({}, 0, 1), R({4, 3})}});

  const double mix = 0.2 + 0.6 * u(rng);
  c.push_back({"spectral_parts",
               [mix](Tape& t, const auto& v) {
                 const SpectralParts p = spectral_parts(t, v[0]);
                 return add(t, p.positive, scale(t, p.negative, mix));
               },
               {random_raw_weight(6, rng)}});
  c.push_back({"eig_rescaled_apply",
               [](Tape& t, const auto& v) { return eig_rescaled_apply(t, v[0], v[1], v[2]); },
               {random_raw_weight(6, rng), R({6}), R({}, 0.2, 0.8)}});
  c.push_back({"eig_rescaled_apply_batch",
               [](Tape& t, const auto& v) { return eig_rescaled_apply(t, v[0], v[1], v[2]); },
               {random_raw_weight(5, rng), R({3, 5}), R({}, 0.2, 0.8)}});
  c.push_back({"tau_pos", [](Tape& t, const auto& v) { return tau(t, v[0], v[1], 1.0); },
               {R({}, -0.9, 0.9), R({}, 0.1, 2.0)}});
  c.push_back({"tau_neg", [](Tape& t, const auto& v) { return tau(t, v[0], v[1], -1.0); },
               {R({}, -0.9, 0.9), R({}, 0.1, 2.0)}});
  c.push_back({"soft_psd_message",
               [](Tape& t, const auto& v) {
                 return soft_psd_message(t, v[0], v[1], -1.0, v[2], v[3]);
               },
               {random_raw_weight(5, rng), R({}), R({5}), R({5})}});

  static const std::vector<int> labels{0, 2, 1, 2, 0};
  static const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};
  c.push_back({"cross_entropy",
               [](Tape& t, const auto& v) { return cross_entropy(t, v[0], labels, mask); },
               {R({5, 3}, -2, 2)}});
  static const std::vector<double> targets{0.0, 1.0, 0.3, 1.0, 0.0};
  c.push_back({"binary_ce",
               [](Tape& t, const auto& v) { return binary_ce(t, v[0], targets, mask); },
               {R({5}, -2, 2)}});
  return c;
}

inline const std::vector<std::pair<Arch, ModelKind>>& all_layer_kinds() {
  static const std::vector<std::pair<Arch, ModelKind>> kinds{
      {Arch::sage, ModelKind::cmp},           {Arch::gat, ModelKind::cmp},
      {Arch::sage, ModelKind::standard},      {Arch::gat, ModelKind::standard},
      {Arch::sage, ModelKind::unconstrained}, {Arch::gat, ModelKind::unconstrained},
  };
  return kinds;
}

inline ModelSpec small_spec(Arch arch, ModelKind kind, std::size_t in = 3, std::size_t hidden = 4,
                            std::size_t out = 3) {
  ModelSpec s;
  s.in_dim = in;
  s.hidden_dim = hidden;
  s.out_dim = out;
  s.arch = arch;
  s.kind = kind;
  return s;
}

/// Scalar training objective used by the composite gradient checks.
inline Var model_loss(Tape& t, const Model& m, const MessageGraph& mg, const Graph& g,
                      Model::Forward* fwd = nullptr) {
  const Model::Forward f = m.forward(t, mg, g.features);
  if (fwd) *fwd = f;
  const std::vector<std::uint8_t> all(g.num_nodes, 1);
  Var loss = cross_entropy(t, f.logits, g.labels, all);
  if (m.spec().kind == ModelKind::cl) {
    loss = add(t, loss, scale(t, contrastive_loss(t, f.embeddings, mg), m.spec().cl_loss_weight));
  }
  return loss;
}

/// Finite-difference check over every parameter scalar of a model.
inline GradCheck model_grad_check(Model& m, const Graph& g, double step = 1e-5) {
  const MessageGraph mg = make_message_graph(g);
  std::vector<Tensor> analytic;
  {
    Tape t;
    Model::Forward f;
    t.backward(model_loss(t, m, mg, g, &f));
    for (Var p : f.params) analytic.push_back(t.grad(p));
  }
  auto loss_value = [&] {
    Tape t;
    return t.value(model_loss(t, m, mg, g)).item();
  };
  GradCheck out;
  auto& params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    double diff = 0.0, sa = 0.0, sn = 0.0;
    for (std::size_t k = 0; k < params[i].value.size(); ++k) {
      const double x0 = params[i].value[k];
      params[i].value[k] = x0 + step;
      const double up = loss_value();
      params[i].value[k] = x0 - step;
      const double down = loss_value();
      params[i].value[k] = x0;
      const double numeric = (up - down) / (2.0 * step);
      diff = std::max(diff, std::abs(numeric - analytic[i][k]));
      sa = std::max(sa, std::abs(analytic[i][k]));
      sn = std::max(sn, std::abs(numeric));
    }
    const double rel = diff / std::max({sa, sn, 1e-7});
    if (rel > out.max_rel_error) {
      out.max_rel_error = rel;
      out.worst_input = i;
    }
  }
  return out;
}

/// Checks one message-passing layer: gradients w.r.t. the input features and
/// every parameter the layer touches.
inline GradCheck layer_grad_check(const Model& m, const Graph& g, const Tensor& h,
                                  std::uint64_t seed = 11) {
  const MessageGraph mg = make_message_graph(g);
  const std::size_t np = m.parameters().size();
  std::vector<Tensor> inputs{h};
  for (const auto& p : m.parameters()) inputs.push_back(p.value);
  Builder f = [&m, &mg, np](Tape& t, const std::vector<Var>& v) {
    std::vector<Var> params(v.begin() + 1, v.begin() + 1 + static_cast<std::ptrdiff_t>(np));
    return m.mp_layer(t, 0, v[0], mg, params);
  };
  return grad_check(f, std::move(inputs), seed);
}

}  // namespace cmp::testing
