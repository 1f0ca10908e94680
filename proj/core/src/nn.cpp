#include "cmp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cmp {

std::string to_string(Arch a) { return a == Arch::sage ? "sage" : "gat"; }

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cmp: return "cmp";
    case ModelKind::standard: return "standard";
    case ModelKind::unconstrained: return "unconstrained";
    case ModelKind::cl: return "cl";
  }
  return "?";
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::sage_cmp: return "sage_cmp";
    case LayerKind::gat_cmp: return "gat_cmp";
    case LayerKind::sage_standard: return "sage_standard";
    case LayerKind::gat_standard: return "gat_standard";
    case LayerKind::sage_unconstrained: return "sage_unconstrained";
    case LayerKind::gat_unconstrained: return "gat_unconstrained";
  }
  return "?";
}

std::string to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "sum"; }

Arch parse_arch(const std::string& s) {
  if (s == "sage") return Arch::sage;
  if (s == "gat") return Arch::gat;
  throw std::invalid_argument("unknown architecture '" + s + "' (expected sage or gat)");
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "cmp") return ModelKind::cmp;
  if (s == "standard") return ModelKind::standard;
  if (s == "unconstrained") return ModelKind::unconstrained;
  if (s == "cl") return ModelKind::cl;
  throw std::invalid_argument("unknown model '" + s +
                              "' (expected cmp, standard, unconstrained or cl)");
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  throw std::invalid_argument("unknown aggregation '" + s + "' (expected mean or sum)");
}

LayerKind layer_kind(Arch arch, ModelKind kind) noexcept {
  const bool sage = arch == Arch::sage;
  switch (kind) {
    case ModelKind::cmp: return sage ? LayerKind::sage_cmp : LayerKind::gat_cmp;
    case ModelKind::unconstrained:
      return sage ? LayerKind::sage_unconstrained : LayerKind::gat_unconstrained;
    case ModelKind::standard:
    case ModelKind::cl: return sage ? LayerKind::sage_standard : LayerKind::gat_standard;
  }
  return LayerKind::sage_standard;
}

bool uses_negative_edges(LayerKind k) noexcept {
  return k != LayerKind::sage_standard && k != LayerKind::gat_standard;
}

void ModelSpec::validate() const {
  if (in_dim == 0 || hidden_dim == 0 || out_dim == 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (num_layers < 0) throw std::invalid_argument("num_layers must be >= 0");
  if (fixed_tau && !(*fixed_tau >= 0.0 && *fixed_tau <= 1.0)) {
    throw std::invalid_argument("fixed_tau must lie in [0, 1]");
  }
  if (cl_loss_weight < 0.0) throw std::invalid_argument("cl_loss_weight must be >= 0");
  if (!(layer_norm_eps > 0.0)) throw std::invalid_argument("layer_norm_eps must be positive");
}

MessageGraph make_message_graph(const Graph& g) {
  MessageGraph mg;
  const std::size_t n = g.num_nodes;
  mg.num_nodes = n;
  auto build = [n](const EdgeList& edges, EdgeIndex& idx, std::vector<double>& coef) {
    idx.num_nodes = n;
    idx.src.reserve(edges.size());
    idx.dst.reserve(edges.size());
    std::vector<double> deg(n, 0.0);
    // Edges are sorted by their first endpoint, which becomes the target.
    for (const auto& [a, b] : edges) {
      idx.dst.push_back(a);
      idx.src.push_back(b);
      deg[a] += 1.0;
    }
    coef.reserve(edges.size());
    for (std::uint32_t d : idx.dst) coef.push_back(1.0 / deg[d]);
  };
  build(g.pos_edges, mg.pos, mg.pos_mean_coef);
  if (g.neg_edges) {
    build(*g.neg_edges, mg.neg, mg.neg_mean_coef);
    mg.has_neg = true;
  } else {
    mg.neg.num_nodes = n;
  }
  mg.pos_self.num_nodes = n;
  std::size_t e = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    while (e < mg.pos.size() && mg.pos.dst[e] == i) {
      mg.pos_self.dst.push_back(i);
      mg.pos_self.src.push_back(mg.pos.src[e]);
      ++e;
    }
    mg.pos_self.dst.push_back(i);
    mg.pos_self.src.push_back(i);
  }
  return mg;
}

Var tau(Tape& t, Var cosine, Var beta, double sign) {
  return sigmoid(t, mul(t, scale(t, cosine, sign), add_scalar(t, beta, 1.0)));
}

Var soft_psd_message(Tape& t, Var w_raw, Var beta_raw, double sign, Var h_i, Var h_j,
                     std::shared_ptr<const EigPair> cached) {
  const Var c = cosine_similarity(t, h_i, h_j);
  const Var tv = tau(t, c, softplus(t, beta_raw), sign);
  return eig_rescaled_apply(t, w_raw, h_j, tv, std::move(cached));
}

Var contrastive_loss(Tape& t, Var h, const MessageGraph& mg) {
  if (mg.pos.size() == 0 || !mg.has_neg || mg.neg.size() == 0) {
    throw std::invalid_argument("contrastive loss needs positive and negative edges");
  }
  const Var pos = mean(t, softplus(t, scale(t, edge_dot(t, h, mg.pos), -1.0)));
  const Var neg = mean(t, softplus(t, edge_dot(t, h, mg.neg)));
  return add(t, pos, neg);
}

// ---------------------------------------------------------------------------
// Model

namespace {

const double kBetaRawInit = std::log(std::expm1(1.0));  // softplus(x) = 1

std::string layer_prefix(int l) { return "mp" + std::to_string(l) + "."; }

// How a neighbor weight turns into per-edge messages.
enum class WeightMode {
  plain,      // H W
  symmetric,  // H sym(W)
  soft_psd,   // H P + tau_e H N
};

// Node-level products for one weight and one edge set. With soft_psd the
// per-edge matrix is P + tau_e N, so messages and attention scores reduce to
// node-level products combined per edge.
struct Prepared {
  bool split = false;
  Var full;     // H A (plain / symmetric)
  Var hp;       // H P
  Var hn;       // H N (invalid when tau is identically 0)
  Var tau_vec;  // per-edge tau, or a scalar constant
};

}  // namespace

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(seed, 10));
  auto uniform = [&](std::string name, Tensor::Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor v(std::move(shape));
    for (double& x : v.data()) x = dist(rng);
    params_.push_back({std::move(name), std::move(v)});
  };
  auto fill = [&](std::string name, Tensor::Shape shape, double value) {
    params_.push_back({std::move(name), Tensor(std::move(shape), value)});
  };

  const std::size_t h = spec_.hidden_dim;
  const LayerKind kind = spec_.layer();
  const bool sage = spec_.arch == Arch::sage;
  const bool neg = uses_negative_edges(kind);
  const bool learn_beta = spec_.kind == ModelKind::cmp && !spec_.fixed_tau;

  uniform("lift.weight", {spec_.in_dim, h}, spec_.in_dim);
  fill("lift.bias", {h}, 0.0);
  for (int l = 0; l < spec_.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    if (sage) uniform(p + "self", {h, h}, h);
    uniform(p + "pos.weight", {h, h}, h);
    if (learn_beta) fill(p + "pos.beta_raw", {}, kBetaRawInit);
    if (!sage) {
      uniform(p + "pos.att_dst", {h}, h);
      uniform(p + "pos.att_src", {h}, h);
    }
    if (neg) {
      uniform(p + "neg.weight", {h, h}, h);
      if (learn_beta) fill(p + "neg.beta_raw", {}, kBetaRawInit);
      if (!sage) {
        uniform(p + "neg.att_dst", {h}, h);
        uniform(p + "neg.att_src", {h}, h);
      }
    }
    fill(p + "norm.gain", {h}, 1.0);
    fill(p + "norm.bias", {h}, 0.0);
  }
  uniform("proj.weight", {h, spec_.out_dim}, h);
  fill("proj.bias", {spec_.out_dim}, 0.0);
  eig_cache_.resize(params_.size());
}

std::size_t Model::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

Parameter& Model::parameter(const std::string& name) { return params_[index_of(name)]; }
const Parameter& Model::parameter(const std::string& name) const {
  return params_[index_of(name)];
}

std::size_t Model::num_scalars() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::shared_ptr<const EigPair> Model::eig_for(std::size_t idx, const Tensor& raw) const {
  EigCacheEntry& e = eig_cache_[idx];
  if (e.eig && e.raw == raw) return e.eig;
  const std::size_t d = raw.rows();
  Tensor a = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = 0.5 * (raw(i, j) + raw(j, i));
  e.eig = std::make_shared<const EigPair>(symmetric_eig(a));
  e.raw = raw;
  return e.eig;
}

Var Model::mp_layer(Tape& t, int layer, Var h, const MessageGraph& mg,
                    const std::vector<Var>& params) const {
  const LayerKind kind = spec_.layer();
  const bool sage = spec_.arch == Arch::sage;
  const bool neg = uses_negative_edges(kind);
  if (neg && !mg.has_neg) {
    throw std::invalid_argument(to_string(kind) + " needs sampled negative edges");
  }
  const std::string p = layer_prefix(layer);
  auto param = [&](const std::string& name) { return params.at(index_of(p + name)); };

  WeightMode mode = WeightMode::plain;
  if (spec_.kind == ModelKind::unconstrained) mode = WeightMode::symmetric;
  if (spec_.kind == ModelKind::cmp) {
    // tau == 1 leaves every eigenvalue unchanged: use the symmetric path
    // directly so the result matches the unconstrained layer exactly.
    mode = spec_.fixed_tau && *spec_.fixed_tau == 1.0 ? WeightMode::symmetric
                                                      : WeightMode::soft_psd;
  }

  auto prepare = [&](const std::string& side, double sign, const EdgeIndex& edges) {
    Prepared out;
    const Var w = param(side + ".weight");
    if (mode == WeightMode::plain) {
      out.full = matmul(t, h, w);
      return out;
    }
    if (mode == WeightMode::symmetric) {
      out.full = matmul(t, h, symmetrize(t, w));
      return out;
    }
    out.split = true;
    const SpectralParts parts = spectral_parts(t, w, eig_for(index_of(p + side + ".weight"), t.value(w)));
    out.hp = matmul(t, h, parts.positive);
    if (spec_.fixed_tau) {
      if (*spec_.fixed_tau != 0.0) {
        out.hn = matmul(t, h, parts.negative);
        out.tau_vec = t.constant(Tensor::scalar(*spec_.fixed_tau));
      }
      return out;
    }
    out.hn = matmul(t, h, parts.negative);
    const Var beta = softplus(t, param(side + ".beta_raw"));
    out.tau_vec = tau(t, edge_cosine(t, h, edges), beta, sign);
    return out;
  };

  auto messages = [&](const Prepared& pr, Var coef, const EdgeIndex& edges) {
    if (!pr.split) return spmm(t, coef, pr.full, edges);
    if (!pr.hn.valid()) return spmm(t, coef, pr.hp, edges);
    return spmm_pair(t, coef, pr.hp, pr.tau_vec, pr.hn, edges);
  };

  auto scores = [&](const Prepared& pr, const std::string& side, const EdgeIndex& edges) {
    const Var a_dst = param(side + ".att_dst");
    const Var a_src = param(side + ".att_src");
    if (!pr.split) {
      const Var s = edge_sum(t, matmul(t, pr.full, a_dst), matmul(t, pr.full, a_src), edges);
      return leaky_relu(t, s, spec_.leaky_slope);
    }
    Var s = edge_sum(t, matmul(t, pr.hp, a_dst), matmul(t, pr.hp, a_src), edges);
    if (pr.hn.valid()) {
      const Var sn = edge_sum(t, matmul(t, pr.hn, a_dst), matmul(t, pr.hn, a_src), edges);
      s = add(t, s, mul(t, pr.tau_vec, sn));
    }
    return leaky_relu(t, s, spec_.leaky_slope);
  };

  auto agg_coef = [&](const std::vector<double>& mean_coef) {
    if (spec_.aggregation == Aggregation::sum) {
      return t.constant(Tensor({mean_coef.size()}, 1.0));
    }
    return t.constant(Tensor::vector(mean_coef));
  };

  if (sage) {
    Var out = matmul(t, h, param("self"));
    const Prepared pos = prepare("pos", 1.0, mg.pos);
    out = add(t, out, messages(pos, agg_coef(mg.pos_mean_coef), mg.pos));
    if (neg) {
      const Prepared ng = prepare("neg", -1.0, mg.neg);
      out = sub(t, out, messages(ng, agg_coef(mg.neg_mean_coef), mg.neg));
    }
    return out;
  }

  const Prepared pos = prepare("pos", 1.0, mg.pos_self);
  const Var alpha_pos =
      segment_softmax(t, scores(pos, "pos", mg.pos_self), mg.pos_self.dst, mg.num_nodes);
  Var out = messages(pos, alpha_pos, mg.pos_self);
  if (neg) {
    const Prepared ng = prepare("neg", -1.0, mg.neg);
    const Var alpha_neg = segment_softmax(t, scores(ng, "neg", mg.neg), mg.neg.dst, mg.num_nodes);
    out = sub(t, out, messages(ng, alpha_neg, mg.neg));
  }
  return out;
}

Model::Forward Model::forward(Tape& t, const MessageGraph& mg, const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != spec_.in_dim || features.rows() != mg.num_nodes) {
    throw ShapeError("model expects features " + std::to_string(mg.num_nodes) + " x " +
                     std::to_string(spec_.in_dim) + ", got " + features.shape_string());
  }
  Forward f;
  f.params.reserve(params_.size());
  for (const auto& p : params_) f.params.push_back(t.leaf(p.value));
  auto param = [&](const std::string& name) { return f.params[index_of(name)]; };

  const Var x = t.constant(features);
  Var h = add_row_bias(t, matmul(t, x, param("lift.weight")), param("lift.bias"));
  for (int l = 0; l < spec_.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    const Var msg = mp_layer(t, l, h, mg, f.params);
    const Var z = layer_norm(t, add(t, h, msg), param(p + "norm.gain"), param(p + "norm.bias"),
                             spec_.layer_norm_eps);
    h = leaky_relu(t, z, spec_.leaky_slope);
  }
  f.embeddings = h;
  f.logits = add_row_bias(t, matmul(t, h, param("proj.weight")), param("proj.bias"));
  return f;
}

}  // namespace cmp
