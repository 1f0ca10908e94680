#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cmp/autodiff.hpp"
#include "cmp/eig.hpp"
#include "cmp/graph.hpp"
#include "cmp/tensor.hpp"

namespace cmp {

enum class Arch { sage, gat };
/// cl trains the standard layers with an auxiliary contrastive loss.
enum class ModelKind { cmp, standard, unconstrained, cl };
enum class LayerKind {
  sage_cmp,
  gat_cmp,
  sage_standard,
  gat_standard,
  sage_unconstrained,
  gat_unconstrained,
};
enum class Aggregation { mean, sum };

std::string to_string(Arch a);
std::string to_string(ModelKind k);
std::string to_string(LayerKind k);
std::string to_string(Aggregation a);
/// Inverse of to_string; throw std::invalid_argument on unknown names.
Arch parse_arch(const std::string& s);
ModelKind parse_model_kind(const std::string& s);
Aggregation parse_aggregation(const std::string& s);

LayerKind layer_kind(Arch arch, ModelKind kind) noexcept;
bool uses_negative_edges(LayerKind k) noexcept;

struct ModelSpec {
  std::size_t in_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 10;
  int num_layers = 2;
  double leaky_slope = 0.2;
  Arch arch = Arch::sage;
  ModelKind kind = ModelKind::cmp;
  Aggregation aggregation = Aggregation::mean;
  double cl_loss_weight = 1.0;
  /// Replaces the similarity-dependent tau with a constant in [0, 1]
  /// (0 is the strict PSD projection). Only meaningful for cmp.
  std::optional<double> fixed_tau;
  double layer_norm_eps = 1e-5;

  LayerKind layer() const noexcept { return layer_kind(arch, kind); }
  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
};

/// Graph prepared for message passing: directed edge indices grouped by
/// target plus the per-edge aggregation coefficients.
struct MessageGraph {
  std::size_t num_nodes = 0;
  EdgeIndex pos;
  EdgeIndex neg;
  bool has_neg = false;
  /// pos plus one self-loop per node (attention layers).
  EdgeIndex pos_self;
  std::vector<double> pos_mean_coef;  // 1 / |N_pos(dst)|
  std::vector<double> neg_mean_coef;  // 1 / |N_neg(dst)|
};

MessageGraph make_message_graph(const Graph& g);

/// tau = sigmoid(sign * c * (1 + beta)).
Var tau(Tape& t, Var cosine, Var beta, double sign);

/// Single-edge soft-PSD message: the rescaled Soft-PSD(w_raw) applied to h_j,
/// with tau computed from c(h_i, h_j). beta_raw is the unconstrained
/// parameter (beta = softplus(beta_raw)).
Var soft_psd_message(Tape& t, Var w_raw, Var beta_raw, double sign, Var h_i, Var h_j,
                     std::shared_ptr<const EigPair> cached = nullptr);

/// Mean over positive edges of softplus(-h_i.h_j) plus mean over negative
/// edges of softplus(h_i.h_k).
Var contrastive_loss(Tape& t, Var h, const MessageGraph& mg);

class Model {
 public:
  /// Parameters are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases are
  /// zero, layer-norm gains one, beta initialised to 1.
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;

  struct Forward {
    Var logits;      // n x out_dim
    Var embeddings;  // n x hidden, output of the last message-passing block
    std::vector<Var> params;  // parallel to parameters()
  };

  /// Records the full forward pass on `t`. Features are constants.
  Forward forward(Tape& t, const MessageGraph& mg, const Tensor& features) const;

  /// Records a single message-passing layer (without residual/norm) on
  /// externally supplied handles; `params` is parallel to parameters().
  Var mp_layer(Tape& t, int layer, Var h, const MessageGraph& mg,
               const std::vector<Var>& params) const;

  std::size_t num_scalars() const noexcept;

 private:
  std::size_t index_of(const std::string& name) const;
  std::shared_ptr<const EigPair> eig_for(std::size_t param_index, const Tensor& raw) const;

  ModelSpec spec_;
  std::vector<Parameter> params_;
  // Eigendecompositions keyed by the raw value they were computed from, so
  // any write to a parameter invalidates its entry.
  struct EigCacheEntry {
    Tensor raw;
    std::shared_ptr<const EigPair> eig;
  };
  mutable std::vector<EigCacheEntry> eig_cache_;
};

}  // namespace cmp
