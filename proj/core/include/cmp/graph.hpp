#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmp/tensor.hpp"

namespace cmp {

/// Directed pair (source, target).
using EdgePair = std::pair<std::uint32_t, std::uint32_t>;
using EdgeList = std::vector<EdgePair>;

/// Node-classification graph with positive (observed) and negative (sampled
/// non-)edges. Both edge lists are stored symmetrized and sorted: (i, j) is
/// present iff (j, i) is, with no self-loops or duplicates.
struct Graph {
  std::size_t num_nodes = 0;
  Tensor features;  // n x f
  std::vector<int> labels;
  EdgeList pos_edges;
  /// nullopt until negatives are sampled or loaded.
  std::optional<EdgeList> neg_edges;

  int num_classes() const;
  std::size_t num_undirected_pos() const noexcept { return pos_edges.size() / 2; }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

struct SbmConfig {
  std::size_t n = 1000;
  int num_classes = 10;
  double p_in = 0.25;
  double p_out = 0.05;
  std::size_t feat_dim = 32;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument. p_out > p_in is accepted (heterophily).
  void validate() const;
};

struct Split {
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> val_mask;
  std::vector<std::uint8_t> test_mask;
  double label_rate = 0.0;
  /// Non-fatal notes, e.g. a class without training nodes.
  std::vector<std::string> warnings;

  std::size_t train_count() const;
  std::size_t val_count() const;
  std::size_t test_count() const;
};

struct GraphStats {
  double homophily_ratio = 0.0;
  double density = 0.0;
  double avg_degree = 0.0;
  double clustering_coef = 0.0;
  double modularity = 0.0;
  double intra_inter_ratio = 0.0;  // +inf when there are no inter-label edges
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;  // undirected
};

/// Deterministic 64-bit seed for sub-stream `stream` of `base` (splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// Sorted, symmetrized copy of an undirected edge set. Self-loops are dropped.
EdgeList symmetrize_edges(const EdgeList& edges);

/// Pairs (u, v) with u < v from a symmetrized list.
EdgeList undirected_edges(const EdgeList& symmetric);

Graph generate_sbm(const SbmConfig& cfg);

/// SBM config whose expected homophily ratio and edge density are (s, d):
/// p_in = s*C*d, p_out = (1-s)*C*d/(C-1). Throws std::invalid_argument when
/// either probability leaves [0, 1].
SbmConfig sbm_from_theory(double s, double d, int num_classes, std::size_t n,
                          std::size_t feat_dim, std::uint64_t seed);

/// Uniform sample without replacement of unordered non-adjacent, non-self
/// pairs; count defaults to the number of undirected positive edges.
/// Throws std::invalid_argument when the complement is too small.
Graph sample_negative_edges(Graph g, std::optional<std::size_t> count, std::uint64_t seed);

/// Stratified training sample of round(r * n) nodes; of the rest, 25% go to
/// validation and 75% to test.
Split make_split(const Graph& g, double label_rate, std::uint64_t seed);

GraphStats compute_stats(const Graph& g);

/// Reads an edge list ("u v" per line, '#' comments allowed), a headerless
/// feature CSV and a one-column label CSV. The node count is the number of
/// feature rows. Self-loops in the edge file are dropped. `neg_edge_file`,
/// when non-empty, is read like the edge file.
Graph load_graph(const std::filesystem::path& edge_file,
                 const std::filesystem::path& feature_file,
                 const std::filesystem::path& label_file,
                 const std::filesystem::path& neg_edge_file = {});

/// Writes edges.txt, features.csv, labels.csv and (when sampled)
/// neg_edges.txt into `dir`. Edge files list each undirected pair once.
void save_graph(const Graph& g, const std::filesystem::path& dir);

}  // namespace cmp
