#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmp/experiment.hpp"
#include "cmp/graph.hpp"
#include "cmp/info_theory.hpp"
#include "cmp/nn.hpp"
#include "cmp/train.hpp"

namespace cmp::cli {

/// Bad config file, unknown key, wrong type or out-of-range value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optional on-disk graph used instead of a generated SBM.
struct DataFiles {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path neg_edges;

  bool empty() const { return edges.empty(); }
};

struct Config {
  SbmConfig sbm{1000, 10, 0.25, 0.05, 32, 42};
  GridSpec theory;
  bool theory_totals = false;

  ModelSpec model;
  std::vector<ModelKind> kinds{ModelKind::cmp, ModelKind::standard, ModelKind::unconstrained,
                               ModelKind::cl};
  std::vector<Arch> archs{Arch::sage};

  TrainConfig train;
  double label_rate = 0.01;  // train and dump-embeddings

  std::vector<double> label_rates{0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
  std::vector<double> p_outs{0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2};
  double heterophily_label_rate = 0.2;
  bool regenerate_graph_per_seed = true;
  std::optional<std::size_t> negative_count;

  DataFiles data;
  bool wall_time = false;

  /// Range and consistency checks; throws ConfigError.
  void validate() const;
  ExperimentSettings experiment() const;
};

/// Small CI-sized setup: n=300, C=5, hidden 32, 3 seeds.
void apply_preset(Config& c, const std::string& name);

/// Overlays a JSON document on `c`. Unknown keys and type mismatches throw
/// ConfigError naming the offending key.
void merge_json(Config& c, const std::string& text);
Config load_config(const std::filesystem::path& path, Config base);

/// Fully materialised config; merge_json(Config{}, to_json(c)) == c.
std::string to_json(const Config& c);

}  // namespace cmp::cli
