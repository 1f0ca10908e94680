#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmp/graph.hpp"
#include "cmp/nn.hpp"
#include "cmp/train.hpp"

namespace cmp {

/// Everything shared by the cells of one experiment.
struct ExperimentSettings {
  SbmConfig sbm;    // p_out and seed are overridden per cell
  ModelSpec model;  // arch and kind are overridden per cell; dims follow the graph
  TrainConfig train;
  /// Regenerate graph and features from each run's seed. When false every
  /// run uses the graph drawn from sbm.seed.
  bool regenerate_graph_per_seed = true;
  /// Negative edges per graph; defaults to the number of positive edges.
  std::optional<std::size_t> negative_count;
  /// Keep the best-validation embeddings of every run.
  bool keep_embeddings = false;
};

struct CellSpec {
  std::string experiment;
  double label_rate = 0.01;
  double p_out = 0.05;
  Arch arch = Arch::sage;
  ModelKind kind = ModelKind::cmp;
  std::uint64_t seed = 42;
};

struct CellResult {
  CellSpec cell;
  RunMetrics metrics;
  bool aborted = false;
  int abort_epoch = 0;
  std::string error;
  std::vector<std::string> warnings;
  std::vector<Parameter> best_params;
  std::optional<Tensor> embeddings;
  std::vector<int> labels;
};

/// The graph a cell trains on: SBM with the cell's p_out, negatives sampled
/// from the same seed.
Graph cell_graph(const ExperimentSettings& s, const CellSpec& c);

/// Trains one cell. With `fixed` the SBM is not generated; negatives are
/// sampled only when the graph has none. Training aborts are captured in the
/// result; configuration errors throw.
CellResult run_cell(const ExperimentSettings& s, const CellSpec& c, const Graph* fixed = nullptr);

/// Runs every cell on up to `jobs` threads. The result order follows `cells`.
std::vector<CellResult> run_cells(const ExperimentSettings& s, const std::vector<CellSpec>& cells,
                                  std::size_t jobs, const Graph* fixed = nullptr);

/// Cross product in (label_rate, p_out, arch, kind, seed) order.
std::vector<CellSpec> make_cells(const std::string& experiment,
                                 const std::vector<double>& label_rates,
                                 const std::vector<double>& p_outs,
                                 const std::vector<Arch>& archs,
                                 const std::vector<ModelKind>& kinds,
                                 const std::vector<std::uint64_t>& seeds);

/// "cmp", "standard", ... for SAGE; "gat_cmp", ... for GAT.
std::string model_label(Arch arch, ModelKind kind);

/// Aggregate CSV:
/// experiment,label_rate,model,seed,test_acc,best_val_epoch,wall_time_s,arch,p_out
/// Rows are sorted, so the file does not depend on completion order. Aborted
/// runs are omitted. Wall time is left empty unless requested.
std::string aggregate_csv(const std::vector<CellResult>& results, bool include_wall_time);

struct GroupSummary {
  std::string experiment;
  Arch arch = Arch::sage;
  ModelKind kind = ModelKind::cmp;
  double label_rate = 0.0;
  double p_out = 0.0;
  SeedAggregate test_acc;
  std::size_t aborted = 0;
};

/// Median / quartiles of test accuracy over seeds for each
/// (experiment, arch, kind, label_rate, p_out) group, in sorted order.
/// Aborted runs are skipped and counted.
std::vector<GroupSummary> summarize(const std::vector<CellResult>& results);

/// CSV experiment,model,arch,label_rate,p_out,median,q25,q75,runs,aborted.
std::string summary_csv(const std::vector<GroupSummary>& groups);

/// File-name stem unique to a cell, e.g. labels_r0.01_pout0.05_gat_cmp_s42.
std::string cell_stem(const CellSpec& c);

}  // namespace cmp
