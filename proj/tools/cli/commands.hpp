#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "config.hpp"

namespace cmp::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kEmptyResult = 3, kRunFailure = 4 };

struct Context {
  Config config;
  std::filesystem::path out = "results";
  std::size_t jobs = 1;
  std::ostream* log = nullptr;
  std::ostream* err = nullptr;
};

/// theory.csv; with check_trends, also fails (exit 4) on any trend violation.
int cmd_theory(const Context& ctx, bool trends);
/// edges.txt, neg_edges.txt, features.csv, labels.csv, stats.json.
int cmd_sbm(const Context& ctx);
/// stats.json for the configured data files or the generated SBM.
int cmd_stats(const Context& ctx);
/// Every configured (arch, kind, seed) at train.label_rate.
int cmd_train(const Context& ctx, bool dump_embeddings, bool save_params);
int cmd_sweep_labels(const Context& ctx);
int cmd_sweep_heterophily(const Context& ctx);
/// With `params`: embeddings.csv for one checkpoint. Without: trains like
/// `train` and writes every run's embeddings.
int cmd_dump_embeddings(const Context& ctx, const std::filesystem::path& params);

/// Full entry point (argument parsing, config loading, error mapping).
int run_cli(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace cmp::cli
