#include "commands.hpp"

#include <cmath>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "cmp/checkpoint.hpp"
#include "cmp/csv.hpp"
#include "cmp/experiment.hpp"
#include "cmp/info_theory.hpp"
#include "json.hpp"

namespace cmp::cli {
namespace {

using nlohmann::ordered_json;

void write_config(const Context& ctx) { write_text_file(ctx.out / "config.json", to_json(ctx.config)); }

std::ostream& log(const Context& ctx) { return *ctx.log; }
std::ostream& err(const Context& ctx) { return *ctx.err; }

Graph load_data(const DataFiles& d) {
  try {
    return load_graph(d.edges, d.features, d.labels, d.neg_edges);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot load graph: ") + e.what());
  }
}

// The configured data files, or the SBM drawn from sbm.seed.
Graph base_graph(const Config& c) {
  if (!c.data.empty()) {
    Graph g = load_data(c.data);
    if (!g.neg_edges) g = sample_negative_edges(std::move(g), c.negative_count, c.sbm.seed);
    return g;
  }
  try {
    return sample_negative_edges(generate_sbm(c.sbm), c.negative_count, c.sbm.seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string stats_json(const Graph& g) {
  const GraphStats s = compute_stats(g);
  ordered_json j;
  j["num_nodes"] = s.num_nodes;
  j["num_edges"] = s.num_edges;
  j["num_negative_edges"] = g.neg_edges ? g.neg_edges->size() / 2 : 0;
  j["num_classes"] = g.num_classes();
  j["homophily_ratio"] = s.homophily_ratio;
  j["density"] = s.density;
  j["avg_degree"] = s.avg_degree;
  j["clustering_coef"] = s.clustering_coef;
  j["modularity"] = s.modularity;
  // JSON has no infinity; null means there are no inter-label edges.
  j["intra_inter_ratio"] =
      std::isfinite(s.intra_inter_ratio) ? ordered_json(s.intra_inter_ratio) : ordered_json();
  return j.dump(2) + "\n";
}

std::string run_json(const CellResult& r, bool wall_time) {
  ordered_json j;
  j["experiment"] = r.cell.experiment;
  j["model"] = model_label(r.cell.arch, r.cell.kind);
  j["arch"] = to_string(r.cell.arch);
  j["kind"] = to_string(r.cell.kind);
  j["label_rate"] = r.cell.label_rate;
  j["p_out"] = r.cell.p_out;
  j["aborted"] = r.aborted;
  if (r.aborted) {
    j["abort_epoch"] = r.abort_epoch;
    j["error"] = r.error;
  }
  j["warnings"] = r.warnings;
  const ordered_json metrics = ordered_json::parse(metrics_json(r.metrics, wall_time));
  for (const auto& [k, v] : metrics.items()) j[k] = v;
  return j.dump(2) + "\n";
}

int finish_runs(const Context& ctx, const std::vector<CellResult>& results) {
  const Config& c = ctx.config;
  for (const auto& r : results) {
    write_text_file(ctx.out / "runs" / (cell_stem(r.cell) + ".json"), run_json(r, c.wall_time));
  }
  write_text_file(ctx.out / "results.csv", aggregate_csv(results, c.wall_time));
  const auto groups = summarize(results);
  write_text_file(ctx.out / "summary.csv", summary_csv(groups));

  std::size_t aborted = 0;
  for (const auto& r : results) {
    if (!r.aborted) continue;
    ++aborted;
    err(ctx) << "warning: " << cell_stem(r.cell) << " aborted at epoch " << r.abort_epoch << ": "
             << r.error << "\n";
  }
  for (const auto& g : groups) {
    log(ctx) << g.experiment << " " << model_label(g.arch, g.kind) << " r=" << format_double(g.label_rate)
             << " p_out=" << format_double(g.p_out) << " median " << format_double(g.test_acc.median)
             << " [" << format_double(g.test_acc.q25) << ", " << format_double(g.test_acc.q75)
             << "] over " << g.test_acc.count << " runs\n";
  }
  if (aborted > 0) {
    err(ctx) << aborted << " of " << results.size() << " runs aborted\n";
    return kRunFailure;
  }
  return kOk;
}

std::vector<CellResult> run(const Context& ctx, const std::vector<CellSpec>& cells,
                            bool keep_embeddings) {
  ExperimentSettings s = ctx.config.experiment();
  s.keep_embeddings = keep_embeddings;
  std::optional<Graph> fixed;
  if (!ctx.config.data.empty()) fixed = load_data(ctx.config.data);
  log(ctx) << "running " << cells.size() << " runs on " << ctx.jobs << " worker(s)\n";
  try {
    return run_cells(s, cells, ctx.jobs, fixed ? &*fixed : nullptr);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<CellSpec> train_cells(const Config& c) {
  return make_cells("train", {c.label_rate}, {c.sbm.p_out}, c.archs, c.kinds, c.train.seeds);
}

void write_run_embeddings(const Context& ctx, const std::vector<CellResult>& results) {
  for (const auto& r : results) {
    if (r.aborted || !r.embeddings) continue;
    write_embeddings(ctx.out / "embeddings" / (cell_stem(r.cell) + ".csv"), *r.embeddings, r.labels);
  }
}

}  // namespace

int cmd_theory(const Context& ctx, bool trends) {
  write_config(ctx);
  const SweepResult sweep = sweep_grid(ctx.config.theory);
  write_text_file(ctx.out / "theory.csv", sweep_csv(sweep, ctx.config.theory_totals));
  log(ctx) << sweep.rows.size() << " grid points, " << sweep.skipped.size() << " skipped\n";
  for (const auto& s : sweep.skipped) {
    err(ctx) << "skipped s=" << format_double(s.s) << " r=" << format_double(s.r)
             << " d=" << format_double(s.d) << ": " << s.reason << "\n";
  }
  if (!trends) return kOk;
  const auto bad = cmp::check_trends(sweep, ctx.config.theory);
  for (const auto& v : bad) {
    err(ctx) << "trend violated (" << v.trend << ") between (s=" << format_double(v.from.s)
             << ", r=" << format_double(v.from.r) << ", d=" << format_double(v.from.d)
             << ") and (s=" << format_double(v.to.s) << ", r=" << format_double(v.to.r)
             << ", d=" << format_double(v.to.d) << ")\n";
  }
  log(ctx) << "trend check: " << bad.size() << " violation(s)\n";
  return bad.empty() ? kOk : kRunFailure;
}

int cmd_sbm(const Context& ctx) {
  write_config(ctx);
  const Graph g = base_graph(ctx.config);
  save_graph(g, ctx.out);
  write_text_file(ctx.out / "stats.json", stats_json(g));
  log(ctx) << "wrote graph with " << g.num_nodes << " nodes and " << g.num_undirected_pos()
           << " edges to " << ctx.out.string() << "\n";
  return kOk;
}

int cmd_stats(const Context& ctx) {
  write_config(ctx);
  const std::string text = stats_json(base_graph(ctx.config));
  write_text_file(ctx.out / "stats.json", text);
  log(ctx) << text;
  return kOk;
}

int cmd_train(const Context& ctx, bool dump_embeddings, bool save_params) {
  write_config(ctx);
  const auto results = run(ctx, train_cells(ctx.config), dump_embeddings);
  if (dump_embeddings) write_run_embeddings(ctx, results);
  if (save_params) {
    for (const auto& r : results)
      if (!r.aborted) save_parameters(r.best_params, ctx.out / "params" / cell_stem(r.cell));
  }
  return finish_runs(ctx, results);
}

int cmd_sweep_labels(const Context& ctx) {
  write_config(ctx);
  const Config& c = ctx.config;
  const auto cells =
      make_cells("labels", c.label_rates, {c.sbm.p_out}, c.archs, c.kinds, c.train.seeds);
  return finish_runs(ctx, run(ctx, cells, false));
}

int cmd_sweep_heterophily(const Context& ctx) {
  write_config(ctx);
  const Config& c = ctx.config;
  if (!c.data.empty()) throw ConfigError("sweep-heterophily generates its graphs; remove data");
  const auto cells = make_cells("heterophily", {c.heterophily_label_rate}, c.p_outs, c.archs,
                                c.kinds, c.train.seeds);
  return finish_runs(ctx, run(ctx, cells, false));
}

int cmd_dump_embeddings(const Context& ctx, const std::filesystem::path& params) {
  write_config(ctx);
  const Config& c = ctx.config;
  if (params.empty()) {
    const auto results = run(ctx, train_cells(c), true);
    write_run_embeddings(ctx, results);
    return finish_runs(ctx, results);
  }
  if (c.kinds.size() != 1 || c.archs.size() != 1) {
    throw ConfigError("dump-embeddings --params needs exactly one model kind and arch");
  }
  const std::uint64_t seed = c.train.seeds.front();
  const CellSpec cell{"train", c.label_rate, c.sbm.p_out, c.archs.front(), c.kinds.front(), seed};
  const ExperimentSettings s = c.experiment();
  Graph g;
  if (!c.data.empty()) {
    g = load_data(c.data);
    if (!g.neg_edges) g = sample_negative_edges(std::move(g), c.negative_count, seed);
  } else {
    g = cell_graph(s, cell);
  }
  ModelSpec spec = s.model;
  spec.arch = cell.arch;
  spec.kind = cell.kind;
  spec.in_dim = g.features.cols();
  spec.out_dim = static_cast<std::size_t>(g.num_classes());
  Model model(spec, seed);
  try {
    load_into(model, load_parameters(params));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot load parameters: ") + e.what());
  }
  write_embeddings(ctx.out / "embeddings.csv", embed(model, g), g.labels);
  log(ctx) << "wrote " << (ctx.out / "embeddings.csv").string() << "\n";
  return kOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& log_stream, std::ostream& err_stream) {
  CLI::App app{"Contrastive message passing toolkit: theory sweeps, SBM graphs and training"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, out_dir = "results", preset;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "JSON config; unknown keys are rejected");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--preset", preset, "Named defaults applied before the config (small)");
  app.add_option("--jobs", jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
  app.add_option("--seed-override", seed_override, "Use this single seed for graph and runs");

  bool check_trends = false, dump = false, save_params = false;
  std::string params_dir;
  auto* theory = app.add_subcommand("theory", "Information-gain grid sweep");
  theory->add_flag("--check-trends", check_trends, "Fail when a monotone trend is violated");
  auto* sbm = app.add_subcommand("sbm", "Generate an SBM graph with negative edges");
  auto* stats = app.add_subcommand("stats", "Graph characteristics");
  auto* train = app.add_subcommand("train", "Train every configured model over all seeds");
  train->add_flag("--dump-embeddings", dump, "Write last-layer embeddings per run");
  train->add_flag("--save-params", save_params, "Write best-validation parameters per run");
  auto* labels = app.add_subcommand("sweep-labels", "Label-rate sweep");
  auto* hetero = app.add_subcommand("sweep-heterophily", "Inter-community probability sweep");
  auto* emb = app.add_subcommand("dump-embeddings", "Write node embeddings");
  emb->add_option("--params", params_dir, "Parameter directory written by train --save-params");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    log_stream << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err_stream << "error: " << e.what() << "\n" << app.help();
    return kConfigError;
  }

  try {
    Context ctx;
    if (!preset.empty()) apply_preset(ctx.config, preset);
    if (!config_path.empty()) ctx.config = load_config(config_path, ctx.config);
    if (seed_override) {
      ctx.config.train.seeds = {*seed_override};
      ctx.config.sbm.seed = *seed_override;
    }
    ctx.config.validate();
    ctx.out = out_dir;
    ctx.jobs = jobs;
    ctx.log = &log_stream;
    ctx.err = &err_stream;

    if (theory->parsed()) return cmd_theory(ctx, check_trends);
    if (sbm->parsed()) return cmd_sbm(ctx);
    if (stats->parsed()) return cmd_stats(ctx);
    if (train->parsed()) return cmd_train(ctx, dump, save_params);
    if (labels->parsed()) return cmd_sweep_labels(ctx);
    if (hetero->parsed()) return cmd_sweep_heterophily(ctx);
    if (emb->parsed()) return cmd_dump_embeddings(ctx, params_dir);
  } catch (const ConfigError& e) {
    err_stream << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const EmptyGridError& e) {
    err_stream << "empty result: " << e.what() << "\n";
    return kEmptyResult;
  } catch (const DomainError& e) {
    err_stream << "domain error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err_stream << "run failure: " << e.what() << "\n";
    return kRunFailure;
  }
  return kConfigError;
}

}  // namespace cmp::cli
