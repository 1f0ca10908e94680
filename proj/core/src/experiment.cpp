#include "cmp/experiment.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "cmp/csv.hpp"

namespace cmp {
namespace {

using GroupKey = std::tuple<std::string, double, double, std::string>;

GroupKey group_key(const CellSpec& c) {
  return {c.experiment, c.label_rate, c.p_out, model_label(c.arch, c.kind)};
}

bool cell_less(const CellSpec& a, const CellSpec& b) {
  return std::tuple_cat(group_key(a), std::make_tuple(a.seed)) <
         std::tuple_cat(group_key(b), std::make_tuple(b.seed));
}

}  // namespace

std::string model_label(Arch arch, ModelKind kind) {
  return arch == Arch::sage ? to_string(kind) : to_string(arch) + "_" + to_string(kind);
}

std::string cell_stem(const CellSpec& c) {
  std::string out = c.experiment.empty() ? std::string("run") : c.experiment;
  out += "_r" + format_double(c.label_rate);
  out += "_pout" + format_double(c.p_out);
  out += "_" + to_string(c.arch) + "_" + to_string(c.kind);
  out += "_s" + std::to_string(c.seed);
  return out;
}

Graph cell_graph(const ExperimentSettings& s, const CellSpec& c) {
  SbmConfig sbm = s.sbm;
  sbm.p_out = c.p_out;
  if (s.regenerate_graph_per_seed) sbm.seed = c.seed;
  return sample_negative_edges(generate_sbm(sbm), s.negative_count, sbm.seed);
}

CellResult run_cell(const ExperimentSettings& s, const CellSpec& c, const Graph* fixed) {
  Graph g;
  if (fixed) {
    g = *fixed;
    if (!g.neg_edges) g = sample_negative_edges(std::move(g), s.negative_count, c.seed);
  } else {
    g = cell_graph(s, c);
  }
  const Split split = make_split(g, c.label_rate, c.seed);

  ModelSpec spec = s.model;
  spec.arch = c.arch;
  spec.kind = c.kind;
  spec.in_dim = g.features.cols();
  spec.out_dim = static_cast<std::size_t>(g.num_classes());
  Model model(spec, c.seed);

  CellResult out;
  out.cell = c;
  out.warnings = split.warnings;
  try {
    TrainResult r = train(model, g, split, s.train, c.seed);
    out.metrics = std::move(r.metrics);
    out.best_params = std::move(r.best_params);
    if (s.keep_embeddings) {
      model.parameters() = out.best_params;
      out.embeddings = embed(model, g);
      out.labels = g.labels;
    }
  } catch (const TrainingAborted& e) {
    out.aborted = true;
    out.abort_epoch = e.epoch();
    out.error = e.what();
    out.metrics.seed = c.seed;
  }
  return out;
}

std::vector<CellResult> run_cells(const ExperimentSettings& s, const std::vector<CellSpec>& cells,
                                  std::size_t jobs, const Graph* fixed) {
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), jobs,
               [&](std::size_t i) { results[i] = run_cell(s, cells[i], fixed); });
  return results;
}

std::vector<CellSpec> make_cells(const std::string& experiment,
                                 const std::vector<double>& label_rates,
                                 const std::vector<double>& p_outs,
                                 const std::vector<Arch>& archs,
                                 const std::vector<ModelKind>& kinds,
                                 const std::vector<std::uint64_t>& seeds) {
  std::vector<CellSpec> cells;
  for (double r : label_rates)
    for (double p : p_outs)
      for (Arch a : archs)
        for (ModelKind k : kinds)
          for (std::uint64_t seed : seeds) cells.push_back({experiment, r, p, a, k, seed});
  return cells;
}

std::string aggregate_csv(const std::vector<CellResult>& results, bool include_wall_time) {
  std::vector<const CellResult*> rows;
  for (const auto& r : results)
    if (!r.aborted) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(),
            [](const CellResult* a, const CellResult* b) { return cell_less(a->cell, b->cell); });
  std::string out =
      "experiment,label_rate,model,seed,test_acc,best_val_epoch,wall_time_s,arch,p_out\n";
  for (const CellResult* r : rows) {
    const CellSpec& c = r->cell;
    out += c.experiment;
    out += ',';
    append_double(out, c.label_rate);
    out += ',' + model_label(c.arch, c.kind) + ',' + std::to_string(c.seed) + ',';
    append_double(out, r->metrics.test_acc);
    out += ',' + std::to_string(r->metrics.best_val_epoch) + ',';
    if (include_wall_time) append_double(out, r->metrics.wall_time_s);
    out += ',' + to_string(c.arch) + ',';
    append_double(out, c.p_out);
    out += '\n';
  }
  return out;
}

std::vector<GroupSummary> summarize(const std::vector<CellResult>& results) {
  struct Acc {
    const CellSpec* cell = nullptr;
    std::vector<double> values;
    std::size_t aborted = 0;
  };
  std::map<GroupKey, Acc> groups;
  for (const auto& r : results) {
    Acc& a = groups[group_key(r.cell)];
    a.cell = &r.cell;
    if (r.aborted) {
      ++a.aborted;
    } else {
      a.values.push_back(r.metrics.test_acc);
    }
  }
  std::vector<GroupSummary> out;
  for (const auto& [key, a] : groups) {
    GroupSummary g;
    g.experiment = a.cell->experiment;
    g.arch = a.cell->arch;
    g.kind = a.cell->kind;
    g.label_rate = a.cell->label_rate;
    g.p_out = a.cell->p_out;
    g.aborted = a.aborted;
    if (!a.values.empty()) g.test_acc = aggregate(a.values);
    out.push_back(g);
  }
  return out;
}

std::string summary_csv(const std::vector<GroupSummary>& groups) {
  std::string out = "experiment,model,arch,label_rate,p_out,median,q25,q75,runs,aborted\n";
  for (const auto& g : groups) {
    out += g.experiment + ',' + model_label(g.arch, g.kind) + ',' + to_string(g.arch) + ',';
    append_double(out, g.label_rate);
    out += ',';
    append_double(out, g.p_out);
    out += ',';
    append_double(out, g.test_acc.median);
    out += ',';
    append_double(out, g.test_acc.q25);
    out += ',';
    append_double(out, g.test_acc.q75);
    out += ',' + std::to_string(g.test_acc.count) + ',' + std::to_string(g.aborted) + '\n';
  }
  return out;
}

}  // namespace cmp
