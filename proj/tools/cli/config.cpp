#include "config.hpp"

#include <algorithm>
#include <initializer_list>
#include <limits>

#include "cmp/csv.hpp"
#include "json.hpp"

namespace cmp::cli {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&key = key](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown config key '" + path + "." + key + "'");
  }
}

std::string where(const std::string& path, const char* key) { return path + "." + key; }

void read(const json& j, const std::string& path, const char* key, double& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) throw ConfigError(where(path, key) + ": expected a number");
  out = it->get<double>();
}

void read(const json& j, const std::string& path, const char* key, bool& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_boolean()) throw ConfigError(where(path, key) + ": expected true or false");
  out = it->get<bool>();
}

std::uint64_t as_unsigned(const json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ConfigError(what + ": expected a non-negative integer");
}

template <class Int>
void read_int(const json& j, const std::string& path, const char* key, Int& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_signed_v<Int>) {
    if (!it->is_number_integer()) throw ConfigError(where(path, key) + ": expected an integer");
    const auto v = it->get<std::int64_t>();
    if (v < std::numeric_limits<Int>::min() || v > std::numeric_limits<Int>::max()) {
      throw ConfigError(where(path, key) + ": out of range");
    }
    out = static_cast<Int>(v);
  } else {
    const std::uint64_t v = as_unsigned(*it, where(path, key));
    if (v > std::numeric_limits<Int>::max()) throw ConfigError(where(path, key) + ": out of range");
    out = static_cast<Int>(v);
  }
}

void read(const json& j, const std::string& path, const char* key, std::filesystem::path& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string()) throw ConfigError(where(path, key) + ": expected a path string");
  out = it->get<std::string>();
}

void read(const json& j, const std::string& path, const char* key, std::vector<double>& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) throw ConfigError(where(path, key) + ": expected an array of numbers");
  out.clear();
  for (const auto& v : *it) {
    if (!v.is_number()) throw ConfigError(where(path, key) + ": expected an array of numbers");
    out.push_back(v.get<double>());
  }
}

template <class E, class Parse>
void read_enum_list(const json& j, const std::string& path, const char* key, std::vector<E>& out,
                    Parse parse) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) throw ConfigError(where(path, key) + ": expected an array of names");
  out.clear();
  for (const auto& v : *it) {
    if (!v.is_string()) throw ConfigError(where(path, key) + ": expected an array of names");
    try {
      out.push_back(parse(v.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(path, key) + ": " + e.what());
    }
  }
}

void read_range(const json& j, const std::string& path, const char* key, GridRange& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  const std::string sub = where(path, key);
  check_keys(*it, sub, {"start", "stop", "step"});
  read(*it, sub, "start", out.start);
  read(*it, sub, "stop", out.stop);
  read(*it, sub, "step", out.step);
}

template <class Body>
void section(const json& root, const char* name, std::initializer_list<const char*> keys, Body body) {
  const auto it = root.find(name);
  if (it == root.end()) return;
  check_keys(*it, name, keys);
  body(*it, std::string(name));
}

ordered_json range_json(const GridRange& g) {
  return {{"start", g.start}, {"stop", g.stop}, {"step", g.step}};
}

template <class T>
void check(bool ok, const T& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void apply_preset(Config& c, const std::string& name) {
  if (name != "small") throw ConfigError("unknown preset '" + name + "' (known: small)");
  c.sbm.n = 300;
  c.sbm.num_classes = 5;
  c.model.hidden_dim = 32;
  c.train.seeds = {42, 43, 44};
  c.theory.n = 300;
  c.theory.num_classes = 5;
}

void merge_json(Config& c, const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config", {"sbm", "theory", "model", "train", "sweep", "data", "output"});

  section(root, "sbm", {"n", "num_classes", "p_in", "p_out", "feat_dim", "seed"},
          [&](const json& j, const std::string& p) {
            read_int(j, p, "n", c.sbm.n);
            read_int(j, p, "num_classes", c.sbm.num_classes);
            read(j, p, "p_in", c.sbm.p_in);
            read(j, p, "p_out", c.sbm.p_out);
            read_int(j, p, "feat_dim", c.sbm.feat_dim);
            read_int(j, p, "seed", c.sbm.seed);
          });
  section(root, "theory", {"s", "r", "d", "n", "num_classes", "alpha", "include_totals"},
          [&](const json& j, const std::string& p) {
            read_range(j, p, "s", c.theory.s);
            read_range(j, p, "r", c.theory.r);
            read_range(j, p, "d", c.theory.d);
            read(j, p, "n", c.theory.n);
            read_int(j, p, "num_classes", c.theory.num_classes);
            read(j, p, "alpha", c.theory.alpha);
            read(j, p, "include_totals", c.theory_totals);
          });
  section(root, "model",
          {"kinds", "archs", "hidden_dim", "num_layers", "leaky_slope", "aggregation",
           "cl_loss_weight", "fixed_tau", "layer_norm_eps"},
          [&](const json& j, const std::string& p) {
            read_enum_list(j, p, "kinds", c.kinds, parse_model_kind);
            read_enum_list(j, p, "archs", c.archs, parse_arch);
            read_int(j, p, "hidden_dim", c.model.hidden_dim);
            read_int(j, p, "num_layers", c.model.num_layers);
            read(j, p, "leaky_slope", c.model.leaky_slope);
            if (const auto it = j.find("aggregation"); it != j.end()) {
              if (!it->is_string()) throw ConfigError("model.aggregation: expected a name");
              try {
                c.model.aggregation = parse_aggregation(it->get<std::string>());
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("model.aggregation: ") + e.what());
              }
            }
            read(j, p, "cl_loss_weight", c.model.cl_loss_weight);
            if (const auto it = j.find("fixed_tau"); it != j.end()) {
              if (it->is_null()) {
                c.model.fixed_tau.reset();
              } else {
                double v = 0.0;
                read(j, p, "fixed_tau", v);
                c.model.fixed_tau = v;
              }
            }
            read(j, p, "layer_norm_eps", c.model.layer_norm_eps);
          });
  section(root, "train",
          {"lr", "weight_decay", "max_epochs", "patience", "seeds", "adam_beta1", "adam_beta2",
           "adam_eps", "cl_resample_negatives", "label_rate"},
          [&](const json& j, const std::string& p) {
            read(j, p, "lr", c.train.lr);
            read(j, p, "weight_decay", c.train.weight_decay);
            read_int(j, p, "max_epochs", c.train.max_epochs);
            read_int(j, p, "patience", c.train.patience);
            if (const auto it = j.find("seeds"); it != j.end()) {
              if (!it->is_array()) throw ConfigError("train.seeds: expected an array of integers");
              c.train.seeds.clear();
              for (const auto& v : *it) c.train.seeds.push_back(as_unsigned(v, "train.seeds"));
            }
            read(j, p, "adam_beta1", c.train.adam_beta1);
            read(j, p, "adam_beta2", c.train.adam_beta2);
            read(j, p, "adam_eps", c.train.adam_eps);
            read(j, p, "cl_resample_negatives", c.train.cl_resample_negatives);
            read(j, p, "label_rate", c.label_rate);
          });
  section(root, "sweep",
          {"label_rates", "p_outs", "heterophily_label_rate", "regenerate_graph_per_seed",
           "negative_count"},
          [&](const json& j, const std::string& p) {
            read(j, p, "label_rates", c.label_rates);
            read(j, p, "p_outs", c.p_outs);
            read(j, p, "heterophily_label_rate", c.heterophily_label_rate);
            read(j, p, "regenerate_graph_per_seed", c.regenerate_graph_per_seed);
            if (const auto it = j.find("negative_count"); it != j.end()) {
              if (it->is_null()) {
                c.negative_count.reset();
              } else {
                c.negative_count = as_unsigned(*it, "sweep.negative_count");
              }
            }
          });
  section(root, "data", {"edges", "features", "labels", "neg_edges"},
          [&](const json& j, const std::string& p) {
            read(j, p, "edges", c.data.edges);
            read(j, p, "features", c.data.features);
            read(j, p, "labels", c.data.labels);
            read(j, p, "neg_edges", c.data.neg_edges);
          });
  section(root, "output", {"wall_time"},
          [&](const json& j, const std::string& p) { read(j, p, "wall_time", c.wall_time); });
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  merge_json(base, text);
  return base;
}

void Config::validate() const {
  try {
    sbm.validate();
    train.validate();
    ModelSpec m = model;
    m.in_dim = sbm.feat_dim;
    m.out_dim = static_cast<std::size_t>(sbm.num_classes);
    m.validate();
    TheoryParams probe{theory.n, theory.num_classes, 0.5, 0.0, 0.5, theory.alpha};
    check(theory.num_classes >= 2, "theory.num_classes must be >= 2");
    check(probe.n > 0.0 && probe.alpha > 0.0, "theory.n and theory.alpha must be positive");
    theory.s.values();
    theory.r.values();
    theory.d.values();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("theory: ") + e.what());
  }
  check(!kinds.empty(), "model.kinds must not be empty");
  check(!archs.empty(), "model.archs must not be empty");
  auto rate_ok = [](double r) { return r > 0.0 && r < 1.0; };
  check(rate_ok(label_rate), "train.label_rate must lie in (0, 1)");
  check(rate_ok(heterophily_label_rate), "sweep.heterophily_label_rate must lie in (0, 1)");
  check(!label_rates.empty() && std::all_of(label_rates.begin(), label_rates.end(), rate_ok),
        "sweep.label_rates must be non-empty and lie in (0, 1)");
  check(!p_outs.empty() && std::all_of(p_outs.begin(), p_outs.end(),
                                       [](double p) { return p >= 0.0 && p <= 1.0; }),
        "sweep.p_outs must be non-empty and lie in [0, 1]");
  if (!data.empty() || !data.features.empty() || !data.labels.empty()) {
    check(!data.edges.empty() && !data.features.empty() && !data.labels.empty(),
          "data needs edges, features and labels together");
  }
}

ExperimentSettings Config::experiment() const {
  ExperimentSettings s;
  s.sbm = sbm;
  s.model = model;
  s.train = train;
  s.regenerate_graph_per_seed = regenerate_graph_per_seed;
  s.negative_count = negative_count;
  return s;
}

std::string to_json(const Config& c) {
  ordered_json j;
  j["sbm"] = {{"n", c.sbm.n},
              {"num_classes", c.sbm.num_classes},
              {"p_in", c.sbm.p_in},
              {"p_out", c.sbm.p_out},
              {"feat_dim", c.sbm.feat_dim},
              {"seed", c.sbm.seed}};
  j["theory"] = {{"s", range_json(c.theory.s)},
                 {"r", range_json(c.theory.r)},
                 {"d", range_json(c.theory.d)},
                 {"n", c.theory.n},
                 {"num_classes", c.theory.num_classes},
                 {"alpha", c.theory.alpha},
                 {"include_totals", c.theory_totals}};
  ordered_json kinds = ordered_json::array(), archs = ordered_json::array();
  for (ModelKind k : c.kinds) kinds.push_back(to_string(k));
  for (Arch a : c.archs) archs.push_back(to_string(a));
  j["model"] = {{"kinds", kinds},
                {"archs", archs},
                {"hidden_dim", c.model.hidden_dim},
                {"num_layers", c.model.num_layers},
                {"leaky_slope", c.model.leaky_slope},
                {"aggregation", to_string(c.model.aggregation)},
                {"cl_loss_weight", c.model.cl_loss_weight},
                {"fixed_tau", c.model.fixed_tau ? ordered_json(*c.model.fixed_tau) : ordered_json()},
                {"layer_norm_eps", c.model.layer_norm_eps}};
  j["train"] = {{"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"seeds", c.train.seeds},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"cl_resample_negatives", c.train.cl_resample_negatives},
                {"label_rate", c.label_rate}};
  j["sweep"] = {{"label_rates", c.label_rates},
                {"p_outs", c.p_outs},
                {"heterophily_label_rate", c.heterophily_label_rate},
                {"regenerate_graph_per_seed", c.regenerate_graph_per_seed},
                {"negative_count",
                 c.negative_count ? ordered_json(*c.negative_count) : ordered_json()}};
  j["data"] = {{"edges", c.data.edges.string()},
               {"features", c.data.features.string()},
               {"labels", c.data.labels.string()},
               {"neg_edges", c.data.neg_edges.string()}};
  j["output"] = {{"wall_time", c.wall_time}};
  return j.dump(2) + "\n";
}

}  // namespace cmp::cli
