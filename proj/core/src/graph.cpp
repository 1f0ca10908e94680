#include "cmp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "cmp/csv.hpp"

namespace cmp {
namespace {

std::uint64_t pair_key(std::uint32_t u, std::uint32_t v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | v;
}

std::size_t count_mask(const std::vector<std::uint8_t>& m) {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

void check_edge_list(const EdgeList& edges, std::size_t n, const char* name) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto [u, v] = edges[k];
    if (u >= n || v >= n) {
      throw std::invalid_argument(std::string(name) + ": endpoint out of range");
    }
    if (u == v) throw std::invalid_argument(std::string(name) + ": self-loop");
    if (k > 0 && !(edges[k - 1] < edges[k])) {
      throw std::invalid_argument(std::string(name) + ": not sorted or has duplicates");
    }
    if (!std::binary_search(edges.begin(), edges.end(), EdgePair{v, u})) {
      throw std::invalid_argument(std::string(name) + ": not symmetrized");
    }
  }
}

EdgeList read_edge_file(const std::filesystem::path& path, std::size_t n) {
  const std::string text = read_text_file(path);
  EdgeList edges;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line(text.data() + pos,
                                (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split_whitespace(body);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw std::invalid_argument(where + ": expected 'u v'");
    long long u = 0, v = 0;
    try {
      u = parse_int(fields[0]);
      v = parse_int(fields[1]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n) {
      throw std::invalid_argument(where + ": node index out of range (n = " + std::to_string(n) +
                                  ")");
    }
    edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
  }
  return symmetrize_edges(edges);
}

std::string edge_file_text(const EdgeList& symmetric) {
  std::string out;
  for (const auto& [u, v] : undirected_edges(symmetric)) {
    out += std::to_string(u);
    out += ' ';
    out += std::to_string(v);
    out += '\n';
  }
  return out;
}

}  // namespace

int Graph::num_classes() const {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

void Graph::validate() const {
  if (features.rank() != 2 || features.rows() != num_nodes) {
    throw std::invalid_argument("graph: features must be n x f, got " + features.shape_string());
  }
  if (labels.size() != num_nodes) throw std::invalid_argument("graph: label count mismatch");
  for (int l : labels)
    if (l < 0) throw std::invalid_argument("graph: negative label");
  check_edge_list(pos_edges, num_nodes, "positive edges");
  if (neg_edges) {
    check_edge_list(*neg_edges, num_nodes, "negative edges");
    for (const auto& e : *neg_edges)
      if (std::binary_search(pos_edges.begin(), pos_edges.end(), e)) {
        throw std::invalid_argument("graph: an edge is both positive and negative");
      }
  }
}

void SbmConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("sbm: num_classes must be >= 1");
  if (n == 0 || n % static_cast<std::size_t>(num_classes) != 0) {
    throw std::invalid_argument("sbm: n must be a positive multiple of num_classes");
  }
  if (n > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("sbm: n too large");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_in) || !prob(p_out)) {
    throw std::invalid_argument("sbm: edge probabilities must lie in [0, 1]");
  }
  if (feat_dim == 0) throw std::invalid_argument("sbm: feat_dim must be >= 1");
}

std::size_t Split::train_count() const { return count_mask(train_mask); }
std::size_t Split::val_count() const { return count_mask(val_mask); }
std::size_t Split::test_count() const { return count_mask(test_mask); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

EdgeList symmetrize_edges(const EdgeList& edges) {
  EdgeList out;
  out.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u == v) continue;
    out.emplace_back(u, v);
    out.emplace_back(v, u);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

EdgeList undirected_edges(const EdgeList& symmetric) {
  EdgeList out;
  out.reserve(symmetric.size() / 2);
  for (const auto& [u, v] : symmetric)
    if (u < v) out.emplace_back(u, v);
  return out;
}

Graph generate_sbm(const SbmConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n;
  const std::size_t block = n / static_cast<std::size_t>(cfg.num_classes);
  Graph g;
  g.num_nodes = n;
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.labels[i] = static_cast<int>(i / block);

  std::mt19937_64 edge_rng(derive_seed(cfg.seed, 0));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EdgeList und;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      const double p = g.labels[u] == g.labels[v] ? cfg.p_in : cfg.p_out;
      if (unif(edge_rng) < p) und.emplace_back(u, v);
    }
  }
  g.pos_edges = symmetrize_edges(und);

  std::mt19937_64 feat_rng(derive_seed(cfg.seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  g.features = Tensor::matrix(n, cfg.feat_dim);
  for (double& x : g.features.data()) x = normal(feat_rng);
  return g;
}

SbmConfig sbm_from_theory(double s, double d, int num_classes, std::size_t n,
                          std::size_t feat_dim, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("sbm_from_theory needs at least 2 classes");
  if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("homophily ratio outside [0, 1]");
  if (!(d >= 0.0 && d <= 1.0)) throw std::invalid_argument("edge density outside [0, 1]");
  const double c = num_classes;
  SbmConfig cfg;
  cfg.n = n;
  cfg.num_classes = num_classes;
  cfg.feat_dim = feat_dim;
  cfg.seed = seed;
  cfg.p_in = s * c * d;
  cfg.p_out = (1.0 - s) * c * d / (c - 1.0);
  if (cfg.p_in > 1.0) {
    throw std::invalid_argument("implied p_in = " + std::to_string(cfg.p_in) + " exceeds 1");
  }
  if (cfg.p_out > 1.0) {
    throw std::invalid_argument("implied p_out = " + std::to_string(cfg.p_out) + " exceeds 1");
  }
  cfg.validate();
  return cfg;
}

Graph sample_negative_edges(Graph g, std::optional<std::size_t> count, std::uint64_t seed) {
  const std::size_t n = g.num_nodes;
  const std::size_t want = count.value_or(g.num_undirected_pos());
  const std::size_t all_pairs = n < 2 ? 0 : n * (n - 1) / 2;
  const std::size_t complement = all_pairs - g.num_undirected_pos();
  if (want > complement) {
    throw std::invalid_argument("negative sampling: requested " + std::to_string(want) +
                                " pairs but only " + std::to_string(complement) +
                                " non-adjacent pairs exist");
  }
  std::unordered_set<std::uint64_t> positive;
  positive.reserve(g.pos_edges.size());
  for (const auto& [u, v] : g.pos_edges)
    if (u < v) positive.insert(pair_key(u, v));

  std::mt19937_64 rng(derive_seed(seed, 2));
  EdgeList chosen;
  chosen.reserve(want);
  if (want * 2 > complement) {
    // Dense request: enumerate the complement and select uniformly.
    EdgeList pool;
    pool.reserve(complement);
    for (std::uint32_t u = 0; u < n; ++u)
      for (std::uint32_t v = u + 1; v < n; ++v)
        if (!positive.count(pair_key(u, v))) pool.emplace_back(u, v);
    std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), want, rng);
  } else {
    std::uniform_int_distribution<std::uint32_t> node(0, static_cast<std::uint32_t>(n - 1));
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(want * 2);
    while (chosen.size() < want) {
      const std::uint32_t u = node(rng);
      const std::uint32_t v = node(rng);
      if (u == v) continue;
      const std::uint64_t key = pair_key(u, v);
      if (positive.count(key) || !taken.insert(key).second) continue;
      chosen.emplace_back(std::min(u, v), std::max(u, v));
    }
  }
  g.neg_edges = symmetrize_edges(chosen);
  return g;
}

Split make_split(const Graph& g, double label_rate, std::uint64_t seed) {
  if (!(label_rate > 0.0 && label_rate < 1.0)) {
    throw std::invalid_argument("label rate must lie in (0, 1), got " + format_double(label_rate));
  }
  const std::size_t n = g.num_nodes;
  const auto m = static_cast<std::size_t>(std::llround(label_rate * static_cast<double>(n)));
  if (m == 0) throw std::invalid_argument("label rate selects no training nodes");
  const int num_classes = g.num_classes();

  std::mt19937_64 rng(derive_seed(seed, 3));
  std::vector<std::vector<std::uint32_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::uint32_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  // Even quota per class; the remainder goes to randomly ordered classes that
  // still have unassigned members.
  const std::size_t c = by_class.size();
  std::vector<std::size_t> quota(c, 0);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    quota[k] = std::min(by_class[k].size(), m / c);
    assigned += quota[k];
  }
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  while (assigned < m) {
    bool progressed = false;
    for (std::size_t k : order) {
      if (assigned == m) break;
      if (quota[k] < by_class[k].size()) {
        ++quota[k];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }

  Split s;
  s.label_rate = label_rate;
  s.train_mask.assign(n, 0);
  s.val_mask.assign(n, 0);
  s.test_mask.assign(n, 0);
  std::vector<std::uint32_t> rest;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < by_class[k].size(); ++j) {
      if (j < quota[k]) {
        s.train_mask[by_class[k][j]] = 1;
      } else {
        rest.push_back(by_class[k][j]);
      }
    }
    if (quota[k] == 0) {
      s.warnings.push_back("class " + std::to_string(k) + " has no training nodes");
    }
  }
  std::sort(rest.begin(), rest.end());
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(rest.size())));
  for (std::size_t j = 0; j < rest.size(); ++j) {
    if (j < n_val) {
      s.val_mask[rest[j]] = 1;
    } else {
      s.test_mask[rest[j]] = 1;
    }
  }
  return s;
}

GraphStats compute_stats(const Graph& g) {
  const std::size_t n = g.num_nodes;
  if (n < 2) throw std::invalid_argument("graph statistics need at least 2 nodes");
  if (g.labels.size() != n) throw std::invalid_argument("graph statistics need labels");

  const EdgeList und = undirected_edges(g.pos_edges);
  const double m = static_cast<double>(und.size());
  GraphStats st;
  st.num_nodes = n;
  st.num_edges = und.size();
  st.density = 2.0 * m / (static_cast<double>(n) * static_cast<double>(n - 1));
  st.avg_degree = 2.0 * m / static_cast<double>(n);

  std::size_t intra = 0;
  for (const auto& [u, v] : und)
    if (g.labels[u] == g.labels[v]) ++intra;
  const std::size_t inter = und.size() - intra;
  st.homophily_ratio = und.empty() ? 0.0 : static_cast<double>(intra) / m;
  st.intra_inter_ratio = inter == 0 ? std::numeric_limits<double>::infinity()
                                    : static_cast<double>(intra) / static_cast<double>(inter);

  // Sorted adjacency lists (pos_edges is sorted by source already).
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (const auto& [u, v] : g.pos_edges) adj[u].push_back(v);
  double clustering = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ni = adj[i];
    const std::size_t k = ni.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::uint32_t j : ni) {
      const auto& nj = adj[j];
      // |N(i) ∩ N(j)| by merge; each neighbor pair is seen twice.
      auto a = ni.begin();
      auto b = nj.begin();
      while (a != ni.end() && b != nj.end()) {
        if (*a < *b) {
          ++a;
        } else if (*b < *a) {
          ++b;
        } else {
          ++links;
          ++a;
          ++b;
        }
      }
    }
    clustering += static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1));
  }
  st.clustering_coef = clustering / static_cast<double>(n);

  if (m > 0.0) {
    const std::size_t c = static_cast<std::size_t>(g.num_classes());
    std::vector<double> inside(c, 0.0), degree(c, 0.0);
    for (const auto& [u, v] : und) {
      if (g.labels[u] == g.labels[v]) inside[static_cast<std::size_t>(g.labels[u])] += 1.0;
      degree[static_cast<std::size_t>(g.labels[u])] += 1.0;
      degree[static_cast<std::size_t>(g.labels[v])] += 1.0;
    }
    double q = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double frac = degree[k] / (2.0 * m);
      q += inside[k] / m - frac * frac;
    }
    st.modularity = q;
  }
  return st;
}

Graph load_graph(const std::filesystem::path& edge_file, const std::filesystem::path& feature_file,
                 const std::filesystem::path& label_file,
                 const std::filesystem::path& neg_edge_file) {
  Graph g;
  {
    const std::string text = read_text_file(feature_file);
    std::vector<double> data;
    std::size_t cols = 0, rows = 0, line_no = 0, pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const std::string_view line(text.data() + pos,
                                  (nl == std::string::npos ? text.size() : nl) - pos);
      pos = nl == std::string::npos ? text.size() : nl + 1;
      ++line_no;
      if (trim(line).empty()) continue;
      const auto fields = split_csv_line(line);
      const std::string where = feature_file.string() + ":" + std::to_string(line_no);
      if (rows == 0) cols = fields.size();
      if (fields.size() != cols) {
        throw std::invalid_argument(where + ": expected " + std::to_string(cols) + " columns");
      }
      for (auto f : fields) {
        try {
          data.push_back(parse_double(f));
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument(where + ": " + e.what());
        }
      }
      ++rows;
    }
    if (rows == 0) throw std::invalid_argument(feature_file.string() + ": no feature rows");
    g.num_nodes = rows;
    g.features = Tensor({rows, cols}, std::move(data));
  }
  {
    const std::string text = read_text_file(label_file);
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      const std::string_view line(text.data() + pos,
                                  (nl == std::string::npos ? text.size() : nl) - pos);
      pos = nl == std::string::npos ? text.size() : nl + 1;
      ++line_no;
      if (trim(line).empty()) continue;
      const std::string where = label_file.string() + ":" + std::to_string(line_no);
      long long l = 0;
      try {
        l = parse_int(line);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(where + ": " + e.what());
      }
      if (l < 0) throw std::invalid_argument(where + ": negative label");
      g.labels.push_back(static_cast<int>(l));
    }
    if (g.labels.size() != g.num_nodes) {
      throw std::invalid_argument(label_file.string() + ": " + std::to_string(g.labels.size()) +
                                  " labels for " + std::to_string(g.num_nodes) + " feature rows");
    }
  }
  g.pos_edges = read_edge_file(edge_file, g.num_nodes);
  if (!neg_edge_file.empty()) g.neg_edges = read_edge_file(neg_edge_file, g.num_nodes);
  g.validate();
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "edges.txt", edge_file_text(g.pos_edges));
  if (g.neg_edges) write_text_file(dir / "neg_edges.txt", edge_file_text(*g.neg_edges));
  std::string feats;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const auto row = g.features.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) feats += ',';
      append_double(feats, row[k]);
    }
    feats += '\n';
  }
  write_text_file(dir / "features.csv", feats);
  std::string labels;
  for (int l : g.labels) {
    labels += std::to_string(l);
    labels += '\n';
  }
  write_text_file(dir / "labels.csv", labels);
}

}  // namespace cmp
