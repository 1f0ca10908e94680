#include "cmp/info_theory.hpp"

#include <cmath>
#include <map>
#include <utility>
#include <vector>
#include <tuple>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "cmp/csv.hpp"

namespace cmp {
namespace {

void check_classes(int c) {
  if (c < 2) throw DomainError("num_classes must be >= 2, got " + std::to_string(c));
}

double round12(double v) { return std::round(v * 1e12) / 1e12; }

}  // namespace

void TheoryParams::validate() const {
  check_classes(num_classes);
  const double c = num_classes;
  if (!(n > 0.0)) throw DomainError("n must be positive");
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("s must lie in [0, 1]");
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("r must lie in [0, 1]");
  if (!(d > 0.0 && d < 1.0)) throw DomainError("d must lie in (0, 1)");
  if (s * c * d > 1.0) throw DomainError("implied p_in = s*C*d exceeds 1");
  if ((1.0 - s) * c * d / (c - 1.0) > 1.0) {
    throw DomainError("implied p_out = (1-s)*C*d/(C-1) exceeds 1");
  }
}

double entropy_gain(double h, int num_classes) {
  check_classes(num_classes);
  if (!(h >= 0.0 && h <= 1.0)) throw DomainError("posterior probability outside [0, 1]");
  const double c = num_classes;
  const double delta = h - 1.0 / c;
  // h ln(hC) + (1-h) ln((1-h) C/(C-1)), each term written via log1p of the
  // deviation from uniform.
  double gain = 0.0;
  if (h > 0.0) gain += h * std::log1p(c * delta);
  if (h < 1.0) gain += (1.0 - h) * std::log1p(-c * delta / (c - 1.0));
  return gain < 0.0 ? 0.0 : gain;  // round-off only; KL is non-negative
}

double h_minus(double s, double d, int num_classes) {
  check_classes(num_classes);
  const double c = num_classes;
  // (1 - sCd) / (C(1-d)) written as 1/C + deviation.
  const double h = 1.0 / c + d * (1.0 - s * c) / (c * (1.0 - d));
  if (!(h >= 0.0 && h <= 1.0)) throw DomainError("h_minus outside [0, 1]");
  return h;
}

double delta_h_pos(double s, int num_classes) { return entropy_gain(s, num_classes); }

double delta_h_neg(double s, double d, int num_classes) {
  return entropy_gain(h_minus(s, d, num_classes), num_classes);
}

Redundancy redundancy(double r, double s, double d, double alpha) {
  return {1.0 / (1.0 + alpha * (d * s * r)), 1.0 / (1.0 + alpha * ((1.0 - d) * (1.0 - s) * r))};
}

InfoGainResult info_gains(const TheoryParams& p) {
  p.validate();
  InfoGainResult out;
  out.s = p.s;
  out.r = p.r;
  out.d = p.d;
  out.h_plus = p.s;
  out.h_minus = h_minus(p.s, p.d, p.num_classes);
  out.dh_pos = entropy_gain(out.h_plus, p.num_classes);
  out.dh_neg = entropy_gain(out.h_minus, p.num_classes);
  const Redundancy f = redundancy(p.r, p.s, p.d, p.alpha);
  out.f_pos = f.f_pos;
  out.f_neg = f.f_neg;
  out.ig_pos = p.n * p.r * p.d * out.dh_pos * out.f_pos;
  out.ig_neg = p.n * p.r * (1.0 - p.d) * out.dh_neg * out.f_neg;
  const double total = out.ig_pos + out.ig_neg;
  out.r_neg = total > 0.0 ? out.ig_neg / total : 0.0;
  const double pairs = p.n * p.n * p.r * (1.0 - p.r);
  out.ig_pos_total = pairs * p.d * out.dh_pos * out.f_pos;
  out.ig_neg_total = pairs * (1.0 - p.d) * out.dh_neg * out.f_neg;
  return out;
}

namespace oracle {
namespace {

using Quad = boost::multiprecision::cpp_bin_float_quad;

// Posterior entropy deficit after observing an event whose likelihood is
// p_same for the labelled node's class and p_diff for each other class.
// Evaluated in 113-bit precision: ln C - H cancels badly for small gains.
double bayes_gain(Quad p_same, Quad p_diff, int num_classes) {
  std::vector<Quad> post(static_cast<std::size_t>(num_classes));
  const Quad prior = Quad(1) / num_classes;
  Quad z = 0;
  for (int k = 0; k < num_classes; ++k) {
    post[static_cast<std::size_t>(k)] = prior * (k == 0 ? p_same : p_diff);
    z += post[static_cast<std::size_t>(k)];
  }
  if (!(z > 0)) throw DomainError("event has zero probability under every class");
  Quad entropy = 0;
  for (Quad& v : post) {
    v /= z;
    if (v > 0) entropy -= v * log(v);
  }
  return static_cast<double>(log(Quad(num_classes)) - entropy);
}

std::pair<Quad, Quad> edge_probabilities(double s, double d, int num_classes) {
  check_classes(num_classes);
  const Quad c = num_classes;
  const Quad p_in = Quad(s) * c * d;
  const Quad p_out = (1 - Quad(s)) * c * d / (c - 1);
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1) {
    throw DomainError("edge probabilities outside [0, 1]");
  }
  return {p_in, p_out};
}

}  // namespace

double gain_after_edge(double s, double d, int num_classes) {
  const auto [p_in, p_out] = edge_probabilities(s, d, num_classes);
  return bayes_gain(p_in, p_out, num_classes);
}

double gain_after_non_edge(double s, double d, int num_classes) {
  const auto [p_in, p_out] = edge_probabilities(s, d, num_classes);
  return bayes_gain(1 - p_in, 1 - p_out, num_classes);
}

InfoGainResult info_gains(const TheoryParams& p) {
  p.validate();
  InfoGainResult out;
  out.s = p.s;
  out.r = p.r;
  out.d = p.d;
  const auto [p_in, p_out] = edge_probabilities(p.s, p.d, p.num_classes);
  const Quad c = p.num_classes;
  out.h_plus = static_cast<double>(p_in / (p_in + (c - 1) * p_out));
  out.h_minus = static_cast<double>((1 - p_in) / ((1 - p_in) + (c - 1) * (1 - p_out)));
  out.dh_pos = gain_after_edge(p.s, p.d, p.num_classes);
  out.dh_neg = gain_after_non_edge(p.s, p.d, p.num_classes);
  out.f_pos = 1.0 / (1.0 + p.alpha * p.d * p.s * p.r);
  out.f_neg = 1.0 / (1.0 + p.alpha * (1.0 - p.d) * (1.0 - p.s) * p.r);
  // Expected labelled neighbours (n r d) and labelled non-neighbours
  // (n r (1-d)) times the per-observation gain and redundancy discount.
  out.ig_pos = (p.n * p.r * p.d) * out.dh_pos * out.f_pos;
  out.ig_neg = (p.n * p.r * (1.0 - p.d)) * out.dh_neg * out.f_neg;
  out.r_neg = out.ig_pos + out.ig_neg == 0.0 ? 0.0 : out.ig_neg / (out.ig_pos + out.ig_neg);
  out.ig_pos_total = p.n * out.ig_pos * (1.0 - p.r);
  out.ig_neg_total = p.n * out.ig_neg * (1.0 - p.r);
  return out;
}

}  // namespace oracle

std::vector<double> GridRange::values() const {
  if (!(step > 0.0)) throw DomainError("grid step must be positive");
  if (stop < start) throw DomainError("grid stop precedes start");
  const auto count = static_cast<long long>(std::floor((stop - start) / step + 0.5)) + 1;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) v.push_back(round12(start + static_cast<double>(i) * step));
  return v;
}

SweepResult sweep_grid(const GridSpec& spec) {
  SweepResult out;
  const auto ss = spec.s.values();
  const auto rs = spec.r.values();
  const auto ds = spec.d.values();
  for (double s : ss) {
    for (double r : rs) {
      for (double d : ds) {
        TheoryParams p{spec.n, spec.num_classes, s, r, d, spec.alpha};
        try {
          out.rows.push_back(info_gains(p));
        } catch (const DomainError& e) {
          out.skipped.push_back({s, r, d, e.what()});
        }
      }
    }
  }
  if (out.rows.empty()) throw EmptyGridError("no valid point in the theory grid");
  return out;
}

std::vector<TrendViolation> check_trends(const SweepResult& sweep, const GridSpec& spec) {
  const auto ss = spec.s.values();
  const auto rs = spec.r.values();
  const auto ds = spec.d.values();
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, const InfoGainResult*> cell;
  auto index_of = [](const std::vector<double>& axis, double v) {
    for (std::size_t i = 0; i < axis.size(); ++i)
      if (axis[i] == v) return i;
    return axis.size();
  };
  for (const auto& row : sweep.rows) {
    cell[{index_of(ss, row.s), index_of(rs, row.r), index_of(ds, row.d)}] = &row;
  }
  auto at = [&](std::size_t i, std::size_t j, std::size_t k) -> const InfoGainResult* {
    auto it = cell.find({i, j, k});
    return it == cell.end() ? nullptr : it->second;
  };

  std::vector<TrendViolation> bad;
  auto check = [&](const char* name, const InfoGainResult* a, const InfoGainResult* b,
                   double va, double vb, bool increasing) {
    if (!a || !b) return;
    if (increasing ? vb < va : vb > va) bad.push_back({name, *a, *b});
  };
  for (std::size_t i = 0; i < ss.size(); ++i)
    for (std::size_t j = 0; j < rs.size(); ++j)
      for (std::size_t k = 0; k < ds.size(); ++k) {
        const InfoGainResult* c = at(i, j, k);
        if (!c) continue;
        if (const auto* n = at(i + 1, j, k)) check("r_neg non-decreasing in s", c, n, c->r_neg, n->r_neg, true);
        if (const auto* n = at(i, j, k + 1)) check("r_neg non-decreasing in d", c, n, c->r_neg, n->r_neg, true);
        if (const auto* n = at(i, j + 1, k)) {
          check("r_neg non-increasing in r", c, n, c->r_neg, n->r_neg, false);
          check("ig_pos non-decreasing in r", c, n, c->ig_pos, n->ig_pos, true);
          check("ig_neg non-decreasing in r", c, n, c->ig_neg, n->ig_neg, true);
        }
      }
  return bad;
}

std::string sweep_csv(const SweepResult& sweep, bool include_totals) {
  std::string out = "s,r,d,h_plus,h_minus,dh_pos,dh_neg,f_pos,f_neg,ig_pos,ig_neg,r_neg";
  if (include_totals) out += ",ig_pos_total,ig_neg_total";
  out += '\n';
  for (const auto& row : sweep.rows) {
    const double fields[] = {row.s,     row.r,     row.d,      row.h_plus, row.h_minus, row.dh_pos,
                             row.dh_neg, row.f_pos, row.f_neg, row.ig_pos, row.ig_neg,  row.r_neg};
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      if (i) out += ',';
      append_double(out, fields[i]);
    }
    if (include_totals) {
      out += ',';
      append_double(out, row.ig_pos_total);
      out += ',';
      append_double(out, row.ig_neg_total);
    }
    out += '\n';
  }
  return out;
}

}  // namespace cmp
