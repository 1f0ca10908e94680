#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cmp {

/// A parameter point is outside the valid domain (implied edge probabilities
/// leave [0, 1], C < 2, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by sweep_grid when no grid point is valid.
class EmptyGridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TheoryParams {
  double n = 1000.0;
  int num_classes = 10;
  double s = 0.0;  // homophily ratio
  double r = 0.0;  // label rate
  double d = 0.0;  // edge density
  double alpha = 20.0;

  /// Throws DomainError naming the violated condition.
  void validate() const;
};

/// All gains are in nats.
struct InfoGainResult {
  double s = 0.0, r = 0.0, d = 0.0;
  double h_plus = 0.0, h_minus = 0.0;
  double dh_pos = 0.0, dh_neg = 0.0;
  double f_pos = 1.0, f_neg = 1.0;
  double ig_pos = 0.0, ig_neg = 0.0;
  double r_neg = 0.0;
  // Expected totals over all labeled/unlabeled pairs, before dividing by the
  // number of unlabeled nodes.
  double ig_pos_total = 0.0, ig_neg_total = 0.0;
};

/// ln C - H(posterior) when the posterior puts probability h on the observed
/// neighbor's class and spreads the rest uniformly over the other C - 1.
/// Evaluated as a KL divergence from uniform, so h = 1/C gives exactly 0.
double entropy_gain(double h, int num_classes);

/// Posterior same-class probability after observing a non-edge.
double h_minus(double s, double d, int num_classes);

double delta_h_pos(double s, int num_classes);
double delta_h_neg(double s, double d, int num_classes);

struct Redundancy {
  double f_pos;
  double f_neg;
};
Redundancy redundancy(double r, double s, double d, double alpha);

InfoGainResult info_gains(const TheoryParams& p);

/// Brute-force reference for the closed forms above. Builds the SBM edge
/// probabilities from (s, d), enumerates the posterior over the unknown
/// node's C classes by Bayes' rule given one (non-)edge to a labelled node,
/// and returns ln C minus the posterior entropy. Shares no code with the
/// analytic path and works in 113-bit floating point.
namespace oracle {
double gain_after_edge(double s, double d, int num_classes);
double gain_after_non_edge(double s, double d, int num_classes);
/// Full result recomputed from the two oracle gains.
InfoGainResult info_gains(const TheoryParams& p);
}  // namespace oracle

struct GridRange {
  double start = 0.0;
  double stop = 0.0;
  double step = 1.0;

  /// start, start + step, ... up to stop (inclusive within half a step),
  /// rounded to 12 decimals so values print cleanly.
  std::vector<double> values() const;
};

struct GridSpec {
  GridRange s{0.1, 0.9, 0.05};
  GridRange r{0.01, 0.5, 0.01};
  GridRange d{0.01, 0.09, 0.01};
  double n = 1000.0;
  int num_classes = 10;
  double alpha = 20.0;
};

struct SkippedPoint {
  double s, r, d;
  std::string reason;
};

struct SweepResult {
  std::vector<InfoGainResult> rows;  // s-major, then r, then d
  std::vector<SkippedPoint> skipped;
};

/// Evaluates every grid point; invalid points are skipped and listed.
/// Throws EmptyGridError when nothing is valid.
SweepResult sweep_grid(const GridSpec& spec);

struct TrendViolation {
  std::string trend;
  InfoGainResult from;
  InfoGainResult to;
};

/// Scans adjacent grid cells for the expected monotone trends: r_neg
/// non-decreasing in s and d, non-increasing in r; ig_pos and ig_neg
/// non-decreasing in r.
std::vector<TrendViolation> check_trends(const SweepResult& sweep, const GridSpec& spec);

/// CSV with header s,r,d,h_plus,h_minus,dh_pos,dh_neg,f_pos,f_neg,ig_pos,ig_neg,r_neg
/// (plus ig_pos_total,ig_neg_total when requested).
std::string sweep_csv(const SweepResult& sweep, bool include_totals = false);

}  // namespace cmp
