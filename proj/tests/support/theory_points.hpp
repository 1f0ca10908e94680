#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "cmp/info_theory.hpp"

namespace cmp::testing {

/// Uniform draw from the valid parameter domain, C in [2, 20].
inline TheoryParams random_theory_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> classes(2, 20);
  TheoryParams p;
  p.num_classes = classes(rng);
  p.n = std::floor(10.0 + 4990.0 * u(rng));
  p.alpha = 0.5 + 49.5 * u(rng);
  p.s = u(rng);
  p.r = u(rng);
  const double c = p.num_classes;
  double bound = 0.999;
  if (p.s > 0.0) bound = std::min(bound, 1.0 / (p.s * c));
  if (p.s < 1.0) bound = std::min(bound, (c - 1.0) / ((1.0 - p.s) * c));
  p.d = bound * (1e-6 + (1.0 - 2e-6) * u(rng));
  return p;
}

/// Largest field difference, absolute below 1 and relative above.
inline double theory_difference(const InfoGainResult& a, const InfoGainResult& b) {
  const double pairs[][2] = {{a.h_plus, b.h_plus}, {a.h_minus, b.h_minus}, {a.dh_pos, b.dh_pos},
                             {a.dh_neg, b.dh_neg}, {a.f_pos, b.f_pos},     {a.f_neg, b.f_neg},
                             {a.ig_pos, b.ig_pos}, {a.ig_neg, b.ig_neg},   {a.r_neg, b.r_neg},
                             {a.ig_pos_total, b.ig_pos_total},
                             {a.ig_neg_total, b.ig_neg_total}};
  double worst = 0.0;
  for (const auto& p : pairs) {
    worst = std::max(worst, std::abs(p[0] - p[1]) / std::max(1.0, std::abs(p[1])));
  }
  return worst;
}

}  // namespace cmp::testing
