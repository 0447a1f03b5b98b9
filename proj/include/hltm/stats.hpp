#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "hltm/common.hpp"

namespace hltm {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return std::nan("");
  return sum(xs) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

struct KruskalWallisResult {
  double h = 0.0;
  std::size_t df = 0;
  double p = 1.0;
};

/// Midranks (1-based) of the pooled values; also returns sum(t^3 - t)
/// over tie groups.
inline std::vector<double> midranks(std::span<const double> pooled, double* tie_sum = nullptr) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(pooled.size());
  double ties = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    const double t = static_cast<double>(j - i + 1);
    ties += t * t * t - t;
    i = j + 1;
  }
  if (tie_sum) *tie_sum = ties;
  return ranks;
}

/// Omnibus rank test across groups with tie correction; p from the
/// chi-square upper tail with groups - 1 degrees of freedom.
inline KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw Error("kruskal_wallis: need at least two groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.empty()) throw Error("kruskal_wallis: empty group");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  double ties = 0.0;
  const auto ranks = midranks(pooled, &ties);
  const double n = static_cast<double>(pooled.size());
  KruskalWallisResult r;
  r.df = groups.size() - 1;
  const double correction = 1.0 - ties / (n * n * n - n);
  if (correction <= 0.0) return r;  // all values identical
  double acc = 0.0;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
    offset += g.size();
    acc += rank_sum * rank_sum / static_cast<double>(g.size());
  }
  r.h = (12.0 / (n * (n + 1.0)) * acc - 3.0 * (n + 1.0)) / correction;
  r.h = std::max(0.0, r.h);
  r.p = boost::math::gamma_q(0.5 * static_cast<double>(r.df), 0.5 * r.h);
  return r;
}

}  // namespace hltm
