// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

struct WilcoxonResult {
  double w_plus = 0.0;  // sum of ranks of positive differences
  double p_value = 1.0; // two-sided
  int n = 0;            // non-zero differences
  bool exact = true;
};

/// Largest sample size handled by exact enumeration of the null distribution.
constexpr int kWilcoxonExactLimit = 25;

/// Average ranks (1-based) of |d|, ties sharing the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& magnitudes) {
  const std::size_t n = magnitudes.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return magnitudes[i] < magnitudes[j]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && magnitudes[order[j + 1]] == magnitudes[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Paired Wilcoxon signed-rank test on a - b. Zero differences are dropped;
/// tied magnitudes get average ranks. Exact two-sided p (sign enumeration
/// via dynamic programming on doubled ranks) for n <= 25, otherwise the
/// normal approximation with tie and continuity correction. All-zero
/// differences give p = 1.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("wilcoxon: samples must be paired and non-empty");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] == b[i] ? 0.0 : a[i] - b[i];
    if (std::isnan(d)) throw ConfigError("wilcoxon: NaN difference");
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult r;
  r.n = static_cast<int>(diffs.size());
  if (r.n == 0) return r;

  std::vector<double> mags(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) mags[i] = std::abs(diffs[i]);
  const auto ranks = average_ranks(mags);
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0) r.w_plus += ranks[i];

  if (r.n <= kWilcoxonExactLimit) {
    std::vector<int> doubled(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      doubled[i] = static_cast<int>(std::lround(2 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int v : doubled) {
      for (int s = reach; s >= 0; --s)
        if (count[s] != 0.0) count[s + v] += count[s];
      reach += v;
    }
    const int w2 = static_cast<int>(std::lround(2 * r.w_plus));
    double le = 0, ge = 0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w2) le += count[s];
      if (s >= w2) ge += count[s];
    }
    const double patterns = std::ldexp(1.0, r.n);
    r.p_value = std::min(1.0, 2.0 * std::min(le, ge) / patterns);
    r.exact = true;
    return r;
  }

  const double n = r.n;
  double tie_term = 0;
  {
    auto sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double mean = n * (n + 1) / 4.0;
  const double var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0;
  const double dev = r.w_plus - mean;
  const double corrected = std::max(0.0, std::abs(dev) - 0.5);
  const double z = var > 0 ? corrected / std::sqrt(var) : 0.0;
  r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  r.exact = false;
  return r;
}

}  // namespace fluencelab
