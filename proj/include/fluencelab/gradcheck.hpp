// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference verification of the analytic loss gradients.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fluencelab/losses.hpp"
#include "fluencelab/random.hpp"

namespace fluencelab {

struct GradcheckOptions {
  int beams = 2;
  int height = 8;
  int width = 8;
  double step = 1e-3;
  double tolerance = 1e-4;
  /// Absolute agreement below which an entry passes regardless of the
  /// relative error (entries whose exact gradient is zero).
  double abs_floor = 1e-10;
  double pixel_area = 16.0;
  LossWeights weights;  // default 1 / 0.5 / 0.3 / 0.2
  ScopeConfig scope;
  /// Test hook: negate this analytic entry before comparing.
  std::optional<std::size_t> flip_entry;
};

struct GradcheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<std::size_t> failing;  // indices above tolerance
  std::vector<double> analytic;
  std::vector<double> numeric;
};

struct GradcheckInputs {
  std::vector<double> pred;
  std::vector<double> target;
};

/// Seeded uniform inputs, redrawn until every L1 kink (gradient-term
/// mismatches, per-beam and total energy deviations) is at least 4 steps
/// away, so finite differences never straddle a non-differentiable point,
/// and no correlation-gradient entry is near zero.
inline GradcheckInputs gradcheck_inputs(std::uint64_t seed, const GradcheckOptions& o) {
  Rng rng(mix_seed(seed, 0x6C7A));
  const std::size_t n = static_cast<std::size_t>(o.beams) * o.height * o.width;
  for (;;) {
    GradcheckInputs in{std::vector<double>(n), std::vector<double>(n)};
    for (auto& v : in.pred) v = rng.uniform(0.0, 1.0);
    for (auto& v : in.target) v = rng.uniform(0.0, 1.0);
    const double margin = 4.0 * o.step;
    bool ok = true;
    double total = 0;
    for (int b = 0; b < o.beams && ok; ++b) {
      const std::size_t off = static_cast<std::size_t>(b) * o.height * o.width;
      auto d = [&](std::size_t i) { return in.pred[off + i] - in.target[off + i]; };
      double dev = 0;
      for (int y = 0; y < o.height; ++y)
        for (int x = 0; x < o.width; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * o.width + x;
          dev += d(i);
          if (x + 1 < o.width && std::abs(d(i + 1) - d(i)) < margin) ok = false;
          if (y + 1 < o.height && std::abs(d(i + o.width) - d(i)) < margin) ok = false;
        }
      if (std::abs(dev) < margin * o.height * o.width) ok = false;
      total += dev;
    }
    if (std::abs(total) < margin * static_cast<double>(n)) ok = false;
    if (ok) {
      // The correlation gradient is smooth but can have entries near zero,
      // where the O(step^2) truncation error swamps an elementwise relative
      // comparison. Redraw until every entry is well away from zero.
      const BeamStack<double> p(in.pred, o.beams, o.height, o.width), t(in.target, o.beams, o.height, o.width);
      const auto g = loss_gradient(LossSpec{LossComponent::kCorr, o.weights, o.scope, o.pixel_area}, p, t);
      double peak = 0;
      for (double v : g) peak = std::max(peak, std::abs(v));
      for (double v : g) ok = ok && std::abs(v) >= 1e-2 * peak;
    }
    if (ok) return in;
  }
}

inline GradcheckReport run_gradcheck(LossComponent component, std::uint64_t seed, const GradcheckOptions& o = {}) {
  const auto in = gradcheck_inputs(seed, o);
  const LossSpec spec{component, o.weights, o.scope, o.pixel_area};
  auto stack = [&](const std::vector<double>& v) {
    return BeamStack<double>(std::span<const double>(v), o.beams, o.height, o.width);
  };
  GradcheckReport r;
  r.analytic = loss_gradient(spec, stack(in.pred), stack(in.target));
  if (o.flip_entry && *o.flip_entry < r.analytic.size()) r.analytic[*o.flip_entry] = -r.analytic[*o.flip_entry];
  r.numeric.resize(in.pred.size());
  std::vector<double> probe = in.pred;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + o.step;
    const double up = loss_value(spec, stack(probe), stack(in.target));
    probe[i] = orig - o.step;
    const double down = loss_value(spec, stack(probe), stack(in.target));
    probe[i] = orig;
    r.numeric[i] = (up - down) / (2.0 * o.step);
    const double diff = std::abs(r.analytic[i] - r.numeric[i]);
    const double scale = std::max(std::abs(r.analytic[i]), std::abs(r.numeric[i]));
    const double rel = diff <= o.abs_floor ? 0.0 : diff / scale;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
    if (!(rel < o.tolerance)) {
      r.passed = false;
      r.failing.push_back(i);
    }
  }
  return r;
}

}  // namespace fluencelab
