// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation metrics. Per-case values pool every beam of the case.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fluencelab/error.hpp"
#include "fluencelab/losses.hpp"

namespace fluencelab {

/// Mean absolute error over all pixels of all beams.
template <class T>
double mae(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size() || pred.empty()) throw ConfigError("mae: size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(static_cast<double>(pred[i]) - target[i]);
  return s / static_cast<double>(pred.size());
}

/// 10 log10(L^2 / MSE); +infinity when the images are identical.
template <class T>
double psnr(std::span<const T> pred, std::span<const T> target, double value_range) {
  if (pred.size() != target.size() || pred.empty()) throw ConfigError("psnr: size mismatch");
  if (!(value_range > 0)) throw ConfigError("psnr: value range must be positive");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    s += d * d;
  }
  const double mse = s / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(value_range * value_range / mse);
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

/// Normalized 11x11 Gaussian window (sigma 1.5), row-major.
inline std::array<double, kSsimWindow * kSsimWindow> ssim_window() {
  std::array<double, kSsimWindow * kSsimWindow> w{};
  double total = 0;
  const int r = kSsimWindow / 2;
  for (int y = 0; y < kSsimWindow; ++y)
    for (int x = 0; x < kSsimWindow; ++x) {
      const double dy = y - r, dx = x - r;
      w[y * kSsimWindow + x] = std::exp(-(dx * dx + dy * dy) / (2 * kSsimSigma * kSsimSigma));
      total += w[y * kSsimWindow + x];
    }
  for (auto& v : w) v /= total;
  return w;
}

/// Mean local SSIM over every fully valid 11x11 window position
/// (K1 = 0.01, K2 = 0.03). Separable filtering of the five moment images.
template <class T>
double ssim(std::span<const T> a, std::span<const T> b, int height, int width, double value_range) {
  if (a.size() != b.size() || a.size() != static_cast<std::size_t>(height) * width)
    throw ConfigError("ssim: size mismatch");
  if (height < kSsimWindow || width < kSsimWindow) throw ConfigError("ssim: image smaller than the 11x11 window");
  if (!(value_range > 0)) throw ConfigError("ssim: value range must be positive");
  const double c1 = (0.01 * value_range) * (0.01 * value_range);
  const double c2 = (0.03 * value_range) * (0.03 * value_range);

  std::array<double, kSsimWindow> g{};
  double gs = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
    gs += g[i];
  }
  for (auto& v : g) v /= gs;

  const int oh = height - kSsimWindow + 1, ow = width - kSsimWindow + 1;
  // moments: x, y, xx, yy, xy
  std::vector<double> rows(static_cast<std::size_t>(5) * height * ow, 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kSsimWindow; ++k) {
        const double va = a[static_cast<std::size_t>(y) * width + x + k];
        const double vb = b[static_cast<std::size_t>(y) * width + x + k];
        m[0] += g[k] * va;
        m[1] += g[k] * vb;
        m[2] += g[k] * va * va;
        m[3] += g[k] * vb * vb;
        m[4] += g[k] * va * vb;
      }
      for (int c = 0; c < 5; ++c) rows[(static_cast<std::size_t>(c) * height + y) * ow + x] = m[c];
    }
  double total = 0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double m[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < kSsimWindow; ++k)
        for (int c = 0; c < 5; ++c) m[c] += g[k] * rows[(static_cast<std::size_t>(c) * height + y + k) * ow + x];
      const double mx = m[0], my = m[1];
      const double vx = m[2] - mx * mx, vy = m[3] - my * my, cxy = m[4] - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return total / (static_cast<double>(oh) * ow);
}

/// SSIM of a beam stack: mean over beams (every beam has the same number of windows).
template <class T>
double ssim(const BeamStack<T>& a, const BeamStack<T>& b, double value_range) {
  if (a.beams != b.beams || a.height != b.height || a.width != b.width) throw ConfigError("ssim: shape mismatch");
  double s = 0;
  for (int k = 0; k < a.beams; ++k) s += ssim(a.beam(k), b.beam(k), a.height, a.width, value_range);
  return s / a.beams;
}

/// Mean beam-wise relative deviation of integrated fluence, in percent.
template <class T>
double energy_error_percent(const BeamStack<T>& pred, const BeamStack<T>& target, double pixel_area) {
  if (pred.beams != target.beams || pred.height != target.height || pred.width != target.width)
    throw ConfigError("energy_error_percent: shape mismatch");
  if (!(pixel_area > 0)) throw ConfigError("energy_error_percent: pixel area must be positive");
  double s = 0;
  for (int b = 0; b < pred.beams; ++b) {
    double ep = 0, et = 0;
    for (auto v : pred.beam(b)) ep += v;
    for (auto v : target.beam(b)) et += v;
    ep *= pixel_area;
    et *= pixel_area;
    if (!(et > 0)) throw DataError("energy_error_percent: target beam " + std::to_string(b) + " has zero energy");
    s += std::abs(ep - et) / et;
  }
  return 100.0 * s / pred.beams;
}

}  // namespace fluencelab
