// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Fluence-aware regression objective and its components, with exact
// gradients with respect to the prediction. All reductions accumulate in
// double regardless of the element type.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

enum class Scope { kBeamwise, kGlobal };

inline const char* to_string(Scope s) { return s == Scope::kBeamwise ? "beamwise" : "global"; }

inline Scope parse_scope(const std::string& s) {
  if (s == "beamwise" || s == "B") return Scope::kBeamwise;
  if (s == "global" || s == "G") return Scope::kGlobal;
  throw ConfigError("unknown scope '" + s + "' (expected beamwise or global)");
}

/// Where the correlation and energy terms are reduced.
struct ScopeConfig {
  Scope corr = Scope::kBeamwise;
  Scope energy = Scope::kBeamwise;

  /// Two-letter tag, corr then energy: "B/B", "G/B", ...
  std::string tag() const {
    return std::string(corr == Scope::kBeamwise ? "B" : "G") + "/" + (energy == Scope::kBeamwise ? "B" : "G");
  }
  friend bool operator==(const ScopeConfig&, const ScopeConfig&) = default;
};

struct LossWeights {
  double alpha = 1.0;  // pixel MSE
  double beta = 0.5;   // gradient mismatch
  double gamma = 0.3;  // correlation
  double delta = 0.2;  // energy

  static LossWeights mse_only() { return {1.0, 0.0, 0.0, 0.0}; }

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0) || !(delta >= 0))
      throw ConfigError("loss weights must be non-negative");
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  double grad = 0.0;
  double corr = 0.0;
  double energy = 0.0;
  std::vector<double> beam_energy_deviation;  // signed, per beam, in energy units
};

/// Read-only B x H x W stack of beam maps.
template <class T>
struct BeamStack {
  std::span<const T> values;
  int beams = 0;
  int height = 0;
  int width = 0;

  BeamStack(std::span<const T> v, int b, int h, int w) : values(v), beams(b), height(h), width(w) {
    if (b < 1 || h < 1 || w < 1 || v.size() != static_cast<std::size_t>(b) * h * w)
      throw ConfigError("beam stack buffer does not match B x H x W");
  }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::span<const T> beam(int b) const { return values.subspan(b * plane(), plane()); }
};

namespace detail {

template <class T>
void require_same_shape(const BeamStack<T>& a, const BeamStack<T>& b) {
  if (a.beams != b.beams || a.height != b.height || a.width != b.width)
    throw ConfigError("prediction and target stacks differ in shape");
}

inline double sign0(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

/// Pearson correlation with 1e-8 added to each standard deviation.
/// Optionally accumulates scale * d(1 - rho)/d(pred) into grad.
template <class T>
double one_minus_rho(std::span<const T> p, std::span<const T> t, double scale, double* grad) {
  constexpr double kEps = 1e-8;
  const double n = static_cast<double>(p.size());
  double mp = 0, mt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mp += p[i];
    mt += t[i];
  }
  mp /= n;
  mt /= n;
  double cov = 0, vp = 0, vt = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double dp = p[i] - mp, dt = t[i] - mt;
    cov += dp * dt;
    vp += dp * dp;
    vt += dt * dt;
  }
  cov /= n;
  const double sp = std::sqrt(vp / n), st = std::sqrt(vt / n);
  const double denom = (sp + kEps) * (st + kEps);
  const double rho = cov / denom;
  if (grad) {
    // d rho / d p_i = dt_i / (n denom) - cov * dp_i / (n sp (sp+eps)^2 (st+eps))
    const double a = 1.0 / (n * denom);
    const double b = sp > 0 ? cov / (n * sp * (sp + kEps) * denom) : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double dp = p[i] - mp, dt = t[i] - mt;
      grad[i] -= scale * (a * dt - b * dp);
    }
  }
  return 1.0 - rho;
}

template <class T>
double mse_impl(const BeamStack<T>& p, const BeamStack<T>& t, double scale, double* grad) {
  require_same_shape(p, t);
  const double n = static_cast<double>(p.values.size());
  double s = 0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double d = static_cast<double>(p.values[i]) - t.values[i];
    s += d * d;
    if (grad) grad[i] += scale * 2.0 * d / n;
  }
  return s / n;
}

template <class T>
double grad_impl(const BeamStack<T>& p, const BeamStack<T>& t, double scale, double* grad) {
  require_same_shape(p, t);
  if (p.height < 2 || p.width < 2) throw ConfigError("grad_loss needs H, W >= 2");
  const double norm = static_cast<double>(p.values.size());  // B * |Omega|
  const int h = p.height, w = p.width;
  double s = 0;
  for (int b = 0; b < p.beams; ++b) {
    const std::size_t off = b * p.plane();
    const auto P = [&](int y, int x) { return static_cast<double>(p.values[off + y * w + x]); };
    const auto Q = [&](int y, int x) { return static_cast<double>(t.values[off + y * w + x]); };
    for (int y = 0; y < h; ++y)
      for (int x = 0; x + 1 < w; ++x) {
        const double d = (P(y, x + 1) - P(y, x)) - (Q(y, x + 1) - Q(y, x));
        s += std::abs(d);
        if (grad) {
          const double g = scale * sign0(d) / norm;
          grad[off + y * w + x + 1] += g;
          grad[off + y * w + x] -= g;
        }
      }
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double d = (P(y + 1, x) - P(y, x)) - (Q(y + 1, x) - Q(y, x));
        s += std::abs(d);
        if (grad) {
          const double g = scale * sign0(d) / norm;
          grad[off + (y + 1) * w + x] += g;
          grad[off + y * w + x] -= g;
        }
      }
  }
  return s / norm;
}

template <class T>
double corr_impl(const BeamStack<T>& p, const BeamStack<T>& t, Scope scope, double scale, double* grad) {
  require_same_shape(p, t);
  if (scope == Scope::kGlobal) return one_minus_rho(p.values, t.values, scale, grad);
  double s = 0;
  const double inv_b = 1.0 / p.beams;
  for (int b = 0; b < p.beams; ++b)
    s += one_minus_rho(p.beam(b), t.beam(b), scale * inv_b, grad ? grad + b * p.plane() : nullptr);
  return s * inv_b;
}

template <class T>
double energy_impl(const BeamStack<T>& p, const BeamStack<T>& t, double pixel_area, Scope scope, double scale,
                   double* grad, std::vector<double>* deviations) {
  require_same_shape(p, t);
  if (!(pixel_area > 0)) throw ConfigError("energy_loss needs pixel area > 0");
  std::vector<double> dev(p.beams);
  for (int b = 0; b < p.beams; ++b) {
    double sp = 0, st = 0;
    for (auto v : p.beam(b)) sp += v;
    for (auto v : t.beam(b)) st += v;
    dev[b] = (sp - st) * pixel_area;
  }
  double loss = 0;
  if (scope == Scope::kBeamwise) {
    for (double d : dev) loss += std::abs(d);
    loss /= p.beams;
    if (grad)
      for (int b = 0; b < p.beams; ++b) {
        const double g = scale * sign0(dev[b]) * pixel_area / p.beams;
        for (std::size_t i = 0; i < p.plane(); ++i) grad[b * p.plane() + i] += g;
      }
  } else {
    double total = 0;
    for (double d : dev) total += d;
    loss = std::abs(total);
    if (grad) {
      const double g = scale * sign0(total) * pixel_area;
      for (std::size_t i = 0; i < p.values.size(); ++i) grad[i] += g;
    }
  }
  if (deviations) *deviations = std::move(dev);
  return loss;
}

}  // namespace detail

/// Mean squared error over all beams and pixels.
template <class T>
double mse_loss(const BeamStack<T>& pred, const BeamStack<T>& target) {
  return detail::mse_impl(pred, target, 0.0, nullptr);
}

/// L1 mismatch of forward differences along width and height (valid
/// region only), normalized by B * H * W.
template <class T>
double grad_loss(const BeamStack<T>& pred, const BeamStack<T>& target) {
  return detail::grad_impl(pred, target, 0.0, nullptr);
}

/// 1 - Pearson correlation, averaged per beam or over the flattened stack.
template <class T>
double corr_loss(const BeamStack<T>& pred, const BeamStack<T>& target, Scope scope) {
  return detail::corr_impl(pred, target, scope, 0.0, nullptr);
}

/// Absolute deviation of integrated fluence (sum * pixel area): mean over
/// beams, or a single deviation of the stack totals in global scope.
template <class T>
double energy_loss(const BeamStack<T>& pred, const BeamStack<T>& target, double pixel_area, Scope scope) {
  return detail::energy_impl(pred, target, pixel_area, scope, 0.0, nullptr, nullptr);
}

/// Weighted sum of the four components. When `grad` is non-empty it
/// receives d(total)/d(pred) (overwritten).
template <class T>
LossBreakdown far_loss(const BeamStack<T>& pred, const BeamStack<T>& target, const LossWeights& w,
                       const ScopeConfig& scope, double pixel_area, std::span<double> grad = {}) {
  w.validate();
  double* g = nullptr;
  if (!grad.empty()) {
    if (grad.size() != pred.values.size()) throw ConfigError("gradient buffer does not match prediction");
    std::fill(grad.begin(), grad.end(), 0.0);
    g = grad.data();
  }
  LossBreakdown r;
  r.mse = detail::mse_impl(pred, target, w.alpha, g);
  // Components with zero weight are still reported; they contribute no gradient.
  r.grad = detail::grad_impl(pred, target, w.beta, w.beta != 0 ? g : nullptr);
  r.corr = detail::corr_impl(pred, target, scope.corr, w.gamma, w.gamma != 0 ? g : nullptr);
  r.energy = detail::energy_impl(pred, target, pixel_area, scope.energy, w.delta, w.delta != 0 ? g : nullptr,
                                 &r.beam_energy_deviation);
  r.total = w.alpha * r.mse + w.beta * r.grad + w.gamma * r.corr + w.delta * r.energy;
  return r;
}

/// Stage-1 dose objective on one slice: the B = 1 case of mse_loss.
template <class T>
double stage1_mse(std::span<const T> pred, std::span<const T> target, int height, int width) {
  return mse_loss(BeamStack<T>(pred, 1, height, width), BeamStack<T>(target, 1, height, width));
}

enum class LossComponent { kMse, kGrad, kCorr, kEnergy, kFar };

inline LossComponent parse_loss_component(const std::string& s) {
  if (s == "mse") return LossComponent::kMse;
  if (s == "grad") return LossComponent::kGrad;
  if (s == "corr") return LossComponent::kCorr;
  if (s == "energy") return LossComponent::kEnergy;
  if (s == "far") return LossComponent::kFar;
  throw ConfigError("unknown loss component '" + s + "' (expected mse, grad, corr, energy or far)");
}

inline const char* to_string(LossComponent c) {
  switch (c) {
    case LossComponent::kMse: return "mse";
    case LossComponent::kGrad: return "grad";
    case LossComponent::kCorr: return "corr";
    case LossComponent::kEnergy: return "energy";
    case LossComponent::kFar: return "far";
  }
  return "?";
}

/// Arguments shared by loss_value / loss_gradient. For single components
/// the weights are ignored (unit weight).
struct LossSpec {
  LossComponent component = LossComponent::kFar;
  LossWeights weights;
  ScopeConfig scope;
  double pixel_area = 1.0;
};

template <class T>
double loss_value(const LossSpec& spec, const BeamStack<T>& pred, const BeamStack<T>& target) {
  switch (spec.component) {
    case LossComponent::kMse: return mse_loss(pred, target);
    case LossComponent::kGrad: return grad_loss(pred, target);
    case LossComponent::kCorr: return corr_loss(pred, target, spec.scope.corr);
    case LossComponent::kEnergy: return energy_loss(pred, target, spec.pixel_area, spec.scope.energy);
    case LossComponent::kFar: return far_loss(pred, target, spec.weights, spec.scope, spec.pixel_area).total;
  }
  return 0.0;
}

/// Exact derivative of the selected loss with respect to pred. The L1 terms
/// use subgradient 0 at ties.
template <class T>
std::vector<double> loss_gradient(const LossSpec& spec, const BeamStack<T>& pred, const BeamStack<T>& target) {
  std::vector<double> g(pred.values.size(), 0.0);
  switch (spec.component) {
    case LossComponent::kMse: detail::mse_impl(pred, target, 1.0, g.data()); break;
    case LossComponent::kGrad: detail::grad_impl(pred, target, 1.0, g.data()); break;
    case LossComponent::kCorr: detail::corr_impl(pred, target, spec.scope.corr, 1.0, g.data()); break;
    case LossComponent::kEnergy:
      detail::energy_impl(pred, target, spec.pixel_area, spec.scope.energy, 1.0, g.data(), nullptr);
      break;
    case LossComponent::kFar: far_loss(pred, target, spec.weights, spec.scope, spec.pixel_area, g); break;
  }
  return g;
}

}  // namespace fluencelab
