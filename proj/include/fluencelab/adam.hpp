// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fluencelab/nn/tensor.hpp"

namespace fluencelab {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const {
    if (!(lr > 0)) throw ConfigError("learning rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0)) throw ConfigError("Adam epsilon must be > 0");
    if (!(clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0");
  }
};

/// One bias-corrected Adam update of a flat buffer at step `step` (1-based).
/// Arithmetic is carried out in double regardless of T.
template <class T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v, std::int64_t step,
                 const AdamConfig& cfg, double grad_scale = 1.0) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad_scale * grads[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    params[i] = static_cast<T>(params[i] - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
  }
}

struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const nn::ParamStore& ps) {
    for (const auto& p : ps.all()) {
      m.emplace_back(p.value.size(), 0.0f);
      v.emplace_back(p.value.size(), 0.0f);
    }
  }

  bool matches(const nn::ParamStore& ps) const {
    if (m.size() != ps.size() || v.size() != ps.size()) return false;
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (m[i].size() != ps[i].value.size() || v[i].size() != ps[i].value.size()) return false;
    return true;
  }
};

inline double gradient_norm(const nn::Gradients& g) {
  double s = 0;
  for (const auto& buf : g.g)
    for (float x : buf) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

/// Applies one Adam step to every parameter, clipping the global gradient
/// norm first when configured.
inline void adam_step(nn::ParamStore& ps, const nn::Gradients& g, AdamState& state, const AdamConfig& cfg) {
  if (!state.matches(ps)) throw ConfigError("optimizer state does not match the parameters");
  double scale = 1.0;
  if (cfg.clip_norm > 0) {
    const double norm = gradient_norm(g);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }
  ++state.step;
  for (std::size_t i = 0; i < ps.size(); ++i)
    adam_update<float>(ps[i].value, g.g[i], state.m[i], state.v[i], state.step, cfg, scale);
}

}  // namespace fluencelab
