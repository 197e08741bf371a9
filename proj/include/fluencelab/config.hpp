// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration file: flat `section.key = value` text covering the
// phantom, split ratios, backbone, optimizer and loss. Unknown keys are
// errors. Ranges are written "lo,hi".
//
//   phantom.*   grid, beams, anatomy ranges, modulation, physics, seed
//   split.*     train / val / test ratios
//   backbone.*  kind, base, levels, window, heads, head_layers, head_width, norm
//   train.*     lr, beta1, beta2, eps, clip_norm, batch, epochs, seed,
//               teacher_dose, deterministic, contour, dose_input
//   loss.*      kind, alpha, beta, gamma, delta, corr_scope, energy_scope,
//               pixel_area (0 takes the dataset manifest value)

#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fluencelab/kv_text.hpp"
#include "fluencelab/phantom.hpp"
#include "fluencelab/training.hpp"

namespace fluencelab {

struct RunConfig {
  PhantomConfig phantom;
  SplitRatios split;
  BackboneConfig backbone;
  TrainConfig train;

  void validate() const {
    phantom.validate();
    backbone.validate();
    train.validate();
    if (split.train < 0 || split.val < 0 || split.test < 0 || split.train + split.val + split.test > 1.0 + 1e-9)
      throw ConfigError("split ratios must be non-negative and sum to at most 1");
  }
};

namespace detail {

inline std::string range_text(const Range& r) { return format_double(r.lo) + "," + format_double(r.hi); }

inline Range parse_range(const std::string& text, const std::string& key) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ConfigError("expected 'lo,hi' for " + key + ": '" + text + "'");
  return {parse_double(parts[0], key), parse_double(parts[1], key)};
}

/// One binding per key: how to print the field and how to set it from text.
struct Binding {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Binding number(T RunConfig::*section, double T::*field) {
  return {[=](const RunConfig& c) { return format_double(c.*section.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.*section.*field = parse_double(v, k); }};
}

template <class T>
Binding integer(T RunConfig::*section, int T::*field) {
  return {[=](const RunConfig& c) { return std::to_string(c.*section.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) {
            const long long n = parse_int(v, k);
            if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max())
              throw ConfigError(k + " is out of range");
            c.*section.*field = static_cast<int>(n);
          }};
}

template <class T>
Binding flag(T RunConfig::*section, bool T::*field) {
  return {[=](const RunConfig& c) { return std::string(c.*section.*field ? "true" : "false"); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.*section.*field = parse_bool(v, k); }};
}

inline Binding range(Range PhantomConfig::*field) {
  return {[=](const RunConfig& c) { return range_text(c.phantom.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.phantom.*field = parse_range(v, k); }};
}

inline Binding adam(double AdamConfig::*field) {
  return {[=](const RunConfig& c) { return format_double(c.train.adam.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.train.adam.*field = parse_double(v, k); }};
}

inline Binding weight(double LossWeights::*field) {
  return {[=](const RunConfig& c) { return format_double(c.train.weights.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.train.weights.*field = parse_double(v, k); }};
}

inline const std::vector<std::pair<std::string, Binding>>& bindings() {
  using P = PhantomConfig;
  using B = BackboneConfig;
  using T = TrainConfig;
  using S = SplitRatios;
  static const std::vector<std::pair<std::string, Binding>> table = {
      {"phantom.depth", integer(&RunConfig::phantom, &P::depth)},
      {"phantom.height", integer(&RunConfig::phantom, &P::height)},
      {"phantom.width", integer(&RunConfig::phantom, &P::width)},
      {"phantom.beams", integer(&RunConfig::phantom, &P::beams)},
      {"phantom.start_angle", number(&RunConfig::phantom, &P::start_angle)},
      {"phantom.body_semi_x", range(&P::body_semi_x)},
      {"phantom.body_semi_y", range(&P::body_semi_y)},
      {"phantom.ptv_radius", range(&P::ptv_radius)},
      {"phantom.ptv_max_offset", number(&RunConfig::phantom, &P::ptv_max_offset)},
      {"phantom.ptv_slice_fraction", range(&P::ptv_slice_fraction)},
      {"phantom.oar_count_min", integer(&RunConfig::phantom, &P::oar_count_min)},
      {"phantom.oar_count_max", integer(&RunConfig::phantom, &P::oar_count_max)},
      {"phantom.oar_radius", range(&P::oar_radius)},
      {"phantom.ptv_margin", integer(&RunConfig::phantom, &P::ptv_margin)},
      {"phantom.oar_sparing", number(&RunConfig::phantom, &P::oar_sparing)},
      {"phantom.noise_amplitude", number(&RunConfig::phantom, &P::noise_amplitude)},
      {"phantom.noise_radius", integer(&RunConfig::phantom, &P::noise_radius)},
      {"phantom.ct_noise", number(&RunConfig::phantom, &P::ct_noise)},
      {"phantom.attenuation", number(&RunConfig::phantom, &P::attenuation)},
      {"phantom.base_intensity", number(&RunConfig::phantom, &P::base_intensity)},
      {"phantom.pixel_spacing_mm", number(&RunConfig::phantom, &P::pixel_spacing_mm)},
      {"phantom.slice_thickness_mm", number(&RunConfig::phantom, &P::slice_thickness_mm)},
      {"phantom.seed",
       {[](const RunConfig& c) { return std::to_string(c.phantom.seed); },
        [](RunConfig& c, const std::string& v, const std::string& k) { c.phantom.seed = parse_u64(v, k); }}},

      {"split.train", number(&RunConfig::split, &S::train)},
      {"split.val", number(&RunConfig::split, &S::val)},
      {"split.test", number(&RunConfig::split, &S::test)},

      {"backbone.kind",
       {[](const RunConfig& c) { return std::string(to_string(c.backbone.kind)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.backbone.kind = parse_backbone_kind(v); }}},
      {"backbone.base", integer(&RunConfig::backbone, &B::base)},
      {"backbone.levels", integer(&RunConfig::backbone, &B::levels)},
      {"backbone.window", integer(&RunConfig::backbone, &B::window)},
      {"backbone.heads", integer(&RunConfig::backbone, &B::heads)},
      {"backbone.head_layers", integer(&RunConfig::backbone, &B::head_layers)},
      {"backbone.head_width", integer(&RunConfig::backbone, &B::head_width)},
      {"backbone.norm",
       {[](const RunConfig& c) { return std::string(to_string(c.backbone.norm)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.backbone.norm = parse_norm_kind(v); }}},

      {"train.lr", adam(&AdamConfig::lr)},
      {"train.beta1", adam(&AdamConfig::beta1)},
      {"train.beta2", adam(&AdamConfig::beta2)},
      {"train.eps", adam(&AdamConfig::eps)},
      {"train.clip_norm", adam(&AdamConfig::clip_norm)},
      {"train.batch", integer(&RunConfig::train, &T::batch)},
      {"train.epochs", integer(&RunConfig::train, &T::epochs)},
      {"train.seed",
       {[](const RunConfig& c) { return std::to_string(c.train.seed); },
        [](RunConfig& c, const std::string& v, const std::string& k) { c.train.seed = parse_u64(v, k); }}},
      {"train.teacher_dose", flag(&RunConfig::train, &T::teacher_dose)},
      {"train.deterministic", flag(&RunConfig::train, &T::deterministic)},
      {"train.contour",
       {[](const RunConfig& c) { return std::string(to_string(c.train.contour)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.train.contour = parse_contour_mode(v); }}},
      {"train.dose_input",
       {[](const RunConfig& c) { return std::string(to_string(c.train.dose_input)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.train.dose_input = parse_dose_input_mode(v); }}},

      {"loss.kind",
       {[](const RunConfig& c) { return std::string(to_string(c.train.loss)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.train.loss = parse_loss_kind(v); }}},
      {"loss.alpha", weight(&LossWeights::alpha)},
      {"loss.beta", weight(&LossWeights::beta)},
      {"loss.gamma", weight(&LossWeights::gamma)},
      {"loss.delta", weight(&LossWeights::delta)},
      {"loss.corr_scope",
       {[](const RunConfig& c) { return std::string(to_string(c.train.scope.corr)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.train.scope.corr = parse_scope(v); }}},
      {"loss.energy_scope",
       {[](const RunConfig& c) { return std::string(to_string(c.train.scope.energy)); },
        [](RunConfig& c, const std::string& v, const std::string&) { c.train.scope.energy = parse_scope(v); }}},
      {"loss.pixel_area", number(&RunConfig::train, &T::pixel_area)},
  };
  return table;
}

}  // namespace detail

/// Applies `key = value` entries on top of `base`. Unknown keys throw.
inline RunConfig apply_config(const KeyValueText& kv, RunConfig base = {}) {
  const auto& table = detail::bindings();
  for (const auto& [key, value] : kv.entries()) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& b) { return b.first == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(base, value, key);
  }
  base.validate();
  return base;
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "config") {
  return apply_config(KeyValueText::parse(text, origin));
}

inline RunConfig read_config(const std::filesystem::path& path) { return apply_config(KeyValueText::read(path)); }

/// Every key with its current value, in the documented order.
inline KeyValueText config_to_text(const RunConfig& c) {
  KeyValueText kv;
  for (const auto& [key, b] : detail::bindings()) kv.set(key, b.get(c));
  return kv;
}

}  // namespace fluencelab
