// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Input assembly for the two stages and the plan-level inference driver.

#pragma once

#include <string>
#include <vector>

#include "fluencelab/geometry.hpp"
#include "fluencelab/model.hpp"
#include "fluencelab/types.hpp"

namespace fluencelab {

/// Stage-1 anatomy encoding: one weighted contour channel, or separate
/// body / PTV / OAR channels (OAR slots beyond the case's count stay zero).
enum class ContourMode { kCombined, kExpanded };

inline constexpr int kExpandedOarSlots = 3;
inline constexpr float kBodyWeight = 0.25f;
inline constexpr float kPtvWeight = 1.0f;
inline constexpr float kOarWeight = 0.5f;

inline const char* to_string(ContourMode m) { return m == ContourMode::kCombined ? "combined" : "expanded"; }

inline ContourMode parse_contour_mode(const std::string& s) {
  if (s == "combined") return ContourMode::kCombined;
  if (s == "expanded") return ContourMode::kExpanded;
  throw ConfigError("unknown contour mode '" + s + "' (expected combined or expanded)");
}

inline int stage1_channels(ContourMode m) { return m == ContourMode::kCombined ? 2 : 3 + kExpandedOarSlots; }

/// How Stage 2 sees the Stage-1 dose: one image per case (mean over PTV
/// slices) or every slice separately with the same per-beam target.
enum class DoseInputMode { kCollapsed, kSlice };

inline const char* to_string(DoseInputMode m) { return m == DoseInputMode::kCollapsed ? "collapsed" : "slice"; }

inline DoseInputMode parse_dose_input_mode(const std::string& s) {
  if (s == "collapsed") return DoseInputMode::kCollapsed;
  if (s == "slice") return DoseInputMode::kSlice;
  throw ConfigError("unknown stage-2 dose input '" + s + "' (expected collapsed or slice)");
}

/// Slices where the PTV is present; all slices when it is absent everywhere.
inline std::vector<int> ptv_slices(const CaseRecord& c) {
  const auto& ptv = c.mask("ptv");
  std::vector<int> out;
  for (int z = 0; z < ptv.depth(); ++z) {
    const auto s = ptv.slice_span(z);
    if (std::any_of(s.begin(), s.end(), [](float v) { return v != 0.0f; })) out.push_back(z);
  }
  if (out.empty())
    for (int z = 0; z < ptv.depth(); ++z) out.push_back(z);
  return out;
}

/// Mean of the given slices of a volume.
inline Slice2D collapse(const Volume3D& vol, const std::vector<int>& slices) {
  std::vector<double> acc(vol.slice_size(), 0.0);
  for (int z : slices) {
    const auto s = vol.slice_span(z);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
  }
  Slice2D out(vol.height(), vol.width());
  for (std::size_t i = 0; i < acc.size(); ++i) out.values()[i] = static_cast<float>(acc[i] / slices.size());
  return out;
}

/// Weighted contour of one slice: 0.25 body + 1.0 PTV + 0.5 per OAR.
inline Slice2D contour_slice(const CaseRecord& c, int z) {
  Slice2D out(c.ct.height(), c.ct.width());
  auto dst = out.values();
  auto add = [&](const Volume3D& m, float w) {
    const auto s = m.slice_span(z);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * s[i];
  };
  add(c.mask("body"), kBodyWeight);
  add(c.mask("ptv"), kPtvWeight);
  for (const auto* oar : c.oar_masks()) add(*oar, kOarWeight);
  return out;
}

inline nn::Tensor stage1_input(const CaseRecord& c, int z, ContourMode mode = ContourMode::kCombined) {
  const int h = c.ct.height(), w = c.ct.width();
  nn::Tensor x(stage1_channels(mode), h, w);
  auto put = [&](int ch, std::span<const float> s) { std::copy(s.begin(), s.end(), x.channel(ch).begin()); };
  put(0, c.ct.slice_span(z));
  if (mode == ContourMode::kCombined) {
    put(1, contour_slice(c, z).values());
  } else {
    put(1, c.mask("body").slice_span(z));
    put(2, c.mask("ptv").slice_span(z));
    const auto oars = c.oar_masks();
    for (int k = 0; k < kExpandedOarSlots && k < static_cast<int>(oars.size()); ++k) put(3 + k, oars[k]->slice_span(z));
  }
  return x;
}

/// Channels exactly [dose, sin map, cos map].
inline nn::Tensor stage2_assemble(const Slice2D& dose, GantryAngle theta) {
  nn::Tensor x(3, dose.height(), dose.width());
  const auto maps = angle_maps(theta, dose.height(), dose.width());
  std::copy(dose.values().begin(), dose.values().end(), x.channel(0).begin());
  std::copy(maps.sin_map.values().begin(), maps.sin_map.values().end(), x.channel(1).begin());
  std::copy(maps.cos_map.values().begin(), maps.cos_map.values().end(), x.channel(2).begin());
  return x;
}

inline Slice2D to_slice(const nn::Tensor& t) {
  if (t.c != 1) throw ConfigError("expected a single-channel map");
  return Slice2D(t.h, t.w, t.v);
}

/// Stage-1 prediction of the whole dose volume, slice by slice.
inline Volume3D predict_dose(const Model& stage1, const CaseRecord& c, ContourMode mode = ContourMode::kCombined) {
  std::vector<nn::Tensor> xs;
  for (int z = 0; z < c.ct.depth(); ++z) xs.push_back(stage1_input(c, z, mode));
  const auto ys = stage1.predict_batch(xs);
  std::vector<float> values;
  values.reserve(c.ct.size());
  for (const auto& y : ys) values.insert(values.end(), y.v.begin(), y.v.end());
  return Volume3D(c.ct.depth(), c.ct.height(), c.ct.width(), std::move(values), c.ct.spacing());
}

/// Stage-2 dose images: one collapsed image, or every slice.
inline std::vector<Slice2D> stage2_dose_images(const Volume3D& dose, const CaseRecord& c, DoseInputMode mode) {
  if (mode == DoseInputMode::kCollapsed) return {collapse(dose, ptv_slices(c))};
  std::vector<Slice2D> out;
  for (int z = 0; z < dose.depth(); ++z) out.push_back(dose.slice(z));
  return out;
}

struct PlanOptions {
  ContourMode contour = ContourMode::kCombined;
  DoseInputMode dose_input = DoseInputMode::kCollapsed;
};

/// Stage-2 fluence for every beam of a plan given the dose prior. In slice
/// mode the per-slice predictions are averaged over the PTV slices.
inline std::vector<Slice2D> predict_fluence(const Model& stage2, const Volume3D& dose, const CaseRecord& c,
                                            const std::vector<double>& angles, DoseInputMode mode) {
  const auto images = stage2_dose_images(dose, c, mode);
  std::vector<nn::Tensor> xs;
  for (double a : angles)
    for (const auto& img : images) xs.push_back(stage2_assemble(img, GantryAngle(a)));
  const auto ys = stage2.predict_batch(xs);
  std::vector<Slice2D> out;
  if (mode == DoseInputMode::kCollapsed) {
    for (const auto& y : ys) out.push_back(to_slice(y));
    return out;
  }
  const auto keep = ptv_slices(c);
  const std::size_t per = images.size();
  for (std::size_t b = 0; b < angles.size(); ++b) {
    Volume3D stack(static_cast<int>(per), dose.height(), dose.width());
    for (std::size_t z = 0; z < per; ++z) {
      const auto& y = ys[b * per + z].v;
      std::copy(y.begin(), y.end(), stack.slice_span(static_cast<int>(z)).begin());
    }
    out.push_back(collapse(stack, keep));
  }
  return out;
}

/// Runs Stage 1 over the case, then Stage 2 once per angle in case order.
inline std::vector<Slice2D> infer_plan(const Model& stage1, const Model& stage2, const CaseRecord& c,
                                       const PlanOptions& opt = {}) {
  return predict_fluence(stage2, predict_dose(stage1, c, opt.contour), c, c.angles, opt.dose_input);
}

/// Single-stage input: anatomy collapsed over the PTV slices plus angle maps,
/// [CT, contour, sin, cos].
inline nn::Tensor single_stage_input(const CaseRecord& c, GantryAngle theta) {
  const auto keep = ptv_slices(c);
  const int h = c.ct.height(), w = c.ct.width();
  std::vector<float> contour;
  contour.reserve(c.ct.size());
  for (int z = 0; z < c.ct.depth(); ++z) {
    const auto s = contour_slice(c, z);
    contour.insert(contour.end(), s.values().begin(), s.values().end());
  }
  const Slice2D ct = collapse(c.ct, keep);
  const Slice2D ctr = collapse(Volume3D(c.ct.depth(), h, w, std::move(contour)), keep);
  const auto maps = angle_maps(theta, h, w);
  nn::Tensor x(4, h, w);
  const Slice2D* parts[] = {&ct, &ctr, &maps.sin_map, &maps.cos_map};
  for (int k = 0; k < 4; ++k) std::copy(parts[k]->values().begin(), parts[k]->values().end(), x.channel(k).begin());
  return x;
}

inline constexpr int kSingleStageChannels = 4;

/// Single-stage fluence for every beam of a case, in case order.
inline std::vector<Slice2D> predict_single_stage(const Model& model, const CaseRecord& c) {
  std::vector<nn::Tensor> xs;
  for (double a : c.angles) xs.push_back(single_stage_input(c, GantryAngle(a)));
  std::vector<Slice2D> out;
  for (const auto& y : model.predict_batch(xs)) out.push_back(to_slice(y));
  return out;
}

}  // namespace fluencelab
