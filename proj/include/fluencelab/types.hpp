// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"

namespace fluencelab {

/// Voxel spacing in millimetres.
struct Spacing {
  double z = 3.0;
  double y = 4.0;
  double x = 4.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Single-channel 2D image, row-major. Values may be negative (angle maps).
class Slice2D {
 public:
  Slice2D() = default;
  Slice2D(int height, int width, float fill = 0.0f) : Slice2D(height, width, std::vector<float>(checked_size(height, width), fill)) {}
  Slice2D(int height, int width, std::vector<float> values) : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != checked_size(height, width))
      throw ConfigError("Slice2D buffer length " + std::to_string(values_.size()) + " != H*W");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  float& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  const std::vector<float>& buffer() const { return values_; }

  double sum() const {
    double s = 0.0;
    for (float v : values_) s += v;
    return s;
  }

  friend bool operator==(const Slice2D&, const Slice2D&) = default;

 private:
  static std::size_t checked_size(int h, int w) {
    if (h < 1 || w < 1) throw ConfigError("Slice2D dimensions must be >= 1");
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

/// D x H x W non-negative volume, row-major with depth outermost.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(int depth, int height, int width, Spacing spacing = {})
      : depth_(depth), height_(height), width_(width), spacing_(spacing) {
    values_.assign(checked_size(depth, height, width), 0.0f);
  }
  Volume3D(int depth, int height, int width, std::vector<float> values, Spacing spacing = {})
      : depth_(depth), height_(height), width_(width), values_(std::move(values)), spacing_(spacing) {
    if (values_.size() != checked_size(depth, height, width))
      throw ConfigError("Volume3D buffer length " + std::to_string(values_.size()) + " != D*H*W");
    for (float v : values_)
      if (!(v >= 0.0f) || !std::isfinite(v)) throw ConfigError("Volume3D values must be finite and non-negative");
  }

  int depth() const { return depth_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return values_.size(); }
  std::size_t slice_size() const { return static_cast<std::size_t>(height_) * width_; }

  float& at(int z, int y, int x) { return values_[(static_cast<std::size_t>(z) * height_ + y) * width_ + x]; }
  float at(int z, int y, int x) const { return values_[(static_cast<std::size_t>(z) * height_ + y) * width_ + x]; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  std::span<const float> slice_span(int z) const { return std::span<const float>(values_).subspan(z * slice_size(), slice_size()); }
  std::span<float> slice_span(int z) { return std::span<float>(values_).subspan(z * slice_size(), slice_size()); }

  Slice2D slice(int z) const {
    auto s = slice_span(z);
    return Slice2D(height_, width_, std::vector<float>(s.begin(), s.end()));
  }

  bool same_shape(const Volume3D& o) const { return depth_ == o.depth_ && height_ == o.height_ && width_ == o.width_; }

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  static std::size_t checked_size(int d, int h, int w) {
    if (d < 1 || h < 1 || w < 1) throw ConfigError("Volume3D dimensions must be >= 1");
    return static_cast<std::size_t>(d) * h * w;
  }

  int depth_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
  Spacing spacing_;
};

struct NamedMask {
  std::string name;
  Volume3D mask;

  friend bool operator==(const NamedMask&, const NamedMask&) = default;
};

/// One patient: CT, structure masks, dose and one fluence map per beam.
/// Masks are ordered body, ptv, then one or more organs at risk.
struct CaseRecord {
  std::string case_id;
  Volume3D ct;
  std::vector<NamedMask> masks;
  Volume3D dose;
  std::vector<Slice2D> fluence;
  std::vector<double> angles;

  int beams() const { return static_cast<int>(fluence.size()); }

  const Volume3D& mask(const std::string& name) const {
    for (const auto& m : masks)
      if (m.name == name) return m.mask;
    throw DataError("case " + case_id + " has no mask '" + name + "'");
  }

  std::vector<const Volume3D*> oar_masks() const {
    std::vector<const Volume3D*> out;
    for (const auto& m : masks)
      if (m.name != "body" && m.name != "ptv") out.push_back(&m.mask);
    return out;
  }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const {
    if (fluence.empty()) throw ConfigError("case " + case_id + ": at least one beam required");
    if (fluence.size() != angles.size()) throw ConfigError("case " + case_id + ": fluence/angle count mismatch");
    if (!ct.same_shape(dose)) throw ConfigError("case " + case_id + ": ct/dose shape mismatch");
    bool has_body = false, has_ptv = false;
    int oars = 0;
    for (const auto& m : masks) {
      if (!m.mask.same_shape(ct)) throw ConfigError("case " + case_id + ": mask '" + m.name + "' shape mismatch");
      for (float v : m.mask.values())
        if (v != 0.0f && v != 1.0f) throw ConfigError("case " + case_id + ": mask '" + m.name + "' is not binary");
      has_body |= m.name == "body";
      has_ptv |= m.name == "ptv";
      oars += (m.name != "body" && m.name != "ptv");
    }
    if (!has_body || !has_ptv || oars < 1) throw ConfigError("case " + case_id + ": masks must include body, ptv and >= 1 OAR");
    const auto body = mask("body").values();
    const auto ptv = mask("ptv").values();
    for (std::size_t i = 0; i < ptv.size(); ++i)
      if (ptv[i] > body[i]) throw ConfigError("case " + case_id + ": PTV mask not contained in body mask");
    for (const auto& f : fluence) {
      if (f.height() != ct.height() || f.width() != ct.width())
        throw ConfigError("case " + case_id + ": fluence map shape mismatch");
      for (float v : f.values())
        if (!(v >= 0.0f) || !std::isfinite(v)) throw ConfigError("case " + case_id + ": negative fluence");
    }
    for (double a : angles)
      if (!(a >= 0.0 && a < 360.0)) throw ConfigError("case " + case_id + ": angle outside [0, 360)");
  }

  friend bool operator==(const CaseRecord&, const CaseRecord&) = default;
};

enum class Split { kTrain, kVal, kTest };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

/// Dataset-level constants and the split assignment.
struct DatasetManifest {
  int n_cases = 0;
  std::uint64_t seed = 0;
  double dose_scale = 1.0;
  double fluence_scale = 1.0;
  double pixel_area = 16.0;  // mm^2
  double value_range = 1.0;  // max scaled ground-truth fluence
  SplitRatios ratios;
  std::map<std::string, Split> assignment;

  void validate() const {
    if (!(dose_scale > 0) || !(fluence_scale > 0) || !(pixel_area > 0) || !(value_range > 0))
      throw ConfigError("manifest scales, pixel area and value range must be positive");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
      throw ConfigError("manifest split ratios must sum to 1");
    if (static_cast<int>(assignment.size()) != n_cases)
      throw ConfigError("manifest split assignment does not cover every case");
  }

  std::vector<std::string> cases_in(Split s) const {
    std::vector<std::string> out;
    for (const auto& [id, split] : assignment)
      if (split == s) out.push_back(id);
    return out;
  }
};

}  // namespace fluencelab
