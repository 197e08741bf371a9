// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic IMRT cases with analytically consistent fluence and dose.
//
// Each case has a body ellipse, a PTV ellipsoid spanning a block of central
// slices, and one to three organ-at-risk ellipses abutting the PTV. Beam
// apertures are the beam's-eye-view footprint of the margin-dilated PTV;
// intensity inside the aperture is reduced where the beam path crosses OAR
// voxels and perturbed by smooth seeded noise. Dose is the attenuated sum of
// all beams.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fluencelab/dataset.hpp"
#include "fluencelab/geometry.hpp"
#include "fluencelab/parallel.hpp"
#include "fluencelab/random.hpp"
#include "fluencelab/types.hpp"

namespace fluencelab {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct PhantomConfig {
  int depth = 8;
  int height = 64;
  int width = 64;
  int beams = 9;
  double start_angle = 0.0;  // degrees

  Range body_semi_x{0.34, 0.42};  // fraction of width
  Range body_semi_y{0.26, 0.32};  // fraction of height
  Range ptv_radius{5.0, 9.0};     // pixels
  double ptv_max_offset = 4.0;    // pixels from image centre
  Range ptv_slice_fraction{0.5, 0.75};
  int oar_count_min = 1;
  int oar_count_max = 3;
  Range oar_radius{4.0, 8.0};  // pixels

  int ptv_margin = 2;          // pixels
  double oar_sparing = 0.5;    // lambda in [0, 1)
  double noise_amplitude = 0.1;  // fraction of base intensity
  int noise_radius = 3;        // box-filter radius, pixels
  double ct_noise = 0.03;
  double attenuation = 0.02;   // per slice
  double base_intensity = 1.0;
  double pixel_spacing_mm = 4.0;
  double slice_thickness_mm = 3.0;
  std::uint64_t seed = 0;

  Spacing spacing() const { return {slice_thickness_mm, pixel_spacing_mm, pixel_spacing_mm}; }

  void validate() const {
    auto range_ok = [](const Range& r) { return r.lo > 0 && r.hi >= r.lo && std::isfinite(r.hi); };
    if (depth < 1 || height < 8 || width < 8) throw ConfigError("phantom grid must be at least 1x8x8");
    if (beams < 1) throw ConfigError("phantom.beams must be >= 1");
    if (!(oar_sparing >= 0.0 && oar_sparing < 1.0)) throw ConfigError("phantom.oar_sparing must lie in [0, 1)");
    if (!(attenuation > 0.0)) throw ConfigError("phantom.attenuation must be > 0");
    if (!range_ok(body_semi_x) || !range_ok(body_semi_y) || !range_ok(ptv_radius) || !range_ok(oar_radius) ||
        !range_ok(ptv_slice_fraction) || ptv_slice_fraction.hi > 1.0)
      throw ConfigError("phantom ellipse ranges must be positive with lo <= hi");
    if (oar_count_min < 1 || oar_count_max < oar_count_min || oar_count_max > 3)
      throw ConfigError("phantom OAR count range must satisfy 1 <= min <= max <= 3");
    if (ptv_margin < 0 || noise_radius < 0 || noise_amplitude < 0 || ct_noise < 0 || ptv_max_offset < 0)
      throw ConfigError("phantom margins and noise parameters must be non-negative");
    if (!(base_intensity > 0) || !(pixel_spacing_mm > 0) || !(slice_thickness_mm > 0))
      throw ConfigError("phantom intensities and spacings must be positive");
  }
};

/// Body, PTV and OAR masks of one case.
struct StructureSet {
  Volume3D body;
  Volume3D ptv;
  std::vector<Volume3D> oars;
};

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry, phi;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(phi), s = std::sin(phi);
    const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
  /// Extent of the ellipse along the unit direction (ux, uy).
  double reach(double ux, double uy) const {
    const double c = std::cos(phi), s = std::sin(phi);
    const double u = ux * c + uy * s, v = -ux * s + uy * c;
    return 1.0 / std::sqrt(u * u / (rx * rx) + v * v / (ry * ry));
  }
};

/// Box filter applied twice, zero padded.
inline std::vector<double> smooth(std::vector<double> field, int h, int w, int radius) {
  if (radius <= 0) return field;
  std::vector<double> tmp(field.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0;
        for (int k = std::max(0, x - radius); k <= std::min(w - 1, x + radius); ++k) s += field[y * w + k];
        tmp[y * w + x] = s / (2 * radius + 1);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0;
        for (int k = std::max(0, y - radius); k <= std::min(h - 1, y + radius); ++k) s += tmp[k * w + x];
        field[y * w + x] = s / (2 * radius + 1);
      }
  }
  return field;
}

/// Smooth zero-mean-ish noise with max |value| = 1 (all zeros if degenerate).
inline std::vector<double> smooth_noise(int h, int w, int radius, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> field(static_cast<std::size_t>(h) * w);
  for (auto& v : field) v = rng.uniform(-1.0, 1.0);
  field = smooth(std::move(field), h, w, radius);
  double peak = 0;
  for (double v : field) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (auto& v : field) v /= peak;
  return field;
}

inline Volume3D dilate(const Volume3D& mask, int radius) {
  if (radius <= 0) return mask;
  Volume3D out(mask.depth(), mask.height(), mask.width(), mask.spacing());
  for (int z = 0; z < mask.depth(); ++z)
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x) {
        if (mask.at(z, y, x) == 0.0f) continue;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (dx * dx + dy * dy > radius * radius || yy < 0 || yy >= mask.height() || xx < 0 || xx >= mask.width())
              continue;
            out.at(z, yy, xx) = 1.0f;
          }
      }
  return out;
}

}  // namespace detail

/// Ground-truth fluence for one beam. `noise_seed` selects the smooth
/// modulation noise; it is ignored when the noise amplitude is zero.
inline Slice2D fluence_ground_truth(const StructureSet& s, GantryAngle theta, const PhantomConfig& cfg,
                                    std::uint64_t noise_seed) {
  const int h = s.ptv.height(), w = s.ptv.width(), d = s.ptv.depth();
  Volume3D ones(d, h, w, std::vector<float>(s.ptv.size(), 1.0f));
  Volume3D oar_union(d, h, w);
  for (const auto& oar : s.oars) {
    const auto src = oar.values();
    auto dst = oar_union.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(dst[i], src[i]);
  }
  const Slice2D coverage = bev_project(ones, theta);
  const Slice2D organ = bev_project(oar_union, theta);
  // A ray is open when some slice of the dilated PTV covers at least half of
  // its (interpolated) footprint in that slice.
  const Volume3D dilated = detail::dilate(s.ptv, cfg.ptv_margin);
  std::vector<char> open(static_cast<std::size_t>(h) * w, 0);
  for (int z = 0; z < d; ++z) {
    const Slice2D part = bev_project(Volume3D(1, h, w, std::vector<float>(dilated.slice_span(z).begin(),
                                                                         dilated.slice_span(z).end())),
                                     theta);
    for (std::size_t i = 0; i < open.size(); ++i) {
      const double cov = coverage.values()[i] / d;
      if (cov > 0 && part.values()[i] / cov >= 0.5) open[i] = 1;
    }
  }
  std::vector<double> noise;
  if (cfg.noise_amplitude > 0) noise = detail::smooth_noise(h, w, cfg.noise_radius, noise_seed);

  Slice2D out(h, w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double cov = coverage.values()[i];
    if (cov <= 0 || !open[i]) continue;
    const double overlap = std::clamp(organ.values()[i] / cov, 0.0, 1.0);
    double v = cfg.base_intensity * (1.0 - cfg.oar_sparing * overlap);
    if (!noise.empty()) v += cfg.noise_amplitude * cfg.base_intensity * noise[i];
    out.values()[i] = static_cast<float>(std::max(0.0, v));
  }
  return out;
}

/// Sum of the attenuated back-projections of every beam.
inline Volume3D dose_ground_truth(const std::vector<Slice2D>& fluence, const std::vector<double>& angles,
                                  const PhantomConfig& cfg) {
  if (fluence.size() != angles.size()) throw ConfigError("dose_ground_truth: fluence/angle count mismatch");
  if (fluence.empty()) throw ConfigError("dose_ground_truth: no beams");
  const int h = fluence.front().height(), w = fluence.front().width();
  std::vector<double> acc(static_cast<std::size_t>(cfg.depth) * h * w, 0.0);
  for (std::size_t b = 0; b < fluence.size(); ++b) {
    const Volume3D part = back_project(fluence[b], GantryAngle(angles[b]), cfg.attenuation, cfg.depth, cfg.spacing());
    const auto v = part.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  std::vector<float> values(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) values[i] = static_cast<float>(acc[i]);
  return Volume3D(cfg.depth, h, w, std::move(values), cfg.spacing());
}

inline std::string case_id_for(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04d", index);
  return buf;
}

inline StructureSet generate_structures(const PhantomConfig& cfg, Rng& rng) {
  const int d = cfg.depth, h = cfg.height, w = cfg.width;
  const Spacing sp = cfg.spacing();
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  StructureSet s{Volume3D(d, h, w, sp), Volume3D(d, h, w, sp), {}};

  const detail::Ellipse body{cx + rng.uniform(-1, 1), cy + rng.uniform(-1, 1),
                             w * rng.uniform(cfg.body_semi_x.lo, cfg.body_semi_x.hi),
                             h * rng.uniform(cfg.body_semi_y.lo, cfg.body_semi_y.hi), 0.0};
  const detail::Ellipse ptv{cx + rng.uniform(-cfg.ptv_max_offset, cfg.ptv_max_offset),
                            cy + rng.uniform(-cfg.ptv_max_offset, cfg.ptv_max_offset),
                            rng.uniform(cfg.ptv_radius.lo, cfg.ptv_radius.hi),
                            rng.uniform(cfg.ptv_radius.lo, cfg.ptv_radius.hi), rng.uniform(0, std::numbers::pi)};
  const int ptv_slices =
      std::clamp(static_cast<int>(std::lround(d * rng.uniform(cfg.ptv_slice_fraction.lo, cfg.ptv_slice_fraction.hi))), 1, d);
  const int ptv_z0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(d - ptv_slices + 1)));

  const int n_oar = cfg.oar_count_min + static_cast<int>(rng.below(cfg.oar_count_max - cfg.oar_count_min + 1));
  const double psi0 = rng.uniform(0, 2 * std::numbers::pi);
  std::vector<detail::Ellipse> oars;
  for (int k = 0; k < n_oar; ++k) {
    const double psi = psi0 + 2 * std::numbers::pi * k / n_oar + rng.uniform(-0.3, 0.3);
    const double ux = std::cos(psi), uy = std::sin(psi);
    const double r = rng.uniform(cfg.oar_radius.lo, cfg.oar_radius.hi);
    const double r2 = r * rng.uniform(0.7, 1.0);
    // Centre placed so the organ overlaps the PTV outline in-plane.
    const double dist = ptv.reach(ux, uy) + 0.4 * r;
    oars.push_back({ptv.cx + dist * ux, ptv.cy + dist * uy, r, r2, psi});
  }

  s.oars.assign(n_oar, Volume3D(d, h, w, sp));
  for (int z = 0; z < d; ++z) {
    const bool in_ptv_block = z >= ptv_z0 && z < ptv_z0 + ptv_slices;
    // Taper the PTV towards the ends of its slice block.
    const double t = ptv_slices > 1 ? (z - ptv_z0 - 0.5 * (ptv_slices - 1)) / (0.5 * ptv_slices) : 0.0;
    const double taper = std::sqrt(std::max(0.0, 1.0 - 0.5 * t * t));
    detail::Ellipse ptv_z = ptv;
    ptv_z.rx *= taper;
    ptv_z.ry *= taper;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool in_body = body.contains(x, y);
        if (!in_body) continue;
        s.body.at(z, y, x) = 1.0f;
        const bool in_ptv = in_ptv_block && ptv_z.contains(x, y);
        if (in_ptv) s.ptv.at(z, y, x) = 1.0f;
        for (int k = 0; k < n_oar; ++k)
          if (!in_ptv && oars[k].contains(x, y)) s.oars[k].at(z, y, x) = 1.0f;
      }
  }
  return s;
}

/// One synthetic case; a pure function of (config, case_index).
inline CaseRecord generate_case(const PhantomConfig& cfg, int case_index) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(case_index)));
  StructureSet s = generate_structures(cfg, rng);
  const int d = cfg.depth, h = cfg.height, w = cfg.width;

  CaseRecord c;
  c.case_id = case_id_for(case_index);
  c.angles = equally_spaced_angles(cfg.beams, cfg.start_angle);

  const auto ct_noise = detail::smooth_noise(h, w, 2, rng.next_u64());
  std::vector<float> ct(s.body.size());
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = (static_cast<std::size_t>(z) * h + y) * w + x;
        double v = 0.0;
        if (s.body.values()[i] > 0) {
          v = 0.45;
          if (s.ptv.values()[i] > 0) v = 0.55;
          for (std::size_t k = 0; k < s.oars.size(); ++k)
            if (s.oars[k].values()[i] > 0) v = k % 2 == 0 ? 0.35 : 0.6;
          v += cfg.ct_noise * ct_noise[static_cast<std::size_t>(y) * w + x] * (1.0 + 0.1 * z);
        }
        ct[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  c.ct = Volume3D(d, h, w, std::move(ct), cfg.spacing());

  const std::uint64_t beam_seed = rng.next_u64();
  for (int b = 0; b < cfg.beams; ++b)
    c.fluence.push_back(fluence_ground_truth(s, GantryAngle(c.angles[b]), cfg, mix_seed(beam_seed, b)));
  c.dose = dose_ground_truth(c.fluence, c.angles, cfg);

  c.masks.push_back({"body", std::move(s.body)});
  c.masks.push_back({"ptv", std::move(s.ptv)});
  for (std::size_t k = 0; k < s.oars.size(); ++k) c.masks.push_back({"oar" + std::to_string(k + 1), std::move(s.oars[k])});
  c.validate();
  return c;
}

/// Nearest-rank percentile (p in (0, 100]) of the values.
inline double nearest_rank_percentile(std::vector<float> values, double p) {
  if (values.empty()) throw ConfigError("percentile of an empty population");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

struct ScalingConstants {
  double dose_scale = 1.0;
  double fluence_scale = 1.0;
  double value_range = 1.0;
};

/// Chooses global divisors so the population 99th percentile of dose and
/// of fluence becomes 1, then rescales every case in place. When the
/// percentile is zero (sparse populations) the population maximum is used.
inline ScalingConstants finalize_scaling(std::vector<CaseRecord>& cases) {
  if (cases.empty()) throw ConfigError("finalize_scaling: no cases");
  std::vector<float> dose, flu;
  for (const auto& c : cases) {
    dose.insert(dose.end(), c.dose.values().begin(), c.dose.values().end());
    for (const auto& f : c.fluence) flu.insert(flu.end(), f.values().begin(), f.values().end());
  }
  auto pick = [](const std::vector<float>& v) {
    double s = nearest_rank_percentile(v, 99.0);
    if (s <= 0) s = *std::max_element(v.begin(), v.end());
    if (!(s > 0)) throw DataError("finalize_scaling: population is identically zero");
    return s;
  };
  ScalingConstants k;
  k.dose_scale = pick(dose);
  k.fluence_scale = pick(flu);
  double peak = 0;
  for (auto& c : cases) {
    for (auto& v : c.dose.values()) v = static_cast<float>(v / k.dose_scale);
    for (auto& f : c.fluence)
      for (auto& v : f.values()) {
        v = static_cast<float>(v / k.fluence_scale);
        peak = std::max(peak, static_cast<double>(v));
      }
  }
  k.value_range = peak;
  return k;
}

/// Full synthetic dataset: generation, scaling, and split assignment.
inline Dataset generate_dataset(const PhantomConfig& cfg, int n_cases, const SplitRatios& ratios) {
  cfg.validate();
  if (n_cases < 1) throw ConfigError("number of cases must be >= 1");
  Dataset ds;
  ds.cases.resize(n_cases);
  parallel_for(n_cases, [&](int i) { ds.cases[i] = generate_case(cfg, i); });
  const auto k = finalize_scaling(ds.cases);
  auto& m = ds.manifest;
  m.n_cases = n_cases;
  m.seed = cfg.seed;
  m.dose_scale = k.dose_scale;
  m.fluence_scale = k.fluence_scale;
  m.value_range = k.value_range;
  m.pixel_area = cfg.pixel_spacing_mm * cfg.pixel_spacing_mm;
  m.ratios = ratios;
  std::vector<std::string> ids;
  for (const auto& c : ds.cases) ids.push_back(c.case_id);
  m.assignment = make_splits(ids, ratios, cfg.seed);
  m.validate();
  return ds;
}

}  // namespace fluencelab
