// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Gantry-angle encoding and the rotation/projection primitives shared by the
// phantom forward model and Stage-2 conditioning.
//
// Conventions: pixel (x right, y down), rotations about the image centre
// ((W-1)/2, (H-1)/2). A positive angle rotates image content clockwise as
// displayed; 0 degrees keeps the beam's-eye-view "up" axis on image +y (up).
// Beams travel along the slice axis: slice 0 is the entry slice and depth
// for attenuation is the slice index. The gantry angle fixes the in-plane
// orientation of the beam's-eye-view frame relative to the patient.

#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "fluencelab/types.hpp"

namespace fluencelab {

/// Angle in degrees normalized into [0, 360).
class GantryAngle {
 public:
  GantryAngle() = default;
  explicit GantryAngle(double degrees) : degrees_(normalize(degrees)) {}

  double degrees() const { return degrees_; }

  /// Exact at multiples of 90 degrees.
  double sin() const {
    if (const int q = quadrant(); q >= 0) return q == 1 ? 1.0 : (q == 3 ? -1.0 : 0.0);
    return std::sin(degrees_ * std::numbers::pi / 180.0);
  }
  double cos() const {
    if (const int q = quadrant(); q >= 0) return q == 0 ? 1.0 : (q == 2 ? -1.0 : 0.0);
    return std::cos(degrees_ * std::numbers::pi / 180.0);
  }

  GantryAngle operator-() const { return GantryAngle(-degrees_); }

 private:
  static double normalize(double d) {
    double r = std::fmod(d, 360.0);
    if (r < 0) r += 360.0;
    if (r >= 360.0) r = 0.0;
    return r;
  }
  int quadrant() const {
    const double q = degrees_ / 90.0;
    return q == std::floor(q) ? static_cast<int>(q) : -1;
  }

  double degrees_ = 0.0;
};

/// Evenly spaced beam angles starting at `start_deg`.
inline std::vector<double> equally_spaced_angles(int beams, double start_deg) {
  std::vector<double> out;
  for (int b = 0; b < beams; ++b) out.push_back(GantryAngle(start_deg + 360.0 * b / beams).degrees());
  return out;
}

struct AngleMaps {
  Slice2D sin_map;
  Slice2D cos_map;
};

inline AngleMaps angle_maps(GantryAngle theta, int height, int width) {
  return {Slice2D(height, width, static_cast<float>(theta.sin())),
          Slice2D(height, width, static_cast<float>(theta.cos()))};
}

namespace detail {

/// Visits, for every output pixel of a bilinear pull-rotation by `theta`,
/// the in-bounds source neighbours and their weights:
/// visit(out_index, src_index, weight).
template <class Visit>
void for_each_rotation_tap(int height, int width, GantryAngle theta, Visit&& visit) {
  const double c = theta.cos(), s = theta.sin();
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = dx * c + dy * s + cx;
      const double sy = -dx * s + dy * c + cy;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const double fx = sx - fx0, fy = sy - fy0;
      const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const std::size_t out = static_cast<std::size_t>(y) * width + x;
      for (int k = 0; k < 4; ++k) {
        if (w[k] == 0.0 || xs[k] < 0 || xs[k] >= width || ys[k] < 0 || ys[k] >= height) continue;
        visit(out, static_cast<std::size_t>(ys[k]) * width + xs[k], w[k]);
      }
    }
  }
}

/// Adjoint of the pull-rotation by `theta`, accumulated into `acc`.
/// Conserves mass for sources whose footprint stays in bounds, and moves
/// content by approximately -theta.
inline void splat_rotation(std::span<const float> img, int height, int width, GantryAngle theta,
                           std::vector<double>& acc) {
  for_each_rotation_tap(height, width, theta, [&](std::size_t out, std::size_t src, double w) {
    acc[src] += w * img[out];
  });
}

}  // namespace detail

/// Bilinear rotation about the image centre with zero fill.
inline Slice2D rotate_slice(const Slice2D& img, GantryAngle theta) {
  if (theta.degrees() == 0.0) return img;
  std::vector<double> acc(img.size(), 0.0);
  const auto in = img.values();
  detail::for_each_rotation_tap(img.height(), img.width(), theta,
                                [&](std::size_t out, std::size_t src, double w) { acc[out] += w * in[src]; });
  Slice2D result(img.height(), img.width());
  auto dst = result.values();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  return result;
}

/// Beam's-eye-view footprint: every slice is moved into the beam frame
/// (rotation by -theta, mass-conserving) and the slices are summed along the
/// beam axis. Linear in the input and the exact adjoint of back_project with
/// zero attenuation.
inline Slice2D bev_project(const Volume3D& vol, GantryAngle theta) {
  const int h = vol.height(), w = vol.width();
  std::vector<double> acc(vol.slice_size(), 0.0);
  for (int z = 0; z < vol.depth(); ++z) {
    if (theta.degrees() == 0.0) {
      const auto s = vol.slice_span(z);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
    } else {
      detail::splat_rotation(vol.slice_span(z), h, w, theta, acc);
    }
  }
  Slice2D out(h, w);
  auto dst = out.values();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  return out;
}

/// Broadcasts a beam-frame fluence map through `depth` slices with
/// attenuation exp(-mu * z) (z = 0 at the entry slice) after rotating it by
/// theta into the patient frame.
inline Volume3D back_project(const Slice2D& fluence, GantryAngle theta, double mu, int depth, Spacing spacing = {}) {
  const Slice2D patient = rotate_slice(fluence, theta);
  Volume3D out(depth, fluence.height(), fluence.width(), spacing);
  for (int z = 0; z < depth; ++z) {
    const double atten = std::exp(-mu * z);
    auto dst = out.slice_span(z);
    const auto src = patient.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::max(0.0f, static_cast<float>(src[i] * atten));
  }
  return out;
}

}  // namespace fluencelab
