// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fluencelab/geometry.hpp"
#include "fluencelab/random.hpp"

using namespace fluencelab;

namespace {

Slice2D gaussian_blob(int h, int w, double sigma, double ox = 0, double oy = 0) {
  Slice2D s(h, w);
  const double cx = 0.5 * (w - 1) + ox, cy = 0.5 * (h - 1) + oy;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      s.at(y, x) = static_cast<float>(std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma)));
  return s;
}

Volume3D random_volume(Rng& rng, int d, int h, int w) {
  std::vector<float> v(static_cast<std::size_t>(d) * h * w);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return Volume3D(d, h, w, std::move(v));
}

}  // namespace

TEST(AngleMaps, CardinalAngles) {
  const auto m0 = angle_maps(GantryAngle(0), 4, 5);
  const auto m90 = angle_maps(GantryAngle(90), 4, 5);
  for (float v : m0.sin_map.values()) EXPECT_EQ(v, 0.0f);
  for (float v : m0.cos_map.values()) EXPECT_EQ(v, 1.0f);
  for (float v : m90.sin_map.values()) EXPECT_EQ(v, 1.0f);
  for (float v : m90.cos_map.values()) EXPECT_EQ(v, 0.0f);
}

TEST(AngleMaps, FortyDegrees) {
  const auto m = angle_maps(GantryAngle(40), 3, 3);
  for (float v : m.sin_map.values()) EXPECT_NEAR(v, 0.6428, 1e-4);
  for (float v : m.cos_map.values()) EXPECT_NEAR(v, 0.7660, 1e-4);
}

TEST(AngleMaps, UnitCircleAtEveryPixel) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto m = angle_maps(GantryAngle(rng.uniform(-720, 720)), 2, 3);
    for (std::size_t k = 0; k < m.sin_map.size(); ++k) {
      const double s = m.sin_map.values()[k], c = m.cos_map.values()[k];
      EXPECT_NEAR(s * s + c * c, 1.0, 1e-6);
    }
  }
}

TEST(GantryAngleTest, NormalizesIntoRange) {
  EXPECT_EQ(GantryAngle(360).degrees(), 0.0);
  EXPECT_EQ(GantryAngle(-40).degrees(), 320.0);
  EXPECT_EQ(GantryAngle(725).degrees(), 5.0);
  EXPECT_EQ(GantryAngle(-1e-20).degrees(), 0.0);
}

TEST(Rotate, ZeroIsBitIdentical) {
  Rng rng(2);
  Slice2D s(7, 9);
  for (auto& v : s.values()) v = static_cast<float>(rng.normal());
  EXPECT_EQ(rotate_slice(s, GantryAngle(0)), s);
  EXPECT_EQ(rotate_slice(s, GantryAngle(360)), s);
}

TEST(Rotate, HalfTurnOfCentredDisk) {
  Slice2D disk(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      disk.at(y, x) = (x - 15.5) * (x - 15.5) + (y - 15.5) * (y - 15.5) <= 100 ? 1.0f : 0.0f;
  const auto r = rotate_slice(disk, GantryAngle(180));
  for (std::size_t i = 0; i < disk.size(); ++i) EXPECT_NEAR(r.values()[i], disk.values()[i], 1e-6);
}

TEST(Rotate, RoundTripOfSmoothBlob) {
  const auto blob = gaussian_blob(64, 64, 6.0, 3.0, -2.0);
  for (double theta : {17.0, 40.0, 133.0, 250.0}) {
    const auto back = rotate_slice(rotate_slice(blob, GantryAngle(theta)), GantryAngle(-theta));
    double worst = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if ((x - 31.5) * (x - 31.5) + (y - 31.5) * (y - 31.5) <= 16.0 * 16.0)
          worst = std::max(worst, static_cast<double>(std::abs(back.at(y, x) - blob.at(y, x))));
    EXPECT_LT(worst, 0.02) << "theta " << theta;
  }
}

TEST(Rotate, QuarterTurnIsClockwise) {
  Slice2D s(5, 5);
  s.at(0, 2) = 1.0f;  // top centre
  const auto r = rotate_slice(s, GantryAngle(90));
  EXPECT_FLOAT_EQ(r.at(2, 4), 1.0f);  // moved to the right edge
}

TEST(BevProject, ZeroAndLinearity) {
  Rng rng(3);
  const Volume3D zero(3, 16, 16);
  const auto pz = bev_project(zero, GantryAngle(33));
  for (float v : pz.values()) EXPECT_EQ(v, 0.0f);
  for (int trial = 0; trial < 10; ++trial) {
    const auto v1 = random_volume(rng, 3, 16, 16), v2 = random_volume(rng, 3, 16, 16);
    const double a = rng.uniform(0, 3), b = rng.uniform(0, 3);
    std::vector<float> mix(v1.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = static_cast<float>(a * v1.values()[i] + b * v2.values()[i]);
    const GantryAngle theta(rng.uniform(0, 360));
    const auto pm = bev_project(Volume3D(3, 16, 16, mix), theta);
    const auto p1 = bev_project(v1, theta), p2 = bev_project(v2, theta);
    for (std::size_t i = 0; i < pm.size(); ++i)
      EXPECT_NEAR(pm.values()[i], a * p1.values()[i] + b * p2.values()[i], 1e-5);
  }
}

TEST(BevProject, UnitVoxelConservesMass) {
  for (double theta : {0.0, 13.0, 40.0, 90.0, 211.5, 359.0}) {
    Volume3D v(3, 17, 17);
    v.at(1, 8, 8) = 1.0f;
    const auto p = bev_project(v, GantryAngle(theta));
    double mass = 0;
    for (int y = 0; y < 17; ++y)
      for (int x = 0; x < 17; ++x) {
        mass += p.at(y, x);
        if (p.at(y, x) != 0.0f) {
          EXPECT_LE(std::abs(y - 8), 1) << theta;
          EXPECT_LE(std::abs(x - 8), 1) << theta;
        }
      }
    EXPECT_NEAR(mass, 1.0, 1e-6) << theta;
  }
}

TEST(BackProject, ZeroFluenceGivesZeroDose) {
  const auto d = back_project(Slice2D(8, 8), GantryAngle(70), 0.02, 4);
  for (float v : d.values()) EXPECT_EQ(v, 0.0f);
}

TEST(BackProject, NoAttenuationAtZeroDegrees) {
  const auto f = gaussian_blob(12, 10, 3.0);
  const auto d = back_project(f, GantryAngle(0), 0.0, 5);
  for (int z = 0; z < 5; ++z)
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 10; ++x) EXPECT_EQ(d.at(z, y, x), f.at(y, x));
}

TEST(BackProject, TotalMassMatchesGeometricSeries) {
  const auto f = gaussian_blob(16, 16, 3.0);
  const double mu = 0.02;
  const int depth = 8;
  const auto d = back_project(f, GantryAngle(0), mu, depth);
  double series = 0;
  for (int z = 0; z < depth; ++z) series += std::exp(-mu * z);
  double mass = 0;
  for (float v : d.values()) mass += v;
  EXPECT_NEAR(mass / (f.sum() * series), 1.0, 0.01);
}

TEST(BackProject, AdjointOfBevProject) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const GantryAngle theta(rng.uniform(0, 360));
    const auto v = random_volume(rng, 3, 12, 14);
    Slice2D f(12, 14);
    for (auto& x : f.values()) x = static_cast<float>(rng.uniform());
    const auto pv = bev_project(v, theta);
    const auto bf = back_project(f, theta, 0.0, 3);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) lhs += static_cast<double>(pv.values()[i]) * f.values()[i];
    for (std::size_t i = 0; i < v.size(); ++i) rhs += static_cast<double>(v.values()[i]) * bf.values()[i];
    EXPECT_NEAR(lhs / rhs, 1.0, 1e-5);
  }
}
