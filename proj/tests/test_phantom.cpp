// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "fluencelab/phantom.hpp"

using namespace fluencelab;

namespace {

PhantomConfig small_config() {
  PhantomConfig cfg;
  cfg.depth = 4;
  cfg.height = cfg.width = 32;
  cfg.beams = 5;
  cfg.ptv_radius = {3, 5};
  cfg.oar_radius = {2, 4};
  cfg.seed = 17;
  return cfg;
}

StructureSet centred_disk(int d, int h, int w, double radius) {
  StructureSet s{Volume3D(d, h, w), Volume3D(d, h, w), {Volume3D(d, h, w)}};
  for (int z = 0; z < d; ++z)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        s.body.at(z, y, x) = 1.0f;
        const double dx = x - 0.5 * (w - 1), dy = y - 0.5 * (h - 1);
        if (dx * dx + dy * dy <= radius * radius) s.ptv.at(z, y, x) = 1.0f;
      }
  return s;
}

int count_positive(const Slice2D& s) {
  return static_cast<int>(std::count_if(s.values().begin(), s.values().end(), [](float v) { return v > 0; }));
}

}  // namespace

TEST(Phantom, GenerationIsDeterministic) {
  const auto cfg = small_config();
  EXPECT_EQ(generate_case(cfg, 3), generate_case(cfg, 3));
  EXPECT_NE(generate_case(cfg, 3).ct, generate_case(cfg, 4).ct);
}

TEST(Phantom, NineEquallySpacedBeams) {
  auto cfg = small_config();
  cfg.beams = 9;
  const auto c = generate_case(cfg, 0);
  EXPECT_EQ(c.angles, (std::vector<double>{0, 40, 80, 120, 160, 200, 240, 280, 320}));
}

TEST(Phantom, CaseInvariantsHold) {
  auto cfg = small_config();
  for (int i = 0; i < 6; ++i) {
    const auto c = generate_case(cfg, i);
    EXPECT_NO_THROW(c.validate());
    const auto ptv = c.mask("ptv");
    EXPECT_GT(std::count(ptv.values().begin(), ptv.values().end(), 1.0f), 0);
    EXPECT_GE(c.oar_masks().size(), 1u);
    EXPECT_LE(c.oar_masks().size(), 3u);
    for (float v : c.ct.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (float v : c.dose.values()) EXPECT_GE(v, 0.0f);
  }
}

TEST(Phantom, UnmodulatedFluenceIsFlatInsideAperture) {
  auto cfg = small_config();
  cfg.oar_sparing = 0.0;
  cfg.noise_amplitude = 0.0;
  cfg.base_intensity = 2.5;
  const auto c = generate_case(cfg, 1);
  for (const auto& f : c.fluence) {
    EXPECT_GT(count_positive(f), 0);
    for (float v : f.values()) EXPECT_TRUE(v == 0.0f || v == 2.5f) << v;
  }
}

TEST(Phantom, EmptyPtvGivesZeroFluence) {
  auto s = centred_disk(3, 16, 16, 0.0);
  std::fill(s.ptv.values().begin(), s.ptv.values().end(), 0.0f);
  const auto f = fluence_ground_truth(s, GantryAngle(40), small_config(), 1);
  for (float v : f.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Phantom, FullOverlapHalvesIntensity) {
  auto cfg = small_config();
  cfg.noise_amplitude = 0.0;
  cfg.oar_sparing = 0.5;
  cfg.base_intensity = 1.0;
  auto s = centred_disk(3, 16, 16, 4.0);
  // OAR present on every slice of the central pixel.
  for (int z = 0; z < 3; ++z) s.oars[0].at(z, 7, 7) = 1.0f;
  const auto f = fluence_ground_truth(s, GantryAngle(0), cfg, 1);
  EXPECT_FLOAT_EQ(f.at(7, 7), 0.5f);
  EXPECT_FLOAT_EQ(f.at(7, 9), 1.0f);
}

TEST(Phantom, FluenceSupportLiesInsideProjectedTarget) {
  const auto cfg = small_config();
  const auto c = generate_case(cfg, 5);
  for (int b = 0; b < c.beams(); ++b) {
    const auto footprint = bev_project(detail::dilate(c.mask("ptv"), cfg.ptv_margin), GantryAngle(c.angles[b]));
    for (std::size_t i = 0; i < footprint.size(); ++i)
      if (footprint.values()[i] == 0.0f) EXPECT_EQ(c.fluence[b].values()[i], 0.0f);
  }
}

TEST(Phantom, CircularTargetHasAngleIndependentAperture) {
  PhantomConfig cfg = small_config();
  cfg.noise_amplitude = 0.0;
  const auto s = centred_disk(4, 64, 64, 9.0);
  const int reference = count_positive(fluence_ground_truth(s, GantryAngle(0), cfg, 0));
  for (double theta : equally_spaced_angles(9, 0.0)) {
    const int n = count_positive(fluence_ground_truth(s, GantryAngle(theta), cfg, 0));
    EXPECT_NEAR(n, reference, 0.05 * reference) << theta;
  }
}

TEST(Phantom, DoseFromZeroFluenceIsZero) {
  const auto cfg = small_config();
  const auto d = dose_ground_truth({Slice2D(32, 32), Slice2D(32, 32)}, {0, 90}, cfg);
  for (float v : d.values()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(dose_ground_truth({Slice2D(32, 32)}, {0, 90}, cfg), ConfigError);
}

TEST(Phantom, SingleBeamAttenuation) {
  auto cfg = small_config();
  const Slice2D ones(32, 32, 1.0f);
  cfg.attenuation = 1e-12;
  auto d = dose_ground_truth({ones}, {0}, cfg);
  for (int z = 1; z < cfg.depth; ++z) EXPECT_NEAR(d.at(z, 10, 10), d.at(0, 10, 10), 1e-9);
  cfg.attenuation = 0.02;
  d = dose_ground_truth({ones}, {0}, cfg);
  for (int z = 0; z < cfg.depth; ++z) EXPECT_NEAR(d.at(z, 16, 16), std::exp(-0.02 * z), 1e-6);
}

TEST(Phantom, EveryIlluminatedBeamDeposits) {
  const auto cfg = small_config();
  const auto c = generate_case(cfg, 2);
  for (int b = 0; b < c.beams(); ++b) {
    if (c.fluence[b].sum() <= 0) continue;
    const auto part = back_project(c.fluence[b], GantryAngle(c.angles[b]), cfg.attenuation, cfg.depth);
    double mass = 0;
    for (float v : part.values()) mass += v;
    EXPECT_GT(mass, 0.0);
  }
}

TEST(Phantom, InvalidConfigIsRejected) {
  auto cfg = small_config();
  cfg.oar_sparing = 1.0;
  EXPECT_THROW(generate_case(cfg, 0), ConfigError);
  cfg = small_config();
  cfg.attenuation = 0;
  EXPECT_THROW(generate_case(cfg, 0), ConfigError);
  cfg = small_config();
  cfg.beams = 0;
  EXPECT_THROW(generate_case(cfg, 0), ConfigError);
}

TEST(Scaling, ConstantPopulation) {
  std::vector<CaseRecord> cases;
  auto cfg = small_config();
  for (int i = 0; i < 3; ++i) {
    auto c = generate_case(cfg, i);
    for (auto& f : c.fluence) std::fill(f.values().begin(), f.values().end(), 2.5f);
    cases.push_back(std::move(c));
  }
  const auto k = finalize_scaling(cases);
  EXPECT_DOUBLE_EQ(k.fluence_scale, 2.5);
  for (const auto& c : cases)
    for (const auto& f : c.fluence)
      for (float v : f.values()) EXPECT_EQ(v, 1.0f);
}

TEST(Scaling, MatchesBruteForcePercentileAndKeepsRatios) {
  auto cfg = small_config();
  std::vector<CaseRecord> cases;
  for (int i = 0; i < 4; ++i) cases.push_back(generate_case(cfg, i));
  const auto before = cases;
  const auto k = finalize_scaling(cases);

  std::vector<float> all;
  for (const auto& c : before)
    for (const auto& f : c.fluence) all.insert(all.end(), f.values().begin(), f.values().end());
  std::sort(all.begin(), all.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * all.size()));
  EXPECT_NEAR(k.fluence_scale, all[rank - 1], 1e-6);

  std::vector<float> dose;
  for (const auto& c : before) dose.insert(dose.end(), c.dose.values().begin(), c.dose.values().end());
  std::sort(dose.begin(), dose.end());
  EXPECT_NEAR(k.dose_scale, dose[static_cast<std::size_t>(std::ceil(0.99 * dose.size())) - 1], 1e-6);

  const auto& f0 = before[0].fluence[0].values();
  const auto& g0 = cases[0].fluence[0].values();
  for (std::size_t i = 0; i < f0.size(); ++i) EXPECT_NEAR(g0[i] * k.fluence_scale, f0[i], 1e-6 * std::max(1.0f, f0[i]));

  float peak = 0;
  for (const auto& c : cases)
    for (const auto& f : c.fluence) peak = std::max(peak, *std::max_element(f.values().begin(), f.values().end()));
  EXPECT_EQ(k.value_range, peak);
}

TEST(Scaling, DatasetIsPureFunctionOfConfig) {
  const auto cfg = small_config();
  const auto a = generate_dataset(cfg, 5, {});
  const auto b = generate_dataset(cfg, 5, {});
  EXPECT_EQ(a.cases, b.cases);
  EXPECT_EQ(a.manifest.assignment, b.manifest.assignment);
  EXPECT_EQ(a.manifest.fluence_scale, b.manifest.fluence_scale);
}
