// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <set>

#include "fluencelab/dataset.hpp"
#include "fluencelab/phantom.hpp"

namespace fs = std::filesystem;
using namespace fluencelab;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fluencelab_test_core_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  auto b = read_bytes(p);
  return {b.begin(), b.end()};
}

}  // namespace

TEST(TensorFormat, ZeroTensorLayout) {
  const auto dir = scratch("zero");
  const std::uint32_t dims[] = {2, 2};
  const std::vector<float> zeros(4, 0.0f);
  write_tensor(dir / "z.flt", dims, zeros);
  const auto bytes = read_bytes(dir / "z.flt");
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FLT1");
  const std::vector<unsigned char> header(bytes.begin() + 4, bytes.begin() + 16);
  EXPECT_EQ(header, (std::vector<unsigned char>{2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0}));
  for (std::size_t i = 16; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(TensorFormat, SeededRoundTripIsBitExact) {
  const auto dir = scratch("roundtrip");
  Rng rng(99);
  std::vector<float> v(3 * 4 * 5);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  const std::uint32_t dims[] = {3, 4, 5};
  write_tensor(dir / "t.flt", dims, v);
  const auto t = read_tensor(dir / "t.flt");
  EXPECT_EQ(t.dims, (std::vector<std::uint32_t>{3, 4, 5}));
  ASSERT_EQ(t.values.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(t.values[i]), std::bit_cast<std::uint32_t>(v[i]));
}

TEST(TensorFormat, RoundTripPreservesEveryFiniteBitPattern) {
  // Random bit patterns, including subnormals and negative zero.
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(1 + rng.below(40));
    for (auto& x : v) {
      std::uint32_t bits;
      do {
        bits = static_cast<std::uint32_t>(rng.next_u64());
        if (trial % 3 == 0) bits &= 0x807FFFFFu;  // force subnormal / zero exponent
      } while (!std::isfinite(std::bit_cast<float>(bits)));
      x = std::bit_cast<float>(bits);
    }
    const std::uint32_t dims[] = {static_cast<std::uint32_t>(v.size())};
    const auto enc = encode_tensor(dims, v);
    const auto dec = decode_tensor(std::span(reinterpret_cast<const unsigned char*>(enc.data()), enc.size()), "mem");
    ASSERT_EQ(dec.values.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      ASSERT_EQ(std::bit_cast<std::uint32_t>(dec.values[i]), std::bit_cast<std::uint32_t>(v[i]));
  }
}

TEST(TensorFormat, LengthMismatchIsRejected) {
  const std::uint32_t dims[] = {2, 3};
  const std::vector<float> five(5, 1.0f);
  EXPECT_THROW(encode_tensor(dims, five), ConfigError);
}

TEST(TensorFormat, BadMagicAndTruncationAreRejected) {
  const auto dir = scratch("bad");
  const std::uint32_t dims[] = {2, 2};
  const std::vector<float> v{1, 2, 3, 4};
  auto bytes = encode_tensor(dims, v);
  auto bad = bytes;
  bad[3] = '2';
  write_bytes(dir / "magic.flt", bad);
  EXPECT_THROW(read_tensor(dir / "magic.flt"), DataError);
  write_bytes(dir / "short.flt", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_tensor(dir / "short.flt"), DataError);
  write_bytes(dir / "long.flt", bytes + "x");
  EXPECT_THROW(read_tensor(dir / "long.flt"), DataError);
  EXPECT_THROW(read_tensor(dir / "missing.flt"), DataError);
}

TEST(TensorFormat, DimsOverflowIsRejected) {
  std::string bytes = "FLT1";
  detail::put_u32(bytes, 3);
  for (int i = 0; i < 3; ++i) detail::put_u32(bytes, 0xFFFFFFFFu);
  EXPECT_THROW(decode_tensor(std::span(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()), "mem"),
               DataError);
}

namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(case_id_for(i));
  return out;
}

std::array<int, 3> sizes(const std::map<std::string, Split>& m) {
  std::array<int, 3> s{0, 0, 0};
  for (const auto& [id, split] : m) ++s[static_cast<int>(split)];
  return s;
}

}  // namespace

TEST(Splits, DefaultRatiosOnTenCases) { EXPECT_EQ(sizes(make_splits(ids(10), {}, 7)), (std::array<int, 3>{7, 1, 2})); }

TEST(Splits, SingleCaseGoesToTrain) {
  const auto m = make_splits(ids(1), {1.0, 0.0, 0.0}, 123);
  EXPECT_EQ(m.at("case_0000"), Split::kTrain);
}

TEST(Splits, RoundingRuleOnNinetyNineAndSixteen) {
  EXPECT_EQ(sizes(make_splits(ids(99), {}, 1)), (std::array<int, 3>{70, 10, 19}));
  EXPECT_EQ(sizes(make_splits(ids(16), {}, 7)), (std::array<int, 3>{12, 1, 3}));
}

TEST(Splits, InvalidRatiosAreRejected) {
  EXPECT_THROW(make_splits(ids(4), {0.5, 0.5, 0.5}, 1), ConfigError);
  EXPECT_THROW(make_splits(ids(4), {1.2, -0.1, -0.1}, 1), ConfigError);
  EXPECT_THROW(make_splits({}, {}, 1), ConfigError);
}

TEST(Splits, PartitionIsDeterministicDisjointAndExhaustive) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(120));
    double a = rng.uniform(), b = rng.uniform() * (1 - a);
    const SplitRatios r{a, b, 1.0 - a - b};
    const auto seed = rng.next_u64();
    const auto m1 = make_splits(ids(n), r, seed);
    const auto m2 = make_splits(ids(n), r, seed);
    EXPECT_EQ(m1, m2);
    ASSERT_EQ(static_cast<int>(m1.size()), n);
    const auto s = sizes(m1);
    EXPECT_GE(s[1], 0);
    EXPECT_EQ(s[0] + s[1] + s[2], n);
    EXPECT_EQ(s[2], static_cast<int>(std::floor(n * r.test + 1e-9)));
  }
}

TEST(CaseRecordIo, LoadThenSaveIsByteIdentical) {
  PhantomConfig cfg;
  cfg.depth = 4;
  cfg.height = cfg.width = 32;
  cfg.beams = 3;
  cfg.ptv_radius = {3, 5};
  cfg.oar_radius = {2, 4};
  cfg.seed = 3;
  const auto c = generate_case(cfg, 2);
  const auto dir = scratch("case");
  write_case(dir / "a", c);
  const auto loaded = read_case(dir / "a");
  EXPECT_EQ(loaded, c);
  write_case(dir / "b", loaded);
  for (const auto& entry : fs::directory_iterator(dir / "a"))
    EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << entry.path();
}

TEST(CaseRecordIo, InvariantViolationsAreRejected) {
  PhantomConfig cfg;
  cfg.depth = 2;
  cfg.height = cfg.width = 16;
  cfg.beams = 2;
  cfg.ptv_radius = {2, 3};
  cfg.oar_radius = {2, 3};
  auto c = generate_case(cfg, 0);
  auto bad = c;
  bad.angles.pop_back();
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.masks[0].mask.values()[0] = 0.5f;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  // PTV voxel outside the body
  for (std::size_t i = 0; i < bad.masks[0].mask.size(); ++i)
    if (bad.masks[1].mask.values()[i] == 1.0f) {
      bad.masks[0].mask.values()[i] = 0.0f;
      break;
    }
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(Volume3D(2, 2, 2, std::vector<float>(7)), ConfigError);
  EXPECT_THROW(Volume3D(1, 1, 1, std::vector<float>{-1.0f}), ConfigError);
}

TEST(Manifest, TextRoundTrip) {
  DatasetManifest m;
  m.n_cases = 3;
  m.seed = 42;
  m.dose_scale = 9.87654321;
  m.fluence_scale = 1.0 / 3.0;
  m.pixel_area = 16;
  m.value_range = 1.2345;
  m.assignment = make_splits(ids(3), {}, 42);
  const auto text = manifest_to_text(m).to_string();
  const auto back = manifest_from_text(KeyValueText::parse(text, "mem"));
  EXPECT_EQ(back.dose_scale, m.dose_scale);
  EXPECT_EQ(back.fluence_scale, m.fluence_scale);
  EXPECT_EQ(back.assignment, m.assignment);
  EXPECT_EQ(manifest_to_text(back).to_string(), text);
  m.pixel_area = 0;
  EXPECT_THROW(m.validate(), ConfigError);
}
