// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk dataset layout:
//   <root>/manifest.txt
//   <root>/<case_id>/case.txt, ct.flt, mask_<name>.flt, dose.flt, fluence_<b>.flt

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fluencelab/error.hpp"
#include "fluencelab/kv_text.hpp"
#include "fluencelab/random.hpp"
#include "fluencelab/tensor_io.hpp"
#include "fluencelab/types.hpp"

namespace fluencelab {

namespace fs = std::filesystem;

/// Split sizes for n cases. Test takes floor(n*test), train takes
/// ceil(n*train), validation receives what is left. A 1e-9 slack absorbs
/// binary representation error in products such as 10 * 0.7.
struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

inline SplitCounts split_counts(int n, const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  if (n < 1) throw ConfigError("cannot split an empty case list");
  SplitCounts c;
  c.train = static_cast<int>(std::ceil(n * r.train - 1e-9));
  c.test = static_cast<int>(std::floor(n * r.test + 1e-9));
  c.train = std::min(c.train, n);
  c.test = std::min(c.test, n - c.train);
  c.val = n - c.train - c.test;
  return c;
}

/// Seeded Fisher-Yates shuffle of the ids, then contiguous train/val/test blocks.
inline std::map<std::string, Split> make_splits(const std::vector<std::string>& case_ids, const SplitRatios& ratios,
                                                std::uint64_t seed) {
  const auto counts = split_counts(static_cast<int>(case_ids.size()), ratios);
  std::vector<std::string> order = case_ids;
  Rng rng(mix_seed(seed, 0x5B17));
  rng.shuffle(order);
  std::map<std::string, Split> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int k = static_cast<int>(i);
    const Split s = k < counts.train ? Split::kTrain : (k < counts.train + counts.val ? Split::kVal : Split::kTest);
    if (!out.emplace(order[i], s).second) throw ConfigError("duplicate case id '" + order[i] + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Volumes and slices as FLT1

inline void write_volume(const fs::path& path, const Volume3D& v) {
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(v.depth()), static_cast<std::uint32_t>(v.height()),
                                 static_cast<std::uint32_t>(v.width())};
  write_tensor(path, dims, v.values());
}

inline Volume3D read_volume(const fs::path& path, Spacing spacing) {
  auto t = read_tensor(path);
  if (t.dims.size() != 3) throw DataError(path.string() + ": expected rank-3 tensor");
  try {
    return Volume3D(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                    std::move(t.values), spacing);
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_slice(const fs::path& path, const Slice2D& s) {
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(s.height()), static_cast<std::uint32_t>(s.width())};
  write_tensor(path, dims, s.values());
}

inline Slice2D read_slice(const fs::path& path) {
  auto t = read_tensor(path);
  if (t.dims.size() != 2) throw DataError(path.string() + ": expected rank-2 tensor");
  return Slice2D(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), std::move(t.values));
}

// ---------------------------------------------------------------------------
// Cases

inline void write_case(const fs::path& dir, const CaseRecord& c) {
  c.validate();
  fs::create_directories(dir);
  KeyValueText header;
  header.set("case_id", c.case_id);
  header.set("beams", c.beams());
  std::string angles, masks;
  for (std::size_t b = 0; b < c.angles.size(); ++b) angles += (b ? "," : "") + format_double(c.angles[b]);
  for (std::size_t k = 0; k < c.masks.size(); ++k) masks += (k ? "," : "") + c.masks[k].name;
  header.set("angles_deg", angles);
  header.set("masks", masks);
  const auto& sp = c.ct.spacing();
  header.set("spacing_mm", format_double(sp.z) + "," + format_double(sp.y) + "," + format_double(sp.x));
  header.write(dir / "case.txt");

  write_volume(dir / "ct.flt", c.ct);
  for (const auto& m : c.masks) write_volume(dir / ("mask_" + m.name + ".flt"), m.mask);
  write_volume(dir / "dose.flt", c.dose);
  for (int b = 0; b < c.beams(); ++b) write_slice(dir / ("fluence_" + std::to_string(b) + ".flt"), c.fluence[b]);
}

inline CaseRecord read_case(const fs::path& dir) {
  const auto header = KeyValueText::read(dir / "case.txt");
  CaseRecord c;
  c.case_id = header.get("case_id");
  const auto sp = split(header.get("spacing_mm"), ',');
  if (sp.size() != 3) throw DataError(dir.string() + ": spacing_mm needs three values");
  const Spacing spacing{parse_double(sp[0], "spacing"), parse_double(sp[1], "spacing"), parse_double(sp[2], "spacing")};
  c.ct = read_volume(dir / "ct.flt", spacing);
  for (const auto& name : split(header.get("masks"), ','))
    c.masks.push_back({name, read_volume(dir / ("mask_" + name + ".flt"), spacing)});
  c.dose = read_volume(dir / "dose.flt", spacing);
  const auto beams = header.get_int("beams");
  for (const auto& a : split(header.get("angles_deg"), ',')) c.angles.push_back(parse_double(a, "angles_deg"));
  if (static_cast<long long>(c.angles.size()) != beams) throw DataError(dir.string() + ": angle count != beams");
  for (long long b = 0; b < beams; ++b) c.fluence.push_back(read_slice(dir / ("fluence_" + std::to_string(b) + ".flt")));
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(dir.string() + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

inline KeyValueText manifest_to_text(const DatasetManifest& m) {
  KeyValueText kv;
  kv.set("format", "FLUENCELAB-DATASET-1");
  kv.set("n_cases", m.n_cases);
  kv.set("seed", m.seed);
  kv.set("dose_scale", m.dose_scale);
  kv.set("fluence_scale", m.fluence_scale);
  kv.set("pixel_area_mm2", m.pixel_area);
  kv.set("value_range", m.value_range);
  kv.set("split_ratios",
         format_double(m.ratios.train) + "," + format_double(m.ratios.val) + "," + format_double(m.ratios.test));
  for (const auto& [id, s] : m.assignment) kv.set("split." + id, to_string(s));
  return kv;
}

inline DatasetManifest manifest_from_text(const KeyValueText& kv) {
  if (kv.get("format") != "FLUENCELAB-DATASET-1") throw DataError("unsupported manifest format");
  DatasetManifest m;
  m.n_cases = static_cast<int>(kv.get_int("n_cases"));
  m.seed = parse_u64(kv.get("seed"), "seed");
  m.dose_scale = kv.get_double("dose_scale");
  m.fluence_scale = kv.get_double("fluence_scale");
  m.pixel_area = kv.get_double("pixel_area_mm2");
  m.value_range = kv.get_double("value_range");
  const auto r = split(kv.get("split_ratios"), ',');
  if (r.size() != 3) throw DataError("split_ratios needs three values");
  m.ratios = {parse_double(r[0], "split_ratios"), parse_double(r[1], "split_ratios"), parse_double(r[2], "split_ratios")};
  for (const auto& [k, v] : kv.entries())
    if (k.rfind("split.", 0) == 0) m.assignment[k.substr(6)] = parse_split(v);
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<CaseRecord> cases;  // ordered by case_id

  const CaseRecord& find(const std::string& id) const {
    for (const auto& c : cases)
      if (c.case_id == id) return c;
    throw DataError("case '" + id + "' not in dataset");
  }

  std::vector<const CaseRecord*> split_cases(Split s) const {
    std::vector<const CaseRecord*> out;
    for (const auto& c : cases) {
      auto it = manifest.assignment.find(c.case_id);
      if (it != manifest.assignment.end() && it->second == s) out.push_back(&c);
    }
    return out;
  }
};

inline void write_dataset(const fs::path& root, const Dataset& ds) {
  ds.manifest.validate();
  fs::create_directories(root);
  for (const auto& c : ds.cases) write_case(root / c.case_id, c);
  manifest_to_text(ds.manifest).write(root / "manifest.txt");
}

inline Dataset read_dataset(const fs::path& root) {
  if (!fs::exists(root / "manifest.txt")) throw DataError(root.string() + " is not a dataset (no manifest.txt)");
  Dataset ds;
  ds.manifest = manifest_from_text(KeyValueText::read(root / "manifest.txt"));
  for (const auto& [id, split] : ds.manifest.assignment) ds.cases.push_back(read_case(root / id));
  return ds;
}

}  // namespace fluencelab
