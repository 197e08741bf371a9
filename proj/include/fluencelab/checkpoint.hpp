// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint directory:
//   index.txt        format tag, backbone echo, epoch, optimizer step,
//                    seeds, and one "param.<i> = name dims" line per tensor
//   config.txt       free-form config echo of the producing run
//   param_<i>.flt    parameter values (FLT1)
//   adam_m_<i>.flt   first moments (only when optimizer state is saved)
//   adam_v_<i>.flt   second moments

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "fluencelab/adam.hpp"
#include "fluencelab/kv_text.hpp"
#include "fluencelab/model.hpp"
#include "fluencelab/tensor_io.hpp"

namespace fluencelab {

inline constexpr const char* kCheckpointFormat = "FLUENCELAB-CHECKPOINT-1";

inline void backbone_to_text(KeyValueText& kv, const BackboneConfig& b, const std::string& prefix = "backbone.") {
  kv.set(prefix + "kind", to_string(b.kind));
  kv.set(prefix + "in_channels", b.in_channels);
  kv.set(prefix + "base", b.base);
  kv.set(prefix + "levels", b.levels);
  kv.set(prefix + "window", b.window);
  kv.set(prefix + "heads", b.heads);
  kv.set(prefix + "head_layers", b.head_layers);
  kv.set(prefix + "head_width", b.head_width);
  kv.set(prefix + "norm", to_string(b.norm));
}

inline BackboneConfig backbone_from_text(const KeyValueText& kv, const std::string& prefix = "backbone.") {
  BackboneConfig b;
  auto geti = [&](const std::string& k) { return static_cast<int>(kv.get_int(prefix + k)); };
  b.kind = parse_backbone_kind(kv.get(prefix + "kind"));
  b.in_channels = geti("in_channels");
  b.base = geti("base");
  b.levels = geti("levels");
  b.window = geti("window");
  b.heads = geti("heads");
  b.head_layers = geti("head_layers");
  b.head_width = geti("head_width");
  b.norm = parse_norm_kind(kv.get(prefix + "norm"));
  b.validate();
  return b;
}

namespace detail {

inline std::string dims_text(const std::vector<int>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

inline std::vector<std::uint32_t> dims_u32(const std::vector<int>& dims) {
  return std::vector<std::uint32_t>(dims.begin(), dims.end());
}

inline std::vector<float> read_matching(const std::filesystem::path& path, const nn::Parameter& p) {
  auto t = read_tensor(path);
  if (t.dims != dims_u32(p.dims))
    throw DataError(path.string() + ": dims do not match parameter '" + p.name + "' (" + dims_text(p.dims) + ")");
  return std::move(t.values);
}

}  // namespace detail

struct CheckpointMeta {
  std::uint64_t model_seed = 0;
  std::uint64_t shuffle_seed = 0;
  int epoch = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir, const Model& model, const CheckpointMeta& meta,
                            const AdamState* adam = nullptr, const KeyValueText& config_echo = {}) {
  std::filesystem::create_directories(dir);
  KeyValueText idx;
  idx.set("format", kCheckpointFormat);
  backbone_to_text(idx, model.config());
  idx.set("model_seed", meta.model_seed);
  idx.set("shuffle_seed", meta.shuffle_seed);
  idx.set("epoch", meta.epoch);
  idx.set("optimizer", adam ? "adam" : "none");
  idx.set("adam_step", static_cast<long long>(adam ? adam->step : 0));
  const auto& ps = model.params();
  idx.set("param_count", static_cast<long long>(ps.size()));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& p = ps[i];
    const std::string tag = std::to_string(i);
    idx.set("param." + tag, p.name + " " + detail::dims_text(p.dims));
    const auto dims = detail::dims_u32(p.dims);
    write_tensor(dir / ("param_" + tag + ".flt"), dims, p.value);
    if (adam) {
      write_tensor(dir / ("adam_m_" + tag + ".flt"), dims, adam->m[i]);
      write_tensor(dir / ("adam_v_" + tag + ".flt"), dims, adam->v[i]);
    }
  }
  idx.write(dir / "index.txt");
  config_echo.write(dir / "config.txt");
}

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
  std::optional<AdamState> adam;
  KeyValueText config_echo;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
  const auto idx = KeyValueText::read(dir / "index.txt");
  if (idx.get("format") != kCheckpointFormat) throw DataError(dir.string() + ": not a checkpoint");
  CheckpointMeta meta;
  meta.model_seed = parse_u64(idx.get("model_seed"), "model_seed");
  meta.shuffle_seed = parse_u64(idx.get("shuffle_seed"), "shuffle_seed");
  meta.epoch = static_cast<int>(idx.get_int("epoch"));
  LoadedCheckpoint out{Model(backbone_from_text(idx), meta.model_seed), meta, std::nullopt, {}};
  auto& ps = out.model.params();
  if (idx.get_int("param_count") != static_cast<long long>(ps.size()))
    throw DataError(dir.string() + ": parameter count does not match the backbone");
  const bool has_adam = idx.get("optimizer") == "adam";
  if (has_adam) {
    out.adam = AdamState(ps);
    out.adam->step = idx.get_int("adam_step");
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string tag = std::to_string(i);
    const auto entry = split(idx.get("param." + tag), ' ');
    if (entry.size() != 2 || entry[0] != ps[i].name || entry[1] != detail::dims_text(ps[i].dims))
      throw DataError(dir.string() + ": parameter " + tag + " does not match the backbone layout");
    ps[i].value = detail::read_matching(dir / ("param_" + tag + ".flt"), ps[i]);
    if (has_adam) {
      out.adam->m[i] = detail::read_matching(dir / ("adam_m_" + tag + ".flt"), ps[i]);
      out.adam->v[i] = detail::read_matching(dir / ("adam_v_" + tag + ".flt"), ps[i]);
    }
  }
  if (std::filesystem::exists(dir / "config.txt")) out.config_echo = KeyValueText::read(dir / "config.txt");
  return out;
}

}  // namespace fluencelab
