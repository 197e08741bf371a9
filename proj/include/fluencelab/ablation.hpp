// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Loss ablations. A variant token is a loss kind with an optional scope
// suffix, corr scope first: "mse", "far", "far:G/B", "mse+energy:B/G".
// Every variant of a seed shares one Stage-1 model; metrics are pooled over
// seeds with cases keyed "<case>@s<seed>" so that Wilcoxon pairs line up.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fluencelab/config.hpp"
#include "fluencelab/evaluation.hpp"
#include "fluencelab/report.hpp"
#include "fluencelab/training.hpp"

namespace fluencelab {

struct Variant {
  std::string token;
  LossKind loss = LossKind::kFar;
  ScopeConfig scope;
};

inline const std::vector<std::string>& variant_kinds() {
  static const std::vector<std::string> kinds = {"mse", "mse+energy", "mse+grad", "far"};
  return kinds;
}

inline std::string valid_variant_help() {
  return "valid variants: mse, mse+energy, mse+grad, far, each optionally suffixed :B/B, :G/B, :B/G or :G/G";
}

inline Variant parse_variant(const std::string& token) {
  const auto colon = token.find(':');
  const std::string kind = token.substr(0, colon);
  Variant v{token, LossKind::kFar, {}};
  try {
    v.loss = parse_loss_kind(kind);
    if (colon != std::string::npos) {
      const std::string tag = token.substr(colon + 1);
      if (tag.size() != 3 || tag[1] != '/') throw ConfigError("bad scope tag");
      v.scope.corr = parse_scope(tag.substr(0, 1));
      v.scope.energy = parse_scope(tag.substr(2, 1));
    }
  } catch (const ConfigError&) {
    throw ConfigError("unknown variant '" + token + "'; " + valid_variant_help());
  }
  return v;
}

inline std::vector<Variant> parse_variant_list(const std::string& list) {
  std::vector<Variant> out;
  for (const auto& t : split(list, ',')) {
    if (t.empty()) throw ConfigError("empty variant in list; " + valid_variant_help());
    auto v = parse_variant(t);
    for (const auto& seen : out)
      if (seen.token == v.token) throw ConfigError("variant '" + t + "' listed twice");
    out.push_back(std::move(v));
  }
  if (out.empty()) throw ConfigError("no variants given; " + valid_variant_help());
  return out;
}

/// Train config of one variant: the base config with its loss and scopes.
inline TrainConfig variant_config(const TrainConfig& base, const Variant& v, std::uint64_t seed) {
  TrainConfig t = base;
  t.stage = 2;
  t.loss = v.loss;
  t.scope = v.scope;
  t.seed = seed;
  return t;
}

/// Loss settings of one variant as written to its manifest.
inline KeyValueText variant_echo(const Variant& v, const TrainConfig& t, const DatasetManifest& m) {
  KeyValueText kv;
  kv.set("variant", v.token);
  kv.set("loss.kind", to_string(t.loss));
  const auto w = effective_weights(t.loss, t.weights);
  kv.set("loss.alpha", w.alpha);
  kv.set("loss.beta", w.beta);
  kv.set("loss.gamma", w.gamma);
  kv.set("loss.delta", w.delta);
  kv.set("loss.corr_scope", to_string(t.scope.corr));
  kv.set("loss.energy_scope", to_string(t.scope.energy));
  kv.set("loss.pixel_area", pixel_area_for(t, m));
  kv.set("train.lr", t.adam.lr);
  kv.set("train.batch", t.batch);
  kv.set("train.epochs", t.epochs);
  return kv;
}

struct VariantRun {
  Variant variant;
  std::uint64_t seed = 0;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

struct AblationResult {
  std::vector<MetricRow> rows;  // run_id = variant token
  std::vector<VariantRun> runs;
};

/// Progress callback: (message).
using AblationProgress = std::function<void(const std::string&)>;

inline AblationResult run_ablation(const Dataset& ds, const RunConfig& cfg, const std::vector<Variant>& variants,
                                   const std::vector<std::uint64_t>& seeds, const AblationProgress& progress = {}) {
  if (variants.empty()) throw ConfigError("no variants given; " + valid_variant_help());
  if (seeds.empty()) throw ConfigError("no seeds given");
  const auto test = ds.split_cases(Split::kTest);
  if (test.empty()) throw DataError("test split is empty");
  AblationResult out;
  for (std::uint64_t seed : seeds) {
    std::optional<Model> stage1;
    if (!cfg.train.teacher_dose) {
      TrainConfig t1 = cfg.train;
      t1.seed = seed;
      if (progress) progress("seed " + std::to_string(seed) + ": stage 1");
      stage1 = train_stage1(ds, cfg.backbone, t1).model;
    }
    for (const auto& v : variants) {
      if (progress) progress("seed " + std::to_string(seed) + ": " + v.token);
      const TrainConfig t2 = variant_config(cfg.train, v, seed);
      auto r = train_stage2(ds, stage1 ? &*stage1 : nullptr, cfg.backbone, t2);
      for (const auto* c : test) {
        // Teacher-dose runs condition on the true dose at test time as well.
        const Volume3D dose = stage1 ? predict_dose(*stage1, *c, t2.contour) : c->dose;
        auto row = evaluate_case(v.token, *c, predict_fluence(r.model, dose, *c, c->angles, t2.dose_input), ds.manifest);
        row.case_id = c->case_id + "@s" + std::to_string(seed);
        out.rows.push_back(std::move(row));
      }
      out.runs.push_back({v, seed, std::move(r.log), r.best_epoch});
    }
  }
  return out;
}

/// Table-shaped CSV: one row per variant, mean and std over pooled test cases.
inline std::string ablation_table_csv(const std::vector<Variant>& variants, const std::vector<MetricRow>& rows) {
  const auto summary = aggregate_report(rows);
  std::string out = "variant,loss,corr_scope,energy_scope,n";
  for (const char* m : kMetricNames) out += std::string(",") + m + "_mean," + m + "_std";
  out += "\n";
  for (const auto& v : variants) {
    std::string line = v.token + "," + to_string(v.loss) + "," + to_string(v.scope.corr) + "," + to_string(v.scope.energy);
    int n = 0;
    std::string cells;
    for (const char* m : kMetricNames)
      for (const auto& s : summary)
        if (s.run_id == v.token && s.metric == m) {
          cells += "," + csv_number(s.mean) + "," + csv_number(s.std);
          n = s.n;
        }
    out += line + "," + std::to_string(n) + cells + "\n";
  }
  return out;
}

/// Wilcoxon rows of every variant against "mse" when it was run.
inline std::vector<SignificanceRow> ablation_significance(const std::vector<Variant>& variants,
                                                          const std::vector<MetricRow>& rows) {
  std::vector<SignificanceRow> out;
  const bool has_mse = std::any_of(variants.begin(), variants.end(), [](const Variant& v) { return v.token == "mse"; });
  if (!has_mse) return out;
  for (const auto& v : variants) {
    if (v.token == "mse") continue;
    for (auto& r : compare_runs(rows, v.token, "mse")) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fluencelab
