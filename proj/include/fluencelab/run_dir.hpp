// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Training run directory:
//   config.txt    full RunConfig echo
//   log.csv       epoch,split,total,mse,grad,corr,energy
//   checkpoint/   best-validation model with optimizer state
//   manifest.txt  what was run and which epoch was kept

#pragma once

#include <filesystem>
#include <string>

#include "fluencelab/checkpoint.hpp"
#include "fluencelab/config.hpp"
#include "fluencelab/report.hpp"
#include "fluencelab/training.hpp"

namespace fluencelab {

/// Summary of a finished run, echoing the settings that define it.
inline KeyValueText run_manifest(const RunConfig& cfg, const TrainResult& r, const DatasetManifest& data,
                                 const std::string& kind) {
  const TrainConfig& t = cfg.train;
  KeyValueText kv;
  kv.set("run", kind);
  kv.set("stage", t.stage);
  kv.set("lr", t.adam.lr);
  kv.set("batch", t.batch);
  kv.set("epochs", t.epochs);
  kv.set("seed", t.seed);
  kv.set("deterministic", t.deterministic);
  kv.set("teacher_dose", t.teacher_dose);
  if (kind == "stage1") {
    kv.set("loss", "mse");
  } else {
    const auto w = effective_weights(t.loss, t.weights);
    kv.set("loss", to_string(t.loss));
    kv.set("alpha", w.alpha);
    kv.set("beta", w.beta);
    kv.set("gamma", w.gamma);
    kv.set("delta", w.delta);
    kv.set("corr_scope", to_string(t.scope.corr));
    kv.set("energy_scope", to_string(t.scope.energy));
    kv.set("pixel_area", pixel_area_for(t, data));
    kv.set("dose_input", to_string(t.dose_input));
  }
  kv.set("contour", to_string(t.contour));
  kv.set("backbone", to_string(cfg.backbone.kind));
  kv.set("dataset_seed", data.seed);
  kv.set("dataset_cases", data.n_cases);
  kv.set("best_epoch", r.best_epoch);
  kv.set("best_val_total", r.best_value);
  return kv;
}

inline void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainResult& r,
                      const DatasetManifest& data, const std::string& kind) {
  std::filesystem::create_directories(dir);
  const auto echo = config_to_text(cfg);
  echo.write(dir / "config.txt");
  write_text(dir / "log.csv", log_csv(r.log));
  save_checkpoint(dir / "checkpoint", r.model, r.meta, &r.adam, echo);
  run_manifest(cfg, r, data, kind).write(dir / "manifest.txt");
}

}  // namespace fluencelab
