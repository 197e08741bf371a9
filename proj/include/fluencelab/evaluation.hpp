// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "fluencelab/dataset.hpp"
#include "fluencelab/metrics.hpp"
#include "fluencelab/pipeline.hpp"
#include "fluencelab/report.hpp"
#include "fluencelab/types.hpp"

namespace fluencelab {

/// Metrics of one case, pooled over all beams. PSNR and SSIM use the
/// manifest value range; energy uses the manifest pixel area.
inline MetricRow evaluate_case(const std::string& run_id, const CaseRecord& c, const std::vector<Slice2D>& pred,
                               const DatasetManifest& m) {
  if (pred.size() != c.fluence.size()) throw DataError("case " + c.case_id + ": prediction beam count mismatch");
  std::vector<float> p, t;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    if (pred[b].height() != c.fluence[b].height() || pred[b].width() != c.fluence[b].width())
      throw DataError("case " + c.case_id + ": prediction shape mismatch");
    p.insert(p.end(), pred[b].values().begin(), pred[b].values().end());
    t.insert(t.end(), c.fluence[b].values().begin(), c.fluence[b].values().end());
  }
  const int beams = static_cast<int>(pred.size()), h = c.fluence[0].height(), w = c.fluence[0].width();
  const BeamStack<float> sp(p, beams, h, w), st(t, beams, h, w);
  MetricRow r;
  r.run_id = run_id;
  r.case_id = c.case_id;
  r.mae = mae<float>(p, t);
  r.energy_err_pct = energy_error_percent(sp, st, m.pixel_area);
  r.psnr_db = psnr<float>(p, t, m.value_range);
  r.ssim = ssim(sp, st, m.value_range);
  return r;
}

/// Pixelwise mean fluence of the training cases, per beam index.
inline std::vector<Slice2D> population_mean_fluence(const Dataset& ds) {
  const auto train = ds.split_cases(Split::kTrain);
  if (train.empty()) throw DataError("training split is empty");
  const auto& first = *train.front();
  std::vector<std::vector<double>> acc(first.beams(), std::vector<double>(first.fluence[0].size(), 0.0));
  for (const auto* c : train) {
    if (c->beams() != first.beams()) throw DataError("cases differ in beam count");
    for (int b = 0; b < c->beams(); ++b)
      for (std::size_t i = 0; i < acc[b].size(); ++i) acc[b][i] += c->fluence[b].values()[i];
  }
  std::vector<Slice2D> out;
  for (const auto& a : acc) {
    Slice2D s(first.fluence[0].height(), first.fluence[0].width());
    for (std::size_t i = 0; i < a.size(); ++i) s.values()[i] = static_cast<float>(a[i] / train.size());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fluencelab
