// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Two-stage optimization.
//
// Every stage is reduced to "units": groups of model inputs whose outputs
// form one B x H x W stack scored jointly by the loss. A Stage-1 unit is one
// axial slice (B = 1, MSE); a Stage-2 unit is one case with all its beams
// (or one slice of it in slice mode); a single-stage unit is one case.
// Batches hold a fixed number of units; the batch loss is the unit mean.
// Each unit accumulates into its own gradient buffer and buffers are summed
// in unit order, so results do not depend on the thread count.

#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fluencelab/adam.hpp"
#include "fluencelab/checkpoint.hpp"
#include "fluencelab/dataset.hpp"
#include "fluencelab/losses.hpp"
#include "fluencelab/pipeline.hpp"

namespace fluencelab {

enum class LossKind { kMse, kMseEnergy, kMseGrad, kFar };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kMse: return "mse";
    case LossKind::kMseEnergy: return "mse+energy";
    case LossKind::kMseGrad: return "mse+grad";
    case LossKind::kFar: return "far";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "mse+energy") return LossKind::kMseEnergy;
  if (s == "mse+grad") return LossKind::kMseGrad;
  if (s == "far") return LossKind::kFar;
  throw ConfigError("unknown loss '" + s + "' (expected mse, mse+energy, mse+grad or far)");
}

/// Weights actually applied for a loss kind: terms outside the kind are zeroed.
inline LossWeights effective_weights(LossKind kind, const LossWeights& w) {
  switch (kind) {
    case LossKind::kMse: return {w.alpha, 0, 0, 0};
    case LossKind::kMseEnergy: return {w.alpha, 0, 0, w.delta};
    case LossKind::kMseGrad: return {w.alpha, w.beta, 0, 0};
    case LossKind::kFar: return w;
  }
  return w;
}

enum class StageKind { kDose, kFluence, kSingle };

struct TrainConfig {
  int stage = 1;  // 1 or 2
  AdamConfig adam;
  int batch = 16;
  int epochs = 50;
  LossKind loss = LossKind::kFar;
  LossWeights weights;
  ScopeConfig scope;
  bool teacher_dose = false;
  std::uint64_t seed = 0;
  bool deterministic = true;  // results never depend on the thread count; kept for the run echo
  ContourMode contour = ContourMode::kCombined;
  DoseInputMode dose_input = DoseInputMode::kCollapsed;
  double pixel_area = 0.0;  // 0: take the dataset manifest value

  void validate() const {
    if (stage != 1 && stage != 2) throw ConfigError("train.stage must be 1 or 2");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (pixel_area < 0) throw ConfigError("loss.pixel_area must be >= 0");
    adam.validate();
    weights.validate();
  }
};

struct EpochLog {
  int epoch = 0;
  std::string split;
  double total = 0, mse = 0, grad = 0, corr = 0, energy = 0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

inline std::string log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,split,total,mse,grad,corr,energy\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + "," + e.split + "," + format_double(e.total) + "," + format_double(e.mse) + "," +
           format_double(e.grad) + "," + format_double(e.corr) + "," + format_double(e.energy) + "\n";
  return out;
}

/// Inputs and targets of one loss evaluation.
struct TrainUnit {
  std::vector<nn::Tensor> inputs;  // one per map in the stack
  std::vector<float> target;       // B x H x W
  int height = 0, width = 0;
  int beams() const { return static_cast<int>(inputs.size()); }
};

struct TrainResult {
  Model model;  // parameters of the best-validation epoch
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_value = 0;
  AdamState adam;  // optimizer state at the best epoch
  CheckpointMeta meta;
};

/// Progress callback: (epoch, train entry, validation entry).
using EpochCallback = std::function<void(int, const EpochLog&, const EpochLog&)>;

namespace detail {

struct UnitLoss {
  LossSpec spec;
  bool far = true;
};

inline LossBreakdown run_unit(const Model& model, const TrainUnit& u, const UnitLoss& loss, nn::Gradients* grads,
                              double scale) {
  const int b = u.beams();
  const std::size_t plane = static_cast<std::size_t>(u.height) * u.width;
  std::vector<std::unique_ptr<nn::Tape>> tapes;
  std::vector<nn::Tape::Id> outs;
  std::vector<double> pred(static_cast<std::size_t>(b) * plane), target(u.target.begin(), u.target.end());
  for (int k = 0; k < b; ++k) {
    tapes.push_back(std::make_unique<nn::Tape>(model.params(), grads != nullptr));
    auto& t = *tapes.back();
    outs.push_back(model.forward(t, t.input(u.inputs[k])));
    const auto& y = t.value(outs.back()).v;
    std::copy(y.begin(), y.end(), pred.begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  const BeamStack<double> sp(pred, b, u.height, u.width), st(target, b, u.height, u.width);
  std::vector<double> g;
  if (grads) g.assign(pred.size(), 0.0);
  auto r = far_loss(sp, st, loss.spec.weights, loss.spec.scope, loss.spec.pixel_area, g);
  if (grads) {
    for (int k = 0; k < b; ++k) {
      nn::Tensor seed(1, u.height, u.width);
      for (std::size_t i = 0; i < plane; ++i) seed.v[i] = static_cast<float>(scale * g[k * plane + i]);
      tapes[k]->backward(outs[k], seed, *grads);
    }
  }
  return r;
}

inline void accumulate(EpochLog& e, const LossBreakdown& r) {
  e.total += r.total;
  e.mse += r.mse;
  e.grad += r.grad;
  e.corr += r.corr;
  e.energy += r.energy;
}

inline void finish(EpochLog& e, std::size_t n) {
  const double d = static_cast<double>(std::max<std::size_t>(n, 1));
  e.total /= d, e.mse /= d, e.grad /= d, e.corr /= d, e.energy /= d;
  for (double v : {e.total, e.mse, e.grad, e.corr, e.energy})
    if (!std::isfinite(v)) throw DataError("non-finite " + e.split + " loss at epoch " + std::to_string(e.epoch));
}

}  // namespace detail

/// Evaluates the mean loss of a model over units, without gradients.
inline EpochLog evaluate_units(const Model& model, const std::vector<TrainUnit>& units, const LossSpec& spec,
                               const std::string& split, int epoch) {
  EpochLog e{epoch, split};
  std::vector<LossBreakdown> parts(units.size());
  parallel_for(static_cast<int>(units.size()),
               [&](int i) { parts[i] = detail::run_unit(model, units[i], {spec}, nullptr, 1.0); });
  for (const auto& p : parts) detail::accumulate(e, p);
  detail::finish(e, units.size());
  return e;
}

/// Generic loop shared by every stage. `units_per_batch` fixes the batch.
inline TrainResult train_units(const BackboneConfig& backbone, const std::vector<TrainUnit>& train,
                               const std::vector<TrainUnit>& val, const LossSpec& spec, const TrainConfig& cfg,
                               int units_per_batch, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("training split is empty");
  const std::uint64_t model_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(cfg.stage));
  Model model(backbone, model_seed);
  AdamState adam(model.params());
  TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity(), adam,
                     {model_seed, cfg.seed, 0}};
  const int threads = thread_budget();

  std::vector<std::size_t> order(train.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(mix_seed(cfg.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle.shuffle(order);

    EpochLog tr{epoch, "train"};
    for (std::size_t start = 0; start < order.size(); start += units_per_batch) {
      const std::size_t n = std::min<std::size_t>(units_per_batch, order.size() - start);
      std::vector<nn::Gradients> unit_grads(n, nn::Gradients(model.params()));
      std::vector<LossBreakdown> parts(n);
      const double scale = 1.0 / static_cast<double>(n);
      parallel_for(
          static_cast<int>(n),
          [&](int i) { parts[i] = detail::run_unit(model, train[order[start + i]], {spec}, &unit_grads[i], scale); },
          threads);
      nn::Gradients total(model.params());
      for (std::size_t i = 0; i < n; ++i) {
        total.add(unit_grads[i]);
        detail::accumulate(tr, parts[i]);
      }
      adam_step(model.params(), total, adam, cfg.adam);
    }
    detail::finish(tr, train.size());
    result.log.push_back(tr);

    const EpochLog va = val.empty() ? EpochLog{epoch, "val", tr.total, tr.mse, tr.grad, tr.corr, tr.energy}
                                    : evaluate_units(model, val, spec, "val", epoch);
    result.log.push_back(va);
    if (on_epoch) on_epoch(epoch, tr, va);
    if (va.total < result.best_value) {
      result.best_value = va.total;
      result.best_epoch = epoch;
      result.model = model;
      result.adam = adam;
      result.meta.epoch = epoch;
    }
  }
  return result;
}

inline std::vector<TrainUnit> stage1_units(const std::vector<const CaseRecord*>& cases, ContourMode mode) {
  std::vector<TrainUnit> out;
  for (const auto* c : cases)
    for (int z = 0; z < c->ct.depth(); ++z) {
      const auto s = c->dose.slice_span(z);
      out.push_back({{stage1_input(*c, z, mode)}, std::vector<float>(s.begin(), s.end()), c->ct.height(), c->ct.width()});
    }
  return out;
}

/// Dose prior per case: ground truth in teacher mode, else Stage-1 output.
inline std::vector<Volume3D> dose_priors(const std::vector<const CaseRecord*>& cases, const Model* stage1,
                                         ContourMode mode) {
  std::vector<Volume3D> out;
  for (const auto* c : cases) out.push_back(stage1 ? predict_dose(*stage1, *c, mode) : c->dose);
  return out;
}

inline std::vector<float> fluence_stack(const CaseRecord& c) {
  std::vector<float> out;
  for (const auto& f : c.fluence) out.insert(out.end(), f.values().begin(), f.values().end());
  return out;
}

inline std::vector<TrainUnit> stage2_units(const std::vector<const CaseRecord*>& cases,
                                           const std::vector<Volume3D>& priors, DoseInputMode mode) {
  std::vector<TrainUnit> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = *cases[i];
    const auto target = fluence_stack(c);
    for (const auto& img : stage2_dose_images(priors[i], c, mode)) {
      TrainUnit u{{}, target, c.ct.height(), c.ct.width()};
      for (double a : c.angles) u.inputs.push_back(stage2_assemble(img, GantryAngle(a)));
      out.push_back(std::move(u));
    }
  }
  return out;
}

inline std::vector<TrainUnit> single_stage_units(const std::vector<const CaseRecord*>& cases) {
  std::vector<TrainUnit> out;
  for (const auto* c : cases) {
    TrainUnit u{{}, fluence_stack(*c), c->ct.height(), c->ct.width()};
    for (double a : c->angles) u.inputs.push_back(single_stage_input(*c, GantryAngle(a)));
    out.push_back(std::move(u));
  }
  return out;
}

inline double pixel_area_for(const TrainConfig& cfg, const DatasetManifest& m) {
  return cfg.pixel_area > 0 ? cfg.pixel_area : m.pixel_area;
}

inline LossSpec fluence_loss_spec(const TrainConfig& cfg, const DatasetManifest& m) {
  return {LossComponent::kFar, effective_weights(cfg.loss, cfg.weights), cfg.scope, pixel_area_for(cfg, m)};
}

/// Backbone copy with the input width of a stage.
inline BackboneConfig with_inputs(BackboneConfig b, StageKind stage, ContourMode mode) {
  b.in_channels = stage == StageKind::kDose ? stage1_channels(mode) : stage == StageKind::kFluence ? 3 : kSingleStageChannels;
  return b;
}

/// Stage-1 dose regression on axial slices. The loss settings of `cfg` do
/// not apply; Stage 1 always minimizes the slice MSE.
inline TrainResult train_stage1(const Dataset& ds, const BackboneConfig& backbone, TrainConfig cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.stage = 1;
  const LossSpec spec{LossComponent::kFar, LossWeights::mse_only(), {}, pixel_area_for(cfg, ds.manifest)};
  return train_units(with_inputs(backbone, StageKind::kDose, cfg.contour), stage1_units(ds.split_cases(Split::kTrain), cfg.contour),
                     stage1_units(ds.split_cases(Split::kVal), cfg.contour), spec, cfg, cfg.batch, on_epoch);
}

inline int cases_per_batch(const TrainConfig& cfg, int beams) {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(cfg.batch) / beams)));
}

/// Stage-2 fluence regression. `stage1` is required unless teacher_dose.
inline TrainResult train_stage2(const Dataset& ds, const Model* stage1, const BackboneConfig& backbone, TrainConfig cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.stage = 2;
  if (!stage1 && !cfg.teacher_dose)
    throw ConfigError("stage 2 needs a stage-1 checkpoint unless train.teacher_dose is set");
  const auto train = ds.split_cases(Split::kTrain), val = ds.split_cases(Split::kVal);
  if (train.empty()) throw DataError("training split is empty");
  const Model* prior = cfg.teacher_dose ? nullptr : stage1;
  auto tu = stage2_units(train, dose_priors(train, prior, cfg.contour), cfg.dose_input);
  auto vu = stage2_units(val, dose_priors(val, prior, cfg.contour), cfg.dose_input);
  return train_units(with_inputs(backbone, StageKind::kFluence, cfg.contour), tu, vu, fluence_loss_spec(cfg, ds.manifest),
                     cfg, cases_per_batch(cfg, train.front()->beams()), on_epoch);
}

/// Anatomy-to-fluence baseline without the dose prior.
inline TrainResult train_single_stage(const Dataset& ds, const BackboneConfig& backbone, TrainConfig cfg,
                                      const EpochCallback& on_epoch = {}) {
  cfg.stage = 2;
  const auto train = ds.split_cases(Split::kTrain), val = ds.split_cases(Split::kVal);
  if (train.empty()) throw DataError("training split is empty");
  return train_units(with_inputs(backbone, StageKind::kSingle, cfg.contour), single_stage_units(train),
                     single_stage_units(val), fluence_loss_spec(cfg, ds.manifest), cfg,
                     cases_per_batch(cfg, train.front()->beams()), on_epoch);
}

}  // namespace fluencelab
