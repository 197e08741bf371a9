// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// fluencelab: gen, train, eval, ablate, gradcheck.
// Exit codes: 0 success, 1 usage or config error, 2 runtime or data error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fluencelab/ablation.hpp"
#include "fluencelab/checkpoint.hpp"
#include "fluencelab/config.hpp"
#include "fluencelab/dataset.hpp"
#include "fluencelab/evaluation.hpp"
#include "fluencelab/gradcheck.hpp"
#include "fluencelab/pgm.hpp"
#include "fluencelab/phantom.hpp"
#include "fluencelab/report.hpp"
#include "fluencelab/run_dir.hpp"
#include "fluencelab/training.hpp"

namespace fs = std::filesystem;
using namespace fluencelab;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

RunConfig load_config(const std::string& path) { return path.empty() ? RunConfig{} : read_config(path); }

/// Makes `dir` an empty directory. A non-empty one is only cleared with --force.
void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output " + dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw ConfigError("output " + dir.string() + " is not empty (use --force to overwrite)");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void prepare_output_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) throw ConfigError("output " + file.string() + " exists (use --force to overwrite)");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Accepts either a checkpoint directory or a run directory holding one.
fs::path checkpoint_path(const fs::path& p) {
  if (fs::exists(p / "index.txt")) return p;
  if (fs::exists(p / "checkpoint" / "index.txt")) return p / "checkpoint";
  throw DataError("no checkpoint found at " + p.string());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& list) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split(list, ',')) out.push_back(parse_u64(s, "--seeds"));
  if (out.empty()) throw ConfigError("--seeds is empty");
  return out;
}

void log_epoch(int epoch, const EpochLog& tr, const EpochLog& va) {
  std::cerr << "epoch " << epoch << "  train " << format_double(tr.total) << "  val " << format_double(va.total) << "\n";
}

// ---- gen -------------------------------------------------------------------

struct GenArgs {
  std::string config, out;
  int cases = 16;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_gen(const GenArgs& a) {
  RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.phantom.seed = *a.seed;
  if (a.cases < 1) throw ConfigError("--cases must be >= 1");
  // Everything is generated before the output directory is touched, so a
  // failure leaves no partial dataset behind.
  const Dataset ds = generate_dataset(cfg.phantom, a.cases, cfg.split);
  prepare_output_dir(a.out, a.force);
  write_dataset(a.out, ds);
  std::cout << "wrote " << ds.cases.size() << " cases to " << a.out << " (train "
            << ds.split_cases(Split::kTrain).size() << ", val " << ds.split_cases(Split::kVal).size() << ", test "
            << ds.split_cases(Split::kTest).size() << ")\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  int stage = 1;
  std::string config, data, out, stage1_ckpt;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool force = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.config);
  cfg.train.stage = a.stage;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.deterministic) cfg.train.deterministic = true;
  cfg.validate();
  if (a.stage == 2 && a.stage1_ckpt.empty() && !cfg.train.teacher_dose)
    throw ConfigError("stage 2 needs --stage1-ckpt (or train.teacher_dose = true in the config)");
  const Dataset ds = read_dataset(a.data);
  std::optional<LoadedCheckpoint> stage1;
  if (a.stage == 2 && !a.stage1_ckpt.empty()) stage1 = load_checkpoint(checkpoint_path(a.stage1_ckpt));
  prepare_output_dir(a.out, a.force);
  const EpochCallback progress = a.quiet ? EpochCallback{} : EpochCallback(log_epoch);
  const TrainResult r = a.stage == 1 ? train_stage1(ds, cfg.backbone, cfg.train, progress)
                                     : train_stage2(ds, stage1 ? &stage1->model : nullptr, cfg.backbone, cfg.train, progress);
  write_run(a.out, cfg, r, ds.manifest, a.stage == 1 ? "stage1" : "stage2");
  std::cout << "stage " << a.stage << ": best epoch " << r.best_epoch << ", val total " << format_double(r.best_value)
            << " -> " << a.out << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string stage1_ckpt, stage2_ckpt, data, split = "test", out, dump_images, run_id;
  bool oracle = false;
  bool force = false;
};

fs::path summary_path(const fs::path& out) {
  return out.parent_path() / (out.stem().string() + "_summary" + out.extension().string());
}

int cmd_eval(const EvalArgs& a) {
  if (!a.oracle && (a.stage1_ckpt.empty() || a.stage2_ckpt.empty()))
    throw ConfigError("eval needs --stage1-ckpt and --stage2-ckpt (or --oracle)");
  const Split split = parse_split(a.split);
  const Dataset ds = read_dataset(a.data);
  const auto cases = ds.split_cases(split);
  if (cases.empty()) throw DataError("split '" + a.split + "' is empty");

  std::optional<LoadedCheckpoint> s1, s2;
  PlanOptions plan;
  if (!a.oracle) {
    s1 = load_checkpoint(checkpoint_path(a.stage1_ckpt));
    s2 = load_checkpoint(checkpoint_path(a.stage2_ckpt));
    // The Stage-2 run fixes how dose priors are formed.
    const RunConfig echo = apply_config(s2->config_echo);
    plan.contour = echo.train.contour;
    plan.dose_input = echo.train.dose_input;
  }
  const std::string run_id = !a.run_id.empty() ? a.run_id : a.oracle ? "oracle" : "model";

  const fs::path out = a.out, summary = summary_path(out);
  prepare_output_file(out, a.force);
  prepare_output_file(summary, a.force);
  if (!a.dump_images.empty()) prepare_output_dir(a.dump_images, a.force);

  std::vector<MetricRow> rows;
  for (const auto* c : cases) {
    const auto pred = a.oracle ? c->fluence : infer_plan(s1->model, s2->model, *c, plan);
    rows.push_back(evaluate_case(run_id, *c, pred, ds.manifest));
    if (!a.dump_images.empty()) {
      const fs::path dir = fs::path(a.dump_images) / c->case_id;
      fs::create_directories(dir);
      for (std::size_t b = 0; b < pred.size(); ++b) {
        write_pgm(dir / ("beam_" + std::to_string(b) + "_pred.pgm"), pred[b], ds.manifest.value_range);
        write_pgm(dir / ("beam_" + std::to_string(b) + "_target.pgm"), c->fluence[b], ds.manifest.value_range);
      }
    }
  }
  write_text(out, metrics_csv(rows));
  const auto agg = aggregate_report(rows);
  write_text(summary, summary_csv(agg));
  for (const auto& s : agg)
    std::cout << s.metric << " " << csv_number(s.mean) << " +- " << csv_number(s.std) << " (n=" << s.n << ")\n";
  return 0;
}

// ---- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string config, data, variants = "mse,far", seeds = "1", out;
  bool force = false;
};

std::string variant_dir_name(const std::string& token) {
  std::string s = token;
  for (char& ch : s)
    if (ch == '/' || ch == ':' || ch == '+') ch = '_';
  return s;
}

int cmd_ablate(const AblateArgs& a) {
  const RunConfig cfg = load_config(a.config);
  const auto variants = parse_variant_list(a.variants);
  const auto seeds = parse_seed_list(a.seeds);
  const Dataset ds = read_dataset(a.data);
  prepare_output_dir(a.out, a.force);
  const auto result = run_ablation(ds, cfg, variants, seeds, [](const std::string& m) { std::cerr << m << "\n"; });

  const fs::path out = a.out;
  config_to_text(cfg).write(out / "config.txt");
  write_text(out / "metrics.csv", metrics_csv(result.rows));
  write_text(out / "summary.csv", summary_csv(aggregate_report(result.rows)));
  write_text(out / "table.csv", ablation_table_csv(variants, result.rows));
  write_text(out / "significance.csv", significance_csv(ablation_significance(variants, result.rows)));
  for (const auto& v : variants) {
    const fs::path dir = out / "variants" / variant_dir_name(v.token);
    fs::create_directories(dir);
    variant_echo(v, variant_config(cfg.train, v, seeds.front()), ds.manifest).write(dir / "manifest.txt");
  }
  for (const auto& run : result.runs)
    write_text(out / "variants" / variant_dir_name(run.variant.token) / ("log_s" + std::to_string(run.seed) + ".csv"),
               log_csv(run.log));
  std::cout << ablation_table_csv(variants, result.rows);
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckArgs {
  std::string component = "far";
  std::uint64_t seed = 1;
  std::optional<std::size_t> inject_fault;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const LossComponent component = parse_loss_component(a.component);
  GradcheckOptions opt;
  opt.flip_entry = a.inject_fault;
  const auto r = run_gradcheck(component, a.seed, opt);
  std::cout << "component " << to_string(component) << " seed " << a.seed << ": max relative error "
            << format_double(r.max_rel_error) << " at index " << r.worst_index << "\n";
  if (r.passed) {
    std::cout << "PASS\n";
    return 0;
  }
  std::cout << "FAIL: " << r.failing.size() << " entries above " << format_double(opt.tolerance) << ", indices";
  for (std::size_t i : r.failing) std::cout << " " << i;
  std::cout << "\n";
  return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FluenceLab: two-stage fluence-map regression on synthetic phantoms"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate a synthetic phantom dataset");
  g->add_option("--config", gen.config, "run config file");
  g->add_option("--out", gen.out, "output dataset directory")->required();
  g->add_option("--cases", gen.cases, "number of cases")->capture_default_str();
  g->add_option("--seed", gen.seed, "generator seed (overrides phantom.seed)");
  g->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train stage 1 (dose) or stage 2 (fluence)");
  t->add_option("--stage", train.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  t->add_option("--config", train.config, "run config file");
  t->add_option("--data", train.data, "dataset directory")->required();
  t->add_option("--out", train.out, "run directory")->required();
  t->add_option("--stage1-ckpt", train.stage1_ckpt, "stage-1 run or checkpoint directory");
  t->add_option("--seed", train.seed, "training seed (overrides train.seed)");
  t->add_flag("--deterministic", train.deterministic, "bit-reproducible training (always on; echoed)");
  t->add_flag("--force", train.force, "overwrite a non-empty run directory");
  t->add_flag("--quiet", train.quiet, "no per-epoch progress");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "evaluate a trained pipeline on a split");
  e->add_option("--stage1-ckpt", eval.stage1_ckpt, "stage-1 run or checkpoint directory");
  e->add_option("--stage2-ckpt", eval.stage2_ckpt, "stage-2 run or checkpoint directory");
  e->add_option("--data", eval.data, "dataset directory")->required();
  e->add_option("--split", eval.split, "train, val or test")->capture_default_str();
  e->add_option("--out", eval.out, "per-case metrics CSV; the summary goes next to it")->required();
  e->add_option("--dump-images", eval.dump_images, "directory for 16-bit PGM prediction/target pairs");
  e->add_option("--run-id", eval.run_id, "run_id column value");
  e->add_flag("--oracle", eval.oracle, "score the ground truth against itself");
  e->add_flag("--force", eval.force, "overwrite existing outputs");

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "train and compare loss variants");
  ab->add_option("--config", ablate.config, "run config file");
  ab->add_option("--data", ablate.data, "dataset directory")->required();
  ab->add_option("--variants", ablate.variants, valid_variant_help())->capture_default_str();
  ab->add_option("--seeds", ablate.seeds, "comma-separated training seeds")->capture_default_str();
  ab->add_option("--out", ablate.out, "output directory")->required();
  ab->add_flag("--force", ablate.force, "overwrite a non-empty output directory");

  GradcheckArgs gc;
  auto* gk = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  gk->add_option("--component", gc.component, "mse, grad, corr, energy or far")->capture_default_str();
  gk->add_option("--seed", gc.seed, "input seed")->capture_default_str();
  // Test hook: sign-flips one analytic entry so the failure path can be exercised.
  gk->add_option("--inject-fault", gc.inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(train);
    if (*e) return cmd_eval(eval);
    if (*ab) return cmd_ablate(ablate);
    if (*gk) return cmd_gradcheck(gc);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
