// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the fluencelab binary end to end on a tiny configuration.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fluencelab/dataset.hpp"
#include "fluencelab/hash.hpp"
#include "fluencelab/pgm.hpp"

using namespace fluencelab;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::path(::testing::TempDir()) / "fluencelab_cli";

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const auto out = kWork / "stdout.txt", err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + FLUENCELAB_CLI + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string path(const std::string& name) { return (kWork / name).string(); }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::ofstream(kWork / "tiny.txt") << "phantom.depth = 4\nphantom.height = 32\nphantom.width = 32\n"
                                         "phantom.beams = 3\nbackbone.base = 4\ntrain.epochs = 1\ntrain.batch = 4\n";
  }
  static std::string tiny() { return "--config " + path("tiny.txt"); }
};

}  // namespace

TEST_F(Cli, GenIsByteIdenticalAndSplitsSixteenCases) {
  ASSERT_EQ(cli("gen " + tiny() + " --out " + path("gen_a")).code, 0);
  ASSERT_EQ(cli("gen " + tiny() + " --out " + path("gen_b")).code, 0);
  EXPECT_EQ(hash_tree(path("gen_a")), hash_tree(path("gen_b")));
  const auto ds = read_dataset(path("gen_a"));
  EXPECT_EQ(ds.cases.size(), 16u);
  EXPECT_EQ(ds.split_cases(Split::kTrain).size(), 12u);
  EXPECT_EQ(ds.split_cases(Split::kVal).size(), 1u);
  EXPECT_EQ(ds.split_cases(Split::kTest).size(), 3u);
}

TEST_F(Cli, GenRefusesNonEmptyOutputWithoutForce) {
  ASSERT_EQ(cli("gen " + tiny() + " --cases 2 --out " + path("gen_force")).code, 0);
  const auto before = hash_tree(path("gen_force"));
  const auto r = cli("gen " + tiny() + " --cases 3 --out " + path("gen_force"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--force"), std::string::npos) << r.err;
  EXPECT_EQ(hash_tree(path("gen_force")), before);
  EXPECT_EQ(cli("gen " + tiny() + " --cases 3 --force --out " + path("gen_force")).code, 0);
  EXPECT_EQ(read_dataset(path("gen_force")).cases.size(), 3u);
}

TEST_F(Cli, GenWithZeroCasesLeavesNoOutput) {
  EXPECT_EQ(cli("gen " + tiny() + " --cases 0 --out " + path("gen_zero")).code, 1);
  EXPECT_FALSE(fs::exists(path("gen_zero")));
}

TEST_F(Cli, UsageAndConfigErrorsExitWithOne) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("gen").code, 1);  // --out is required
  std::ofstream(kWork / "typo.txt") << "train.learning_rate = 1e-3\n";
  const auto r = cli("gen --config " + path("typo.txt") + " --out " + path("gen_typo"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
}

TEST_F(Cli, MissingDatasetIsARuntimeError) {
  EXPECT_EQ(cli("train --stage 1 " + tiny() + " --data " + path("no_such_data") + " --out " + path("run_missing")).code,
            2);
}

TEST_F(Cli, Stage2WithoutStage1CheckpointIsRejected) {
  ASSERT_EQ(cli("gen " + tiny() + " --cases 4 --out " + path("s2_data")).code, 0);
  const auto r = cli("train --stage 2 " + tiny() + " --data " + path("s2_data") + " --out " + path("s2_run"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--stage1-ckpt"), std::string::npos) << r.err;
}

TEST_F(Cli, AblateRejectsUnknownVariantAndListsValidTokens) {
  ASSERT_EQ(cli("gen " + tiny() + " --cases 4 --out " + path("ab_data")).code, 0);
  const auto r = cli("ablate " + tiny() + " --data " + path("ab_data") + " --variants far,l1 --out " + path("ab_out"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("l1"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("mse+energy"), std::string::npos) << r.err;
}

TEST_F(Cli, GradcheckPassesAndReportsInjectedFault) {
  EXPECT_EQ(cli("gradcheck --component far --seed 3").code, 0);
  const auto r = cli("gradcheck --component far --seed 3 --inject-fault 5");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE((r.out + r.err).find("5"), std::string::npos);
  EXPECT_EQ(cli("gradcheck --component l2").code, 1);
}

TEST_F(Cli, TrainEvalPipelineIsDeterministicAndDumpsImages) {
  ASSERT_EQ(cli("gen " + tiny() + " --cases 6 --out " + path("pipe_data")).code, 0);
  for (const std::string tag : {"a", "b"}) {
    ASSERT_EQ(cli("train --stage 1 --deterministic --quiet " + tiny() + " --data " + path("pipe_data") + " --out " +
                  path("s1_" + tag))
                  .code,
              0);
    ASSERT_EQ(cli("train --stage 2 --deterministic --quiet " + tiny() + " --data " + path("pipe_data") +
                  " --stage1-ckpt " + path("s1_" + tag) + " --out " + path("s2_" + tag))
                  .code,
              0);
    ASSERT_EQ(cli("eval --data " + path("pipe_data") + " --stage1-ckpt " + path("s1_" + tag) + " --stage2-ckpt " +
                  path("s2_" + tag) + " --out " + path("eval_" + tag + "/metrics.csv") + " --dump-images " +
                  path("img_" + tag))
                  .code,
              0);
  }
  EXPECT_EQ(hash_tree(path("s1_a")), hash_tree(path("s1_b")));
  EXPECT_EQ(hash_tree(path("s2_a")), hash_tree(path("s2_b")));
  EXPECT_EQ(hash_tree(path("eval_a")), hash_tree(path("eval_b")));
  EXPECT_EQ(hash_tree(path("img_a")), hash_tree(path("img_b")));

  const auto metrics = slurp(kWork / "eval_a" / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "run_id,case_id,mae,energy_err_pct,psnr_db,ssim");
  EXPECT_TRUE(fs::exists(kWork / "eval_a" / "metrics_summary.csv"));
  EXPECT_TRUE(fs::exists(kWork / "s1_a" / "log.csv"));
  EXPECT_TRUE(fs::exists(kWork / "s2_a" / "manifest.txt"));

  // Dumped targets reproduce the stored fluence to one quantization step.
  const auto ds = read_dataset(path("pipe_data"));
  const auto* c = ds.split_cases(Split::kTest).front();
  const double range = ds.manifest.value_range;
  for (int b = 0; b < c->beams(); ++b) {
    const auto dir = kWork / "img_a" / c->case_id;
    const auto target = read_pgm(dir / ("beam_" + std::to_string(b) + "_target.pgm"), range);
    ASSERT_TRUE(fs::exists(dir / ("beam_" + std::to_string(b) + "_pred.pgm")));
    for (std::size_t i = 0; i < target.values().size(); ++i)
      ASSERT_LE(std::abs(target.values()[i] - c->fluence[b].values()[i]), range / 65535.0 * 1.0001);
  }

  // Eval refuses to overwrite its CSV without --force.
  EXPECT_EQ(cli("eval --oracle --data " + path("pipe_data") + " --out " + path("eval_a/metrics.csv")).code, 1);
}

TEST_F(Cli, OracleEvalScoresPerfectly) {
  ASSERT_EQ(cli("gen " + tiny() + " --cases 5 --out " + path("oracle_data")).code, 0);
  ASSERT_EQ(cli("eval --oracle --data " + path("oracle_data") + " --run-id gt --out " + path("oracle/m.csv")).code, 0);
  std::istringstream rows(slurp(kWork / "oracle" / "m.csv"));
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    const auto f = split(line, ',');
    ASSERT_EQ(f.size(), 6u) << line;
    EXPECT_EQ(f[0], "gt");
    EXPECT_EQ(parse_double(f[2], "mae"), 0.0);
    EXPECT_EQ(parse_double(f[3], "energy"), 0.0);
    EXPECT_EQ(f[4], "inf");
    EXPECT_EQ(parse_double(f[5], "ssim"), 1.0);
    ++n;
  }
  EXPECT_GT(n, 0);
}
