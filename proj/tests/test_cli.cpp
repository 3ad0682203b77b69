#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "logitds/cli.hpp"

using namespace logitds;
namespace fs = std::filesystem;

namespace {

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("logitds_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(LOGITDS_CLI) + " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  static std::string slurp(const fs::path& p) { return cli::read_file(p); }

  // Trains a short blobs run into `sub` and returns the checkpoint path.
  std::string quick_train(const std::string& sub, int seed = 7) {
    EXPECT_EQ(run("train --preset blobs --epochs 5 --seed " + std::to_string(seed) + " --out-dir " + out(sub)), 0);
    return out(sub) + "/checkpoint.bin";
  }

  fs::path dir_;
};

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(CliRun, TrainWritesArtifactsDeterministically) {
  ASSERT_EQ(run("train --preset blobs --seed 7 --epochs 10 --out-dir " + out("a")), 0);
  ASSERT_EQ(run("train --preset blobs --seed 7 --epochs 10 --out-dir " + out("b")), 0);
  for (const char* f : {"checkpoint.bin", "train_report.json", "train_epochs.csv"}) {
    ASSERT_TRUE(fs::exists(out("a") + "/" + f)) << f;
    EXPECT_EQ(slurp(out("a") + "/" + f), slurp(out("b") + "/" + f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(out("a") + "/train_report.json"));
  EXPECT_EQ(report["config"]["seed"], 7);
  EXPECT_EQ(report["config"]["epochs"], 10);
  EXPECT_EQ(report["config"]["preset"], "blobs");
  const Checkpoint ck = load_checkpoint(out("a") + "/checkpoint.bin");
  EXPECT_EQ(nlohmann::json::parse(ck.metadata), report["config"]);
  EXPECT_EQ(slurp(out("a") + "/train_epochs.csv").rfind("# config: ", 0), 0u);
}

TEST_F(CliRun, FlagsOverrideConfigFile) {
  {
    std::ofstream cfg(out("run.cfg"));
    cfg << "seed=3\nepochs=4\nlr=0.01\n";
  }
  ASSERT_EQ(run("train --config " + out("run.cfg") + " --epochs 2 --out-dir " + out("r")), 0);
  const auto report = nlohmann::json::parse(slurp(out("r") + "/train_report.json"));
  EXPECT_EQ(report["config"]["epochs"], 2);
  EXPECT_EQ(report["config"]["seed"], 3);
  EXPECT_EQ(report["config"]["lr"], 0.01);
}

TEST_F(CliRun, MissingDatasetLeavesNoFiles) {
  EXPECT_EQ(run("train --preset mnist-mlp --data " + out("no_such_dir") + " --out-dir " + out("x")), 3);
  EXPECT_FALSE(fs::exists(out("x")));
  EXPECT_EQ(run("train --preset mnist-mlp --out-dir " + out("y")), 2);
  EXPECT_FALSE(fs::exists(out("y")));
}

TEST_F(CliRun, ExitCodesByFailureClass) {
  EXPECT_EQ(run("train --no-such-flag"), 2);
  EXPECT_EQ(run("train --preset nope --out-dir " + out("p")), 2);
  EXPECT_EQ(run("train --lr -1 --out-dir " + out("p")), 2);
  EXPECT_EQ(run("evaluate --checkpoint " + out("missing.bin")), 3);
  {
    std::ofstream junk(out("junk.bin"));
    junk << "not a checkpoint";
  }
  EXPECT_EQ(run("score --checkpoint " + out("junk.bin") + " --out-dir " + out("s")), 3);
  // Diverging training: the loss overflows long before 3 epochs at this learning rate.
  EXPECT_EQ(run("train --lr 1e300 --epochs 3 --out-dir " + out("d")), 4);
}

TEST_F(CliRun, ScoreWithTwoSamples) {
  const std::string ck = quick_train("t");
  ASSERT_EQ(run("score --checkpoint " + ck + " --samples 2 --seed 1 --out-dir " + out("s1")), 0);
  ASSERT_EQ(run("score --checkpoint " + ck + " --samples 2 --seed 1 --out-dir " + out("s2")), 0);
  const std::string a = slurp(out("s1") + "/scores.csv");
  EXPECT_EQ(a, slurp(out("s2") + "/scores.csv"));
  EXPECT_EQ(a.rfind("# config: ", 0), 0u);
  const auto rows = csv_rows(a);
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"input_index", "dataset_tag", "score_name", "value", "orientation"}));
  std::size_t ds_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 5u);
    if (rows[i][2] == "ds") {
      ++ds_rows;
      const double v = std::stod(rows[i][3]);
      EXPECT_GE(v, 1.0 - 1e-12);
      EXPECT_LE(v, 2.0 + 1e-12);
      EXPECT_EQ(rows[i][4], "lower_is_ood");
    }
  }
  EXPECT_EQ(ds_rows, 1500u);
}

TEST_F(CliRun, ZeroVarianceCheckpointScoresFullAgreement) {
  VariationalParams p = init_params(Architecture::mlp(2, {32, 32}, 3), 5);
  for (std::size_t i = 0; i < p.mu.size(); ++i) p.mu[i] += 0.3;  // keep max logits positive
  for (double& r : p.rho) r = -800.0;
  save_checkpoint(out("zero.bin"), {p, R"({"preset":"blobs"})"});
  ASSERT_EQ(run("score --checkpoint " + out("zero.bin") + " --samples 6 --scores ds --out-dir " + out("z")), 0);
  const auto rows = csv_rows(slurp(out("z") + "/scores.csv"));
  ASSERT_EQ(rows.size(), 1501u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(std::stod(rows[i][3]), 6.0, 1e-12);
}

TEST_F(CliRun, ScoreFromTensorDump) {
  save_posterior_logits(out("t.bin"), PosteriorLogits(4, 1, 2, {1, -10, 1, -10, 2, -10, 4, -10}));
  ASSERT_EQ(run("score --logits " + out("t.bin") + " --scores ds,std_ll --out-dir " + out("l")), 0);
  const auto rows = csv_rows(slurp(out("l") + "/scores.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(std::stod(rows[1][3]), 64.0 / 22.0, 1e-12);
  EXPECT_NEAR(std::stod(rows[2][3]), 0.66363790033296870615, 1e-12);
}

TEST_F(CliRun, ScoreShapeMismatchIsConfigError) {
  const std::string ck = quick_train("t");
  std::vector<std::uint8_t> px(4 * 9, 7);
  write_idx_images(out("imgs"), px, 4, 3, 3);
  EXPECT_EQ(run("score --checkpoint " + ck + " --data " + out("imgs") + " --out-dir " + out("m")), 2);
}

TEST_F(CliRun, EvaluateRowsFilterAndDeterminism) {
  const std::string ck = quick_train("t");
  const std::string base = "evaluate --checkpoint " + ck + " --samples 20 --n 300 --seed 2 --out-dir ";
  ASSERT_EQ(run(base + out("e1")), 0);
  ASSERT_EQ(run(base + out("e2")), 0);
  for (const char* f : {"report.json", "report.txt", "eval_scores.csv"}) {
    EXPECT_EQ(slurp(out("e1") + "/" + f), slurp(out("e2") + "/" + f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(out("e1") + "/report.json"));
  ASSERT_EQ(report["rows"].size(), 8u);
  EXPECT_EQ(report["config"]["seed"], 2);
  EXPECT_EQ(report["config"]["samples"], 20);
  EXPECT_EQ(report["rows"][0]["out_dataset"], "ring");

  ASSERT_EQ(run(base + out("e3") + " --scores ds,mi"), 0);
  const auto filtered = nlohmann::json::parse(slurp(out("e3") + "/report.json"));
  ASSERT_EQ(filtered["rows"].size(), 2u);
  EXPECT_EQ(filtered["rows"][0]["score"], "mi");
  EXPECT_EQ(filtered["rows"][1]["score"], "ds");
  EXPECT_EQ(run(base + out("e4") + " --scores ds,bogus"), 2);
}

TEST_F(CliRun, EvaluateAnnotatesUnloadableOodDataset) {
  const std::string ck = quick_train("t");
  ASSERT_EQ(run("evaluate --checkpoint " + ck + " --samples 5 --n 100 --ood ring --ood " + out("missing") +
                " --out-dir " + out("e")),
            0);
  const auto report = nlohmann::json::parse(slurp(out("e") + "/report.json"));
  EXPECT_EQ(report["rows"].size(), 8u);
  ASSERT_EQ(report["errors"].size(), 1u);
  EXPECT_EQ(report["errors"][0]["dataset"], out("missing"));
}

TEST_F(CliRun, MnistPresetsRunOnIdxDirectory) {
  // Two synthetic digit classes: bright left half vs bright right half.
  fs::create_directories(out("digits"));
  for (const char* split : {"train", "t10k"}) {
    const int n = 60;
    std::vector<std::uint8_t> px(static_cast<std::size_t>(n) * 784, 0), labels;
    for (int i = 0; i < n; ++i) {
      labels.push_back(static_cast<std::uint8_t>(i % 2));
      for (int r = 0; r < 28; ++r)
        for (int c = (i % 2) * 14; c < (i % 2) * 14 + 14; ++c)
          px[static_cast<std::size_t>(i) * 784 + static_cast<std::size_t>(r) * 28 + static_cast<std::size_t>(c)] = 200;
    }
    write_idx_images(out("digits") + "/" + split + "-images-idx3-ubyte", px, n, 28, 28);
    write_idx_labels(out("digits") + "/" + split + "-labels-idx1-ubyte", labels);
  }
  for (const char* p : {"mnist-mlp", "mnist-lenet"}) {
    const std::string dir = out(p);
    ASSERT_EQ(run(std::string("train --preset ") + p + " --data " + out("digits") + " --epochs 1 --batch 16 --out-dir " +
                  dir),
              0)
        << p;
    ASSERT_EQ(run("evaluate --checkpoint " + dir + "/checkpoint.bin --data " + out("digits") + " --ood " +
                  out("digits") + " --samples 3 --n 40 --scores ds,mi --out-dir " + dir),
              0)
        << p;
    const auto report = nlohmann::json::parse(slurp(dir + "/report.json"));
    EXPECT_EQ(report["rows"].size(), 2u);
    EXPECT_EQ(report["rows"][0]["in_dataset"], "digits");
  }
}
