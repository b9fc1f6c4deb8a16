// Copyright 2026 The calikit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "support/temp_dir.hpp"

namespace calikit {
namespace {

using nlohmann::json;
using testing::read_bytes;
using testing::TempDir;
using testing::write_text;

int cli(const std::string& args) {
  const std::string cmd = std::string(CALIKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines(const std::filesystem::path& p) {
  std::istringstream in(read_bytes(p));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

json load(const std::filesystem::path& p) { return json::parse(read_bytes(p)); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(cli("gen --blocks 120,30 --p-in 0.06 --p-out 0.006 --dim 8 --shift 2 --seed 3"
                  " --out " + data()),
              0);
  }

  std::string data() const { return (dir_ / "data").string(); }
  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  TempDir dir_;
};

TEST_F(Cli, GenWritesDatasetAndIsDeterministic) {
  for (const char* f : {"edges.txt", "features.csv", "labels.txt", "split.csv", "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir_ / "data" / f)) << f;
  }
  ASSERT_EQ(cli("gen --blocks 120,30 --p-in 0.06 --p-out 0.006 --dim 8 --shift 2 --seed 3"
                " --out " + at("again")),
            0);
  for (const char* f : {"edges.txt", "features.csv", "labels.txt", "split.csv"}) {
    EXPECT_EQ(read_bytes(dir_ / "data" / f), read_bytes(dir_ / "again" / f)) << f;
  }
  EXPECT_EQ(lines(dir_ / "data" / "labels.txt").size(), 150u);
  const auto m = load(dir_ / "data" / "manifest.json");
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["config"]["seed"], 3);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli("gen --blocks 0,10 --out " + at("bad")), 2);
  EXPECT_EQ(cli("train --data " + data() + " --method calirare --lambda 1.5 --out " + at("t")), 2);
  EXPECT_EQ(cli("train --data " + data() + " --method nonsense --out " + at("t")), 2);
  EXPECT_EQ(cli("train --out " + at("t")), 2);
  EXPECT_EQ(cli("sweep --data " + data() + " --lambdas '' --out " + at("s")), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
}

TEST_F(Cli, IoErrors) {
  EXPECT_EQ(cli("train --data " + at("missing") + " --out " + at("t")), 3);
  write_text(dir_ / "broken.json", "{ not json");
  EXPECT_EQ(cli("train --data " + data() + " --config " + at("broken.json") + " --out " + at("t")),
            3);
  ASSERT_EQ(cli("train --data " + data() + " --max-epochs 3 --out " + at("t")), 0);
  ASSERT_EQ(cli("gen --blocks 120,30 --dim 5 --seed 3 --out " + at("narrow")), 0);
  EXPECT_EQ(cli("evaluate --data " + at("narrow") + " --model " + at("t/model.bin") + " --split " +
                data() + "/split.csv --out " + at("e")),
            3);
}

TEST_F(Cli, TrainWritesCheckpointAndLog) {
  ASSERT_EQ(cli("train --data " + data() + " --method baseline --lr-c 10 --seed 1 --out " +
                at("base")),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "base" / "model.bin"));
  const auto log = lines(dir_ / "base" / "train_log.csv");
  ASSERT_GE(log.size(), 2u);
  EXPECT_EQ(log.front(), "epoch,loss_total,loss_ce,loss_eice,val_macro_ace,val_macro_f1");
  std::istringstream last(log.back());
  std::string field;
  std::getline(last, field, ',');
  for (int k = 0; k < 3; ++k) {
    std::getline(last, field, ',');
    EXPECT_TRUE(std::isfinite(std::stod(field))) << field;
  }
  const auto m = load(dir_ / "base" / "manifest.json");
  EXPECT_EQ(m["config"]["lr_c"], 10);
  EXPECT_EQ(m["split"]["train"], 20);
}

TEST_F(Cli, ZeroLambdaMatchesBaseline) {
  ASSERT_EQ(cli("train --data " + data() + " --method baseline --seed 4 --out " + at("a")), 0);
  ASSERT_EQ(cli("train --data " + data() + " --method calirare --lambda 0 --seed 4 --out " +
                at("b")),
            0);
  EXPECT_EQ(read_bytes(dir_ / "a" / "model.bin"), read_bytes(dir_ / "b" / "model.bin"));
}

TEST_F(Cli, ConfigPrecedence) {
  write_text(dir_ / "cfg.json", R"({"max_epochs": 5, "patience": 1000})");
  ASSERT_EQ(cli("train --data " + data() + " --config " + at("cfg.json") + " --out " + at("c")),
            0);
  EXPECT_EQ(lines(dir_ / "c" / "train_log.csv").size(), 6u);
  ASSERT_EQ(cli("train --data " + data() + " --config " + at("cfg.json") +
                " --max-epochs 7 --out " + at("f")),
            0);
  EXPECT_EQ(lines(dir_ / "f" / "train_log.csv").size(), 8u);
  EXPECT_EQ(load(dir_ / "f" / "manifest.json")["config"]["max_epochs"], 7);
  write_text(dir_ / "typo.json", R"({"max_epoch": 5})");
  EXPECT_EQ(cli("train --data " + data() + " --config " + at("typo.json") + " --out " + at("g")),
            2);
}

TEST_F(Cli, EvaluateReportSchemaAndDeterminism) {
  ASSERT_EQ(cli("train --data " + data() + " --method calirare --seed 2 --out " + at("m")), 0);
  ASSERT_EQ(cli("evaluate --data " + data() + " --model " + at("m/model.bin") + " --out " +
                at("e1")),
            0);
  const auto r = load(dir_ / "e1" / "report.json");
  for (const char* key :
       {"ece", "ace_minority", "macro_ace", "eice", "accuracy", "recall", "macro_f1"}) {
    ASSERT_TRUE(r.contains(key)) << key;
    EXPECT_GE(r[key].get<double>(), 0.0);
    EXPECT_LE(r[key].get<double>(), 1.0);
  }
  EXPECT_EQ(r["reliability"].size(), 20u);
  const auto csv = lines(dir_ / "e1" / "reliability.csv");
  ASSERT_EQ(csv.size(), 21u);
  EXPECT_EQ(csv.front(), "bin_lo,bin_hi,count,accuracy,confidence");

  ASSERT_EQ(cli("evaluate --data " + data() + " --model " + at("m/model.bin") + " --out " +
                at("e2")),
            0);
  EXPECT_EQ(read_bytes(dir_ / "e1" / "report.json"), read_bytes(dir_ / "e2" / "report.json"));
}

TEST_F(Cli, SingleBinEceIsAccuracyGap) {
  ASSERT_EQ(cli("train --data " + data() + " --seed 2 --out " + at("m")), 0);
  ASSERT_EQ(cli("evaluate --data " + data() + " --model " + at("m/model.bin") +
                " --bins 1 --out " + at("e")),
            0);
  const auto r = load(dir_ / "e" / "report.json");
  double total = 0.0, conf = 0.0;
  for (const auto& b : r["reliability"]) {
    total += b["count"].get<double>();
    conf += b["count"].get<double>() * b["confidence"].get<double>();
  }
  EXPECT_NEAR(r["ece"].get<double>(), std::abs(r["accuracy"].get<double>() - conf / total), 1e-12);
}

TEST_F(Cli, SeparableDataScoresPerfectly) {
  ASSERT_EQ(cli("gen --blocks 90,30 --p-in 0.1 --p-out 0 --dim 8 --shift 12 --seed 5 --out " +
                at("sep")),
            0);
  ASSERT_EQ(cli("train --data " + at("sep") + " --seed 5 --out " + at("m")), 0);
  ASSERT_EQ(cli("evaluate --data " + at("sep") + " --model " + at("m/model.bin") + " --out " +
                at("e")),
            0);
  const auto r = load(dir_ / "e" / "report.json");
  EXPECT_EQ(r["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(r["recall"].get<double>(), 1.0);
}

TEST_F(Cli, CalibrateAndUncertainty) {
  ASSERT_EQ(cli("train --data " + data() + " --seed 2 --out " + at("m")), 0);
  ASSERT_EQ(cli("calibrate --data " + data() + " --model " + at("m/model.bin") + " --out " +
                at("c")),
            0);
  const auto t = load(dir_ / "c" / "temperature.json");
  EXPECT_GT(t["temperature"].get<double>(), 0.0);

  const std::string base = "uncertainty --data " + data() + " --model " + at("m/model.bin") +
                           " --temperature-file " + at("c/temperature.json");
  ASSERT_EQ(cli(base + " --workers 1 --out " + at("u1")), 0);
  ASSERT_EQ(cli(base + " --workers 4 --out " + at("u4")), 0);
  for (const char* f : {"loo.csv", "loo.bin", "uncertainty.csv", "uncertainty.json"}) {
    EXPECT_EQ(read_bytes(dir_ / "u1" / f), read_bytes(dir_ / "u4" / f)) << f;
  }
  const auto rows = lines(dir_ / "u1" / "uncertainty.csv");
  EXPECT_EQ(rows.front(), "node_id,lower,upper,uncertainty,confidence");

  // A second run reuses the cache and reproduces the same table.
  const auto before = read_bytes(dir_ / "u1" / "uncertainty.csv");
  ASSERT_EQ(cli(base + " --workers 1 --out " + at("u1")), 0);
  EXPECT_EQ(read_bytes(dir_ / "u1" / "uncertainty.csv"), before);
}

TEST_F(Cli, SweepFillsGridAndResumes) {
  const std::string args = "sweep --data " + data() + " --max-epochs 15 --seed 1 --out " + at("s");
  ASSERT_EQ(cli(args), 0);
  const auto full = lines(dir_ / "s" / "sweep.csv");
  ASSERT_EQ(full.size(), 21u);
  EXPECT_EQ(full.front(), "alpha,lambda,macro_ace,macro_f1");

  // Simulate a run killed part way through a row.
  std::string partial;
  for (std::size_t k = 0; k < 8; ++k) partial += full[k] + "\n";
  partial += "0.8,0.1,0.0";
  write_text(dir_ / "s" / "sweep.csv", partial);
  ASSERT_EQ(cli(args), 0);
  const auto resumed = lines(dir_ / "s" / "sweep.csv");
  EXPECT_EQ(resumed, full);
  std::set<std::string> cells;
  for (std::size_t k = 1; k < resumed.size(); ++k) {
    cells.insert(resumed[k].substr(0, resumed[k].find(',', resumed[k].find(',') + 1)));
  }
  EXPECT_EQ(cells.size(), 20u);
}

}  // namespace
}  // namespace calikit
