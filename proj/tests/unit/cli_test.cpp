// Copyright 2026 The mmcoop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Runs the mmcoop binary end to end. MMCOOP_CLI is set by the build.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;

int RunCli(const std::string& args) {
  const std::string cmd = std::string(MMCOOP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path Scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mmcoop_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(CliTest, PayoffFigure3) {
  const auto out = Scratch("f3");
  ASSERT_EQ(RunCli("payoff --preset figure3 --out " + out.string()), 0);
  std::ifstream in(out / "matrix.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(row.substr(0, row.find(',', 2)), "1,0.050000000000000003");
  EXPECT_TRUE(fs::exists(out / "tensor.csv"));
}

TEST(CliTest, PayoffFigure8NashSet) {
  const auto out = Scratch("f8");
  ASSERT_EQ(RunCli("payoff --preset figure8 --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(Slurp(out / "summary.json"));
  EXPECT_EQ(j["nash"], nlohmann::json::parse("[[1,1],[2,2],[5,5],[6,6]]"));
}

TEST(CliTest, SingleCellPayoff) {
  const auto out = Scratch("one");
  const fs::path cfg = out.string() + ".json";
  std::ofstream(cfg) << R"({"name": "one", "game": {"spreads": [0.2], "weights": [0.1],
      "sigma": 0.5, "n_agents": 1, "sides": "ask"}})";
  ASSERT_EQ(RunCli("payoff --config " + cfg.string() + " --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(Slurp(out / "summary.json"));
  EXPECT_NEAR(j["best_joint_payoff"].get<double>(), 0.2 * std::exp(-0.2), 1e-15);
}

TEST(CliTest, AnalyzeWritesOutputs) {
  const auto out = Scratch("t5");
  ASSERT_EQ(RunCli("analyze --preset table5 --xi 0,0.1,0.2 --out " + out.string()), 0);
  for (const char* sub : {"table5-sh", "table5-pd"}) {
    EXPECT_TRUE(fs::exists(out / sub / "analysis.csv"));
    EXPECT_TRUE(fs::exists(out / sub / "summary.json"));
  }
  const auto crossings = Scratch("t1");
  ASSERT_EQ(RunCli("analyze --preset table1 --out " + crossings.string()), 0);
  EXPECT_TRUE(fs::exists(crossings / "crossings.csv"));
}

TEST(CliTest, ManyAgentLimitAboveUnitExponent) {
  const auto out = Scratch("th2");
  ASSERT_EQ(RunCli("analyze --preset theorem2 --u 2 --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(Slurp(out / "summary.json"));
  EXPECT_EQ(j["limit_profile"]["x"][0].get<double>(), 1.0);
  EXPECT_EQ(j["limit_profile"]["x"][1].get<double>(), 0.0);
}

TEST(CliTest, TrainSmallRun) {
  const auto out = Scratch("train");
  const auto cfg_path = out.string() + ".json";
  const std::string dump = std::string(MMCOOP_CLI) + " train --preset table3-row1 --dump-config > " + cfg_path;
  ASSERT_EQ(std::system(dump.c_str()), 0);
  auto j = nlohmann::json::parse(Slurp(cfg_path));
  j["training"]["max_steps"] = 20000;
  j["training"]["greedy_window"] = 0;
  j["training"]["snapshot_interval"] = 5000;
  std::ofstream(cfg_path) << j.dump();
  ASSERT_EQ(RunCli("train --config " + cfg_path + " --instances 2 --jobs 2 --seed 5 --out " + out.string()), 0);
  for (const char* f : {"snapshots.csv", "q_snapshots.csv", "qtable.csv", "policies.csv",
                        "last_window.csv", "action_frequency.csv", "batch.csv", "summary.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto s = nlohmann::json::parse(Slurp(out / "summary.json"));
  EXPECT_EQ(s["seed"], 5);
  EXPECT_EQ(s["instances"], 2);
  EXPECT_EQ(s["runs"][0]["termination"], "step-budget");
  EXPECT_FALSE(fs::exists(out / "summary.json.tmp"));
}

TEST(CliTest, ExitCodes) {
  const auto out = Scratch("bad");
  EXPECT_EQ(RunCli("analyze --preset nope --out " + out.string()), 3);
  const fs::path bad = out.string() + ".json";
  std::ofstream(bad) << R"({"name": "x", "game": {"spreads": [0.1, 0.2], "bogus": 1}})";
  EXPECT_EQ(RunCli("analyze --config " + bad.string()), 3);
  std::ofstream(bad) << "{ not json";
  EXPECT_EQ(RunCli("analyze --config " + bad.string()), 3);
  const fs::path matrix = out.string() + "_matrix.json";
  std::ofstream(matrix) << R"({"name": "m", "game": {"n_agents": 2, "sides": "ask",
      "payoff_matrix": [[0.05, 0.1], [0.0, 0.4]]}})";
  EXPECT_EQ(RunCli("train --config " + matrix.string() + " --out " + out.string()), 3);
  const fs::path hard = out.string() + "_hard.json";
  std::ofstream(hard) << R"({"name": "h", "temperature": 0.001, "game": {"n_agents": 2, "sides": "ask",
      "payoff_matrix": [[0.0, 1.0], [0.9, 0.0]]}, "analysis": {"method": "direct"}})";
  EXPECT_EQ(RunCli("analyze --config " + hard.string() + " --out " + out.string()), 2);
}

}  // namespace
