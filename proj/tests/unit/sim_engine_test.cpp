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


#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "mmcoop/sim_engine.hpp"
#include "oracles.hpp"

namespace mmcoop {
namespace {

oracle::Market FourSpreadMarket() {
  return {{3.0 / 30, 7.0 / 30, 11.0 / 30, 15.0 / 30}, {0.0, 1.0 / 30, 2.0 / 30, 3.0 / 30}, 0.1, 2, 0.1, true};
}

GameConfig Game(const oracle::Market& m) {
  return GameConfig{SpreadGrid(m.spreads), ArrivalModel(m.weights, m.sigma, m.n_agents),
                    InventoryPenalty{m.xi}, m.both_sides ? Sides::kBoth : Sides::kAskOnly};
}

TrainingConfig SmallRun(bool memory) {
  TrainingConfig cfg{Game(FourSpreadMarket()), LearnerParams{0.1, memory ? 0.5 : 0.0, LearningRateSchedule::harmonic(1e3)},
                     {}, memory, SkewRule{}, StopRule{0, 20'000}, 5'000, 500};
  return cfg;
}

TEST(SettleTest, TieSplitsAndInventories) {
  const auto game = Game(FourSpreadMarket());
  std::vector<double> inv = {0.0, 0.0};
  // Agent 1 quotes (ask 1, bid 2), agent 2 quotes (ask 1, bid 1).
  const std::vector<int> actions = {combined_index({0, 1}, 4), combined_index({0, 0}, 4)};
  const auto ms = settle(game, actions, true, true, inv);
  EXPECT_DOUBLE_EQ(ms.ask_fill[0], 0.5);
  EXPECT_DOUBLE_EQ(ms.ask_fill[1], 0.5);
  EXPECT_DOUBLE_EQ(ms.bid_fill[0], 0.0);
  EXPECT_DOUBLE_EQ(ms.bid_fill[1], 1.0);
  EXPECT_DOUBLE_EQ(inv[0], -0.5);
  EXPECT_DOUBLE_EQ(inv[1], 0.5);
  EXPECT_NEAR(ms.rewards[0], 0.1 * 0.5 - 0.1 * 0.25, 1e-15);
  EXPECT_NEAR(ms.rewards[1], 0.1 * 0.5 + 0.1 - 0.1 * 0.25, 1e-15);
  EXPECT_EQ(ms.orders(), 2);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(ms.rewards[static_cast<std::size_t>(i)],
                oracle::realized_reward(FourSpreadMarket(), actions, i, true, true), 1e-15);
  }
}

TEST(SettleTest, AskOnlyGameIgnoresBidSide) {
  auto m = FourSpreadMarket();
  m.both_sides = false;
  m.xi = 0.0;
  const auto game = Game(m);
  std::vector<double> inv = {0.0, 0.0};
  const std::vector<int> actions = {2, 3};
  const auto ms = settle(game, actions, true, true, inv);
  EXPECT_EQ(ms.orders(), 1);
  EXPECT_DOUBLE_EQ(ms.rewards[0], 11.0 / 30);
  EXPECT_DOUBLE_EQ(inv[0], -1.0);
}

TEST(MonteCarloTest, FrozenPolicyMeansMatchTensor) {
  const auto m = FourSpreadMarket();
  const auto game = Game(m);
  const auto tensor = game.tensor();
  std::mt19937 pick(31);
  std::uniform_int_distribution<int> action(0, 15);
  const long n = 20'000;
  for (int k = 0; k < 10; ++k) {
    const std::vector<int> profile = {action(pick), action(pick)};
    StepStreams streams(77, static_cast<std::uint64_t>(k), 2);
    std::vector<double> inv = {0.0, 0.0};
    double sum = 0.0, sum_sq = 0.0;
    for (long t = 0; t < n; ++t) {
      const double r = play_fixed(game, profile, inv, streams).rewards[0];
      sum += r;
      sum_sq += r * r;
    }
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / n);
    EXPECT_LE(std::abs(mean - tensor.payoff(0, profile)), 4 * se + 1e-12) << "profile " << k;
  }
}

TEST(RunTest, DeterministicAcrossThreadCounts) {
  const auto cfg = SmallRun(true);
  const auto a = run_batch(cfg, 4, 42, 1);
  const auto b = run_batch(cfg, 4, 42, 3);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(a.records[k].agents[i].table(), b.records[k].agents[i].table());
    }
    EXPECT_EQ(a.records[k].inventories, b.records[k].inventories);
    EXPECT_EQ(a.records[k].last_window.orders, b.records[k].last_window.orders);
  }
  const auto c = run_batch(cfg, 4, 43, 1);
  EXPECT_NE(a.records[0].agents[0].table(), c.records[0].agents[0].table());
}

TEST(RunTest, InventoryTelescopes) {
  const auto cfg = SmallRun(false);
  const auto& game = cfg.game;
  std::vector<QLearner> agents(2, QLearner(1, 16, cfg.learner));
  StepStreams streams(5, 0, 2);
  std::vector<double> inv = {0.0, 0.0};
  std::vector<double> total = {0.0, 0.0};
  for (long t = 0; t < 10'000; ++t) {
    const auto ms = step(game, cfg.skew, agents, 0, inv, streams, t);
    for (std::size_t i = 0; i < 2; ++i) total[i] += ms.bid_fill[i] - ms.ask_fill[i];
    for (std::size_t i = 0; i < 2; ++i) agents[i].update_stateless(ms.actions[i], ms.rewards[i]);
  }
  EXPECT_NEAR(inv[0], total[0], 1e-9);
  EXPECT_NEAR(inv[1], total[1], 1e-9);
}

TEST(RunTest, SkewRuleBoundsInventory) {
  auto m = FourSpreadMarket();
  m.spreads = {0.1, 0.8};
  m.weights = {0.0, 0.0};
  m.xi = 0.0;
  TrainingConfig cfg{Game(m), LearnerParams{0.1, 0.0, LearningRateSchedule::harmonic(1e4)}, {}, false,
                     SkewRule{}, StopRule{0, 200'000}, 1'000, 100};
  cfg.skew.upper = 5.0;
  cfg.skew.lower = -5.0;
  double free_peak = 0.0;
  for (const auto& s : run_instance(cfg, 3).snapshots) {
    for (double y : s.inventories) free_peak = std::max(free_peak, std::abs(y));
  }
  cfg.skew.enabled = true;
  const auto skewed = run_instance(cfg, 3);
  double peak = 0.0;
  for (const auto& s : skewed.snapshots) {
    for (double y : s.inventories) peak = std::max(peak, std::abs(y));
  }
  EXPECT_LE(peak, 7.0);
  EXPECT_GT(free_peak, peak);
}

TEST(RunTest, OverrideWithoutUpdateSkipsLearning) {
  auto m = FourSpreadMarket();
  m.xi = 0.0;
  TrainingConfig cfg{Game(m), LearnerParams{0.1, 0.0, LearningRateSchedule::harmonic(1e4)}, {}, false,
                     SkewRule{}, StopRule{0, 5'000}, 1'000, 10};
  cfg.skew.enabled = true;
  cfg.skew.upper = 0.25;
  cfg.skew.lower = -0.25;
  const auto learning = run_instance(cfg, 1);
  for (const auto& agent : learning.agents) EXPECT_EQ(agent.step(), 5'000);
  cfg.skew.update_on_override = false;
  const auto frozen = run_instance(cfg, 1);
  for (const auto& agent : frozen.agents) {
    EXPECT_LT(agent.step(), 5'000);
    EXPECT_GT(agent.step(), 0);
  }
}

TEST(RunTest, GreedyStabilityStop) {
  auto cfg = SmallRun(false);
  cfg.learner.schedule = LearningRateSchedule::constant(0.0);
  cfg.stop = StopRule{2'000, 50'000};
  const auto rec = run_instance(cfg, 9);
  EXPECT_EQ(rec.termination, Termination::kGreedyStable);
  EXPECT_EQ(rec.periods, 2'000);
}

TEST(RunTest, SnapshotsAndWindow) {
  const auto cfg = SmallRun(true);
  const auto rec = run_instance(cfg, 2);
  EXPECT_EQ(rec.periods, 20'000);
  ASSERT_EQ(rec.snapshots.size(), 4u);
  EXPECT_EQ(rec.snapshots.back().period, 20'000);
  EXPECT_EQ(rec.last_window.orders.size(), 500u);
  long counted = 0;
  for (long c : rec.last_window.action_counts) counted += c;
  EXPECT_EQ(counted, 1000);
  EXPECT_EQ(rec.greedy[0].size(), 256u);
  EXPECT_EQ(rec.greedy[0], rec.agents[0].greedy_policy());
}

TEST(RunTest, RejectsOversizedMemory) {
  oracle::Market m{{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}, std::vector<double>(8, 0.0), 1.0, 4, 0.0, true};
  TrainingConfig cfg{Game(m), LearnerParams{}, {}, true, SkewRule{}, StopRule{}, 1000, 10};
  EXPECT_THROW(validate(cfg), std::exception);
}

TEST(SummaryTest, ConfidenceInterval) {
  const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const auto ci = mean_ci(xs);
  EXPECT_DOUBLE_EQ(ci.mean, 2.5);
  EXPECT_NEAR(ci.half_width, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-12);
}

}  // namespace
}  // namespace mmcoop
