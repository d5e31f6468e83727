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
#include "mmcoop/market_model.hpp"
#include "oracles.hpp"

namespace mmcoop {
namespace {

oracle::Market FourSpreadMarket(double xi) {
  return {{3.0 / 30, 7.0 / 30, 11.0 / 30, 15.0 / 30}, {0.0, 1.0 / 30, 2.0 / 30, 3.0 / 30}, 0.1, 2, xi, true};
}

PayoffTensor Build(const oracle::Market& m) {
  const SpreadGrid grid(m.spreads);
  const ArrivalModel model(m.weights, m.sigma, m.n_agents);
  return m.both_sides ? build_payoff_tensor(grid, model, InventoryPenalty{m.xi})
                      : build_side_tensor(grid, model, InventoryPenalty{m.xi});
}

TEST(SpreadGridTest, RejectsBadLevels) {
  EXPECT_THROW(SpreadGrid({}), ConfigError);
  EXPECT_THROW(SpreadGrid({0.2, 0.1}), ConfigError);
  EXPECT_THROW(SpreadGrid({-0.1, 0.1}), ConfigError);
  EXPECT_THROW(SpreadGrid({0.1, 0.1}), ConfigError);
  EXPECT_NO_THROW(SpreadGrid({0.5}));
  EXPECT_THROW(SpreadGrid({0.1, 0.2}).at(2), std::domain_error);
}

TEST(ArrivalTest, KnownValues) {
  const ArrivalModel certain = ArrivalModel::certain(2, 2);
  const int low[2] = {0, 0};
  EXPECT_DOUBLE_EQ(arrival_probability(certain, low), 1.0);

  std::vector<double> w;
  for (int k = 0; k < 10; ++k) w.push_back(k / 90.0);
  const ArrivalModel ten(w, 0.1, 2);
  const int top[2] = {9, 9};
  EXPECT_NEAR(arrival_probability(ten, top), std::exp(-1.0), 1e-15);
  const int mixed[2] = {0, 9};
  EXPECT_NEAR(arrival_probability(ten, mixed), std::exp(-0.5), 1e-15);
}

TEST(ArrivalTest, RejectsWrongProfileSize) {
  const ArrivalModel m = ArrivalModel::certain(2, 3);
  const int two[2] = {0, 1};
  EXPECT_THROW(arrival_probability(m, two), std::domain_error);
  const int bad[3] = {0, 1, 2};
  EXPECT_THROW(arrival_probability(m, bad), std::domain_error);
}

TEST(SideRewardTest, TiesSplitAndLosersGetNothing) {
  const SpreadGrid grid({0.1, 0.8});
  const ArrivalModel m = ArrivalModel::certain(2, 2);
  const int tie[2] = {1, 1};
  EXPECT_DOUBLE_EQ(expected_side_reward(grid, m, tie, 0), 0.4);
  const int undercut[2] = {0, 1};
  EXPECT_DOUBLE_EQ(expected_side_reward(grid, m, undercut, 0), 0.1);
  EXPECT_DOUBLE_EQ(expected_side_reward(grid, m, undercut, 1), 0.0);
}

TEST(SideRewardTest, SingleAgentSingleSpread) {
  const SpreadGrid grid({0.3});
  const ArrivalModel m({0.2}, 0.5, 1);
  const int only[1] = {0};
  EXPECT_NEAR(expected_side_reward(grid, m, only, 0), 0.3 * std::exp(-0.4), 1e-15);
}

TEST(InventoryTest, ClosedFormMatchesEnumeration) {
  const auto m = FourSpreadMarket(1.0);
  const SpreadGrid grid(m.spreads);
  const ArrivalModel model(m.weights, m.sigma, m.n_agents);
  std::mt19937 gen(3);
  std::uniform_int_distribution<int> pick(0, 15);
  for (int k = 0; k < 200; ++k) {
    const std::vector<int> profile = {pick(gen), pick(gen)};
    const auto joint = JointAction::from_combined(profile, 4);
    for (int i = 0; i < 2; ++i) {
      // Reward with xi = 1 minus reward with xi = 0 is -E[(dy)^2].
      auto m0 = m;
      m0.xi = 0.0;
      const double expected_sq = oracle::expected_reward(m0, profile, i) - oracle::expected_reward(m, profile, i);
      EXPECT_NEAR(expected_inventory_penalty(grid, model, joint, i, InventoryPenalty{1.0}), expected_sq, 1e-14);
    }
  }
}

TEST(InventoryTest, ClosedFormMatchesMonteCarlo) {
  // One agent quoting the same spread on both sides: dy is +1, -1 or 0.
  const oracle::Market m{{0.1}, {0.5}, 1.0, 1, 1.0, true};
  const SpreadGrid grid(m.spreads);
  const ArrivalModel model(m.weights, m.sigma, 1);
  const auto joint = JointAction::from_combined(std::vector<int>{0}, 1);
  const double exact = expected_inventory_penalty(grid, model, joint, 0, InventoryPenalty{1.0});
  const double p = std::exp(-0.5);
  EXPECT_NEAR(exact, 2 * p * (1 - p), 1e-15);

  std::mt19937_64 gen(11);
  std::bernoulli_distribution arrive(p);
  const long n = 10'000'000;
  double sum = 0.0;
  for (long k = 0; k < n; ++k) {
    const double dy = static_cast<double>(arrive(gen)) - static_cast<double>(arrive(gen));
    sum += dy * dy;
  }
  const double mean = sum / n;
  const double se = std::sqrt(exact * (1 - exact) / n);
  EXPECT_NEAR(mean, exact, 4 * se);
}

TEST(PayoffTensorTest, FourSpreadGameMatchesOracle) {
  const auto m = FourSpreadMarket(0.1);
  const PayoffTensor t = Build(m);
  ASSERT_EQ(t.n_actions(), 16);
  ASSERT_EQ(t.n_agents(), 2);
  EXPECT_FALSE(t.side_separable());
  oracle::for_each_profile(2, 16, [&](const std::vector<int>& p) {
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(t.payoff(i, p), oracle::expected_reward(m, p, i), 1e-15);
  });
}

TEST(PayoffTensorTest, ThreeAgentOneSideMatchesOracle) {
  const oracle::Market m{{0.1, 0.4, 0.7}, {0.0, 0.3, 0.6}, 0.4, 3, 0.2, false};
  const PayoffTensor t = Build(m);
  oracle::for_each_profile(3, 3, [&](const std::vector<int>& p) {
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(t.payoff(i, p), oracle::expected_reward(m, p, i), 1e-15);
  });
}

TEST(PayoffTensorTest, TenSpreadEqualSplitAtLowestSpread) {
  std::vector<double> s, w;
  for (int k = 1; k <= 10; ++k) {
    s.push_back(k / 10.0);
    w.push_back((k - 1) / 90.0);
  }
  const auto t = build_side_tensor(SpreadGrid(s), ArrivalModel(w, 0.1, 2));
  const int low[2] = {0, 0};
  EXPECT_DOUBLE_EQ(t.payoff(0, low), 0.05);
}

TEST(PayoffTensorTest, CombinedSidesEqualFullGameWithoutPenalty) {
  const auto m = FourSpreadMarket(0.0);
  const SpreadGrid grid(m.spreads);
  const ArrivalModel model(m.weights, m.sigma, 2);
  const auto full = build_payoff_tensor(grid, model, InventoryPenalty{});
  const auto side = build_side_tensor(grid, model);
  const auto combined = combine_sides(side, side, 0.25);
  EXPECT_TRUE(full.side_separable());
  for (std::size_t j = 0; j < full.n_joint(); ++j) {
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(combined(i, j), full(i, j) + 0.25, 1e-15);
  }
}

TEST(PayoffTensorTest, TwoPlayerMatrixIsSymmetric) {
  const auto t = PayoffTensor::from_two_player_matrix({{0.05, 0.1}, {0.0, 0.4}});
  const int p[2] = {0, 1};
  EXPECT_DOUBLE_EQ(t.payoff(0, p), 0.1);
  EXPECT_DOUBLE_EQ(t.payoff(1, p), 0.0);
  EXPECT_THROW(PayoffTensor::from_two_player_matrix({{0.1, 0.2}}), ConfigError);
}

TEST(PayoffTensorTest, JointIndexRoundTrip) {
  const auto t = Build(FourSpreadMarket(0.0));
  for (std::size_t j = 0; j < t.n_joint(); ++j) EXPECT_EQ(t.joint_index(t.decode(j)), j);
}

TEST(PayoffTensorTest, CellBudgetIsEnforced) {
  const SpreadGrid grid({0.1, 0.2, 0.3});
  const ArrivalModel model = ArrivalModel::certain(3, 4);
  EXPECT_THROW(build_payoff_tensor(grid, model, InventoryPenalty{}, 1000), BudgetError);
  EXPECT_NO_THROW(build_payoff_tensor(grid, model, InventoryPenalty{}, 4 * 9 * 9 * 9 * 9));
}

TEST(PayoffTensorTest, NegativePenaltyRejected) {
  EXPECT_THROW(validate(InventoryPenalty{-0.1}), ConfigError);
}

TEST(QuoteTest, RowMajorEncoding) {
  // Action 9 (one-based) is ask level 3, bid level 1.
  const Quote q = split_combined(8, 4);
  EXPECT_EQ(q.ask, 2);
  EXPECT_EQ(q.bid, 0);
  EXPECT_EQ(combined_index(q, 4), 8);
}

}  // namespace
}  // namespace mmcoop
