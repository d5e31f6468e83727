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

// Dealer-market game: spread grids, order arrivals, expected side rewards,
// inventory penalties and dense payoff tensors.
//
// Indices are zero-based throughout the C++ API. Reports and CSV files use
// one-based spread and action indices.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmcoop/errors.hpp"

namespace mmcoop {

inline constexpr std::size_t kDefaultCellBudget = 10'000'000;

/// The M spread levels K(1) < ... < K(M) shared by the ask and bid sides.
class SpreadGrid {
 public:
  explicit SpreadGrid(std::vector<double> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw ConfigError("spread grid must not be empty");
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (!(levels_[i] > 0.0) || !std::isfinite(levels_[i])) {
        throw ConfigError("spread levels must be positive and finite");
      }
      if (i > 0 && !(levels_[i] > levels_[i - 1])) {
        throw ConfigError("spread levels must be strictly ascending");
      }
    }
  }

  int size() const { return static_cast<int>(levels_.size()); }
  double operator[](int i) const { return levels_[static_cast<std::size_t>(i)]; }
  double at(int i) const {
    if (i < 0 || i >= size()) throw std::domain_error("spread index out of range");
    return levels_[static_cast<std::size_t>(i)];
  }
  const std::vector<double>& levels() const { return levels_; }

 private:
  std::vector<double> levels_;
};

/// Arrival probability exp(-sum_i w_i v_i / (sigma N)) of a one-unit market
/// order on one side, where v_i counts the agents quoting spread i.
class ArrivalModel {
 public:
  ArrivalModel(std::vector<double> weights, double sigma, int n_agents)
      : weights_(std::move(weights)), sigma_(sigma), n_agents_(n_agents) {
    if (weights_.empty()) throw ConfigError("arrival weights must not be empty");
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
        throw ConfigError("arrival weights must be non-negative and finite");
      }
      if (i > 0 && weights_[i] < weights_[i - 1]) {
        throw ConfigError("arrival weights must be non-decreasing");
      }
    }
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) {
      throw ConfigError("volatility must be positive");
    }
    if (n_agents_ < 1) throw ConfigError("need at least one agent");
  }

  // Orders always arrive.
  static ArrivalModel certain(int n_levels, int n_agents) {
    return ArrivalModel(std::vector<double>(static_cast<std::size_t>(n_levels), 0.0),
                        1.0, n_agents);
  }

  int n_levels() const { return static_cast<int>(weights_.size()); }
  int n_agents() const { return n_agents_; }
  double sigma() const { return sigma_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  double sigma_;
  int n_agents_;
};

struct InventoryPenalty {
  double xi = 0.0;
};

inline void validate(const InventoryPenalty& penalty) {
  if (!(penalty.xi >= 0.0) || !std::isfinite(penalty.xi)) {
    throw ConfigError("inventory penalty must be non-negative");
  }
}

inline void check_consistent(const SpreadGrid& grid, const ArrivalModel& model) {
  if (grid.size() != model.n_levels()) {
    throw ConfigError("spread grid has " + std::to_string(grid.size()) +
                      " levels but arrival model has " +
                      std::to_string(model.n_levels()) + " weights");
  }
}

/// Best quote, number of agents tied at it and arrival probability for one
/// side of a joint action.
struct SideOutcome {
  int best = 0;
  int n_winners = 0;
  double probability = 1.0;

  // Fraction of the order routed to an agent quoting `action`.
  double share(int action) const {
    return action == best ? 1.0 / static_cast<double>(n_winners) : 0.0;
  }
};

inline SideOutcome evaluate_side(const ArrivalModel& model,
                                 std::span<const int> side_actions) {
  if (static_cast<int>(side_actions.size()) != model.n_agents()) {
    throw std::domain_error("side profile has " + std::to_string(side_actions.size()) +
                            " entries for " + std::to_string(model.n_agents()) +
                            " agents");
  }
  SideOutcome out;
  out.best = std::numeric_limits<int>::max();
  double exponent = 0.0;
  for (int a : side_actions) {
    if (a < 0 || a >= model.n_levels()) {
      throw std::domain_error("spread index out of range");
    }
    exponent += model.weights()[static_cast<std::size_t>(a)];
    if (a < out.best) {
      out.best = a;
      out.n_winners = 1;
    } else if (a == out.best) {
      ++out.n_winners;
    }
  }
  out.probability = std::exp(-exponent / (model.sigma() * model.n_agents()));
  return out;
}

inline double arrival_probability(const ArrivalModel& model,
                                  std::span<const int> side_actions) {
  return evaluate_side(model, side_actions).probability;
}

inline double expected_side_reward(const SpreadGrid& grid, const ArrivalModel& model,
                                   std::span<const int> side_actions, int agent) {
  check_consistent(grid, model);
  if (agent < 0 || agent >= static_cast<int>(side_actions.size())) {
    throw std::domain_error("agent index out of range");
  }
  const SideOutcome side = evaluate_side(model, side_actions);
  const int a = side_actions[static_cast<std::size_t>(agent)];
  return grid[a] * side.share(a) * side.probability;
}

/// One agent's (ask, bid) spread indices; the combined action is row-major,
/// ask * M + bid.
struct Quote {
  int ask = 0;
  int bid = 0;
  friend bool operator==(const Quote&, const Quote&) = default;
};

inline int combined_index(Quote q, int n_levels) { return q.ask * n_levels + q.bid; }

inline Quote split_combined(int action, int n_levels) {
  return Quote{action / n_levels, action % n_levels};
}

class JointAction {
 public:
  explicit JointAction(std::vector<Quote> quotes) : quotes_(std::move(quotes)) {}

  static JointAction from_combined(std::span<const int> actions, int n_levels) {
    std::vector<Quote> quotes;
    quotes.reserve(actions.size());
    for (int c : actions) quotes.push_back(split_combined(c, n_levels));
    return JointAction(std::move(quotes));
  }

  int n_agents() const { return static_cast<int>(quotes_.size()); }
  const Quote& operator[](int i) const { return quotes_[static_cast<std::size_t>(i)]; }
  const std::vector<Quote>& quotes() const { return quotes_; }

  std::vector<int> asks() const {
    std::vector<int> out;
    out.reserve(quotes_.size());
    for (const auto& q : quotes_) out.push_back(q.ask);
    return out;
  }
  std::vector<int> bids() const {
    std::vector<int> out;
    out.reserve(quotes_.size());
    for (const auto& q : quotes_) out.push_back(q.bid);
    return out;
  }

 private:
  std::vector<Quote> quotes_;
};

// E[(dy)^2] for an agent with ask share s_a and bid share s_b, with the ask and
// bid orders arriving independently: s_a^2 P_a + s_b^2 P_b - 2 s_a s_b P_a P_b.
inline double expected_squared_inventory_change(double ask_share, double ask_prob,
                                                double bid_share, double bid_prob) {
  return ask_share * ask_share * ask_prob + bid_share * bid_share * bid_prob -
         2.0 * ask_share * bid_share * ask_prob * bid_prob;
}

inline double expected_inventory_penalty(const SpreadGrid& grid, const ArrivalModel& model,
                                         const JointAction& joint, int agent,
                                         const InventoryPenalty& penalty) {
  check_consistent(grid, model);
  validate(penalty);
  if (agent < 0 || agent >= joint.n_agents()) {
    throw std::domain_error("agent index out of range");
  }
  const auto asks = joint.asks();
  const auto bids = joint.bids();
  const SideOutcome ask = evaluate_side(model, asks);
  const SideOutcome bid = evaluate_side(model, bids);
  if (penalty.xi == 0.0) return 0.0;
  const Quote& q = joint[agent];
  return penalty.xi * expected_squared_inventory_change(ask.share(q.ask), ask.probability,
                                                        bid.share(q.bid), bid.probability);
}

/// Expected one-period reward E[r_i | C] of every agent under every joint
/// action, for a symmetric game where each agent has the same action set.
/// Joint actions are indexed with agent 0 as the most significant digit.
class PayoffTensor {
 public:
  PayoffTensor(int n_agents, int n_actions, std::vector<double> values,
               bool side_separable)
      : n_agents_(n_agents),
        n_actions_(n_actions),
        n_joint_(joint_count(n_agents, n_actions)),
        values_(std::move(values)),
        side_separable_(side_separable) {
    if (values_.size() != n_joint_ * static_cast<std::size_t>(n_agents_)) {
      throw ConfigError("payoff tensor size mismatch");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw ConfigError("payoff tensor has non-finite entries");
    }
  }

  // Two-agent game from agent 1's matrix z[own][rival]; agent 2 gets the
  // transpose.
  static PayoffTensor from_two_player_matrix(const std::vector<std::vector<double>>& z,
                                             bool side_separable = true) {
    const std::size_t m = z.size();
    if (m == 0) throw ConfigError("payoff matrix must not be empty");
    for (const auto& row : z) {
      if (row.size() != m) throw ConfigError("payoff matrix must be square");
    }
    std::vector<double> values(2 * m * m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        values[i * m + j] = z[i][j];
        values[m * m + i * m + j] = z[j][i];
      }
    }
    return PayoffTensor(2, static_cast<int>(m), std::move(values), side_separable);
  }

  static std::size_t joint_count(int n_agents, int n_actions,
                                 std::size_t limit = std::numeric_limits<std::size_t>::max()) {
    if (n_agents < 1 || n_actions < 1) throw ConfigError("empty game");
    std::size_t n = 1;
    for (int i = 0; i < n_agents; ++i) {
      if (n > limit / static_cast<std::size_t>(n_actions)) {
        throw BudgetError("joint action space too large");
      }
      n *= static_cast<std::size_t>(n_actions);
    }
    return n;
  }

  int n_agents() const { return n_agents_; }
  int n_actions() const { return n_actions_; }
  std::size_t n_joint() const { return n_joint_; }
  bool side_separable() const { return side_separable_; }

  double operator()(int agent, std::size_t joint) const {
    return values_[static_cast<std::size_t>(agent) * n_joint_ + joint];
  }
  std::span<const double> agent_values(int agent) const {
    return {values_.data() + static_cast<std::size_t>(agent) * n_joint_, n_joint_};
  }

  std::size_t joint_index(std::span<const int> actions) const {
    if (static_cast<int>(actions.size()) != n_agents_) {
      throw std::domain_error("joint action has wrong number of agents");
    }
    std::size_t idx = 0;
    for (int a : actions) {
      if (a < 0 || a >= n_actions_) throw std::domain_error("action index out of range");
      idx = idx * static_cast<std::size_t>(n_actions_) + static_cast<std::size_t>(a);
    }
    return idx;
  }

  void decode(std::size_t joint, std::span<int> out) const {
    for (int i = n_agents_ - 1; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = static_cast<int>(joint % static_cast<std::size_t>(n_actions_));
      joint /= static_cast<std::size_t>(n_actions_);
    }
  }
  std::vector<int> decode(std::size_t joint) const {
    std::vector<int> out(static_cast<std::size_t>(n_agents_));
    decode(joint, out);
    return out;
  }

  double payoff(int agent, std::span<const int> actions) const {
    if (agent < 0 || agent >= n_agents_) throw std::domain_error("agent index out of range");
    return (*this)(agent, joint_index(actions));
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  PayoffTensor shifted(double constant) const {
    std::vector<double> v = values_;
    for (double& x : v) x += constant;
    return PayoffTensor(n_agents_, n_actions_, std::move(v), side_separable_);
  }

  // Columns: agent, action_1..action_N, expected_reward (one-based indices).
  void write_csv(std::ostream& os) const {
    os << "agent";
    for (int i = 0; i < n_agents_; ++i) os << ",action_" << (i + 1);
    os << ",expected_reward\n";
    std::vector<int> actions(static_cast<std::size_t>(n_agents_));
    const auto old_precision = os.precision(17);
    for (int agent = 0; agent < n_agents_; ++agent) {
      for (std::size_t j = 0; j < n_joint_; ++j) {
        decode(j, actions);
        os << (agent + 1);
        for (int a : actions) os << ',' << (a + 1);
        os << ',' << (*this)(agent, j) << '\n';
      }
    }
    os.precision(old_precision);
  }

 private:
  int n_agents_;
  int n_actions_;
  std::size_t n_joint_;
  std::vector<double> values_;
  bool side_separable_;
};

namespace detail {

inline void check_budget(int n_agents, int n_actions, std::size_t budget) {
  const std::size_t joint = PayoffTensor::joint_count(n_agents, n_actions);
  if (joint > budget / static_cast<std::size_t>(n_agents)) {
    throw BudgetError("payoff tensor with " + std::to_string(n_agents) + " agents and " +
                      std::to_string(n_actions) + " actions each exceeds the cell budget of " +
                      std::to_string(budget));
  }
}

// Advances a base-`radix` odometer; returns false after the last combination.
inline bool next_profile(std::vector<int>& digits, int radix) {
  for (std::size_t i = digits.size(); i-- > 0;) {
    if (++digits[i] < radix) return true;
    digits[i] = 0;
  }
  return false;
}

}  // namespace detail

/// Full two-sided game over combined (ask, bid) actions.
inline PayoffTensor build_payoff_tensor(const SpreadGrid& grid, const ArrivalModel& model,
                                        const InventoryPenalty& penalty,
                                        std::size_t cell_budget = kDefaultCellBudget) {
  check_consistent(grid, model);
  validate(penalty);
  const int m = grid.size();
  const int n = model.n_agents();
  const int actions = m * m;
  detail::check_budget(n, actions, cell_budget);
  const std::size_t n_joint = PayoffTensor::joint_count(n, actions);
  std::vector<double> values(n_joint * static_cast<std::size_t>(n));

  std::vector<int> profile(static_cast<std::size_t>(n), 0);
  std::vector<int> asks(profile.size()), bids(profile.size());
  std::size_t j = 0;
  do {
    for (std::size_t i = 0; i < profile.size(); ++i) {
      asks[i] = profile[i] / m;
      bids[i] = profile[i] % m;
    }
    const SideOutcome ask = evaluate_side(model, asks);
    const SideOutcome bid = evaluate_side(model, bids);
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double s_a = ask.share(asks[ui]);
      const double s_b = bid.share(bids[ui]);
      double r = grid[asks[ui]] * s_a * ask.probability + grid[bids[ui]] * s_b * bid.probability;
      if (penalty.xi != 0.0) {
        r -= penalty.xi *
             expected_squared_inventory_change(s_a, ask.probability, s_b, bid.probability);
      }
      values[ui * n_joint + j] = r;
    }
    ++j;
  } while (detail::next_profile(profile, actions));
  return PayoffTensor(n, actions, std::move(values), penalty.xi == 0.0);
}

/// One-side game: each agent picks only an ask spread. A non-zero penalty
/// charges xi * s^2 * P for the one-sided inventory change.
inline PayoffTensor build_side_tensor(const SpreadGrid& grid, const ArrivalModel& model,
                                      const InventoryPenalty& penalty = {},
                                      std::size_t cell_budget = kDefaultCellBudget) {
  check_consistent(grid, model);
  validate(penalty);
  const int m = grid.size();
  const int n = model.n_agents();
  detail::check_budget(n, m, cell_budget);
  const std::size_t n_joint = PayoffTensor::joint_count(n, m);
  std::vector<double> values(n_joint * static_cast<std::size_t>(n));

  std::vector<int> profile(static_cast<std::size_t>(n), 0);
  std::size_t j = 0;
  do {
    const SideOutcome side = evaluate_side(model, profile);
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const double s = side.share(profile[ui]);
      values[ui * n_joint + j] =
          grid[profile[ui]] * s * side.probability - penalty.xi * s * s * side.probability;
    }
    ++j;
  } while (detail::next_profile(profile, m));
  return PayoffTensor(n, m, std::move(values), true);
}

/// Separable two-sided game E[r|C] = ask(A) + bid(B) + constant built from two
/// one-side games with the same agent count.
inline PayoffTensor combine_sides(const PayoffTensor& ask, const PayoffTensor& bid,
                                  double constant = 0.0,
                                  std::size_t cell_budget = kDefaultCellBudget) {
  if (ask.n_agents() != bid.n_agents() || ask.n_actions() != bid.n_actions()) {
    throw ConfigError("side games must have matching shapes");
  }
  const int m = ask.n_actions();
  const int n = ask.n_agents();
  detail::check_budget(n, m * m, cell_budget);
  const std::size_t n_joint = PayoffTensor::joint_count(n, m * m);
  std::vector<double> values(n_joint * static_cast<std::size_t>(n));
  std::vector<int> profile(static_cast<std::size_t>(n), 0);
  std::vector<int> asks(profile.size()), bids(profile.size());
  std::size_t j = 0;
  do {
    for (std::size_t i = 0; i < profile.size(); ++i) {
      asks[i] = profile[i] / m;
      bids[i] = profile[i] % m;
    }
    const std::size_t ja = ask.joint_index(asks);
    const std::size_t jb = bid.joint_index(bids);
    for (int i = 0; i < n; ++i) {
      values[static_cast<std::size_t>(i) * n_joint + j] = ask(i, ja) + bid(i, jb) + constant;
    }
    ++j;
  } while (detail::next_profile(profile, m * m));
  return PayoffTensor(n, m * m, std::move(values), true);
}

}  // namespace mmcoop
