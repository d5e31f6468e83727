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


// Independent Q-learners with Boltzmann action selection, stateless or
// conditioned on the previous joint action.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcoop/errors.hpp"
#include "mmcoop/game_analysis.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop {

/// alpha_t = c / (c + t) (harmonic) or a fixed alpha in [0, 1].
class LearningRateSchedule {
 public:
  enum class Kind { kHarmonic, kConstant };

  static LearningRateSchedule harmonic(double c) {
    if (!(c > 0.0)) throw ConfigError("harmonic learning-rate constant must be positive");
    return LearningRateSchedule(Kind::kHarmonic, c);
  }
  static LearningRateSchedule constant(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("learning rate must lie in [0, 1]");
    return LearningRateSchedule(Kind::kConstant, alpha);
  }

  double rate(long t) const {
    return kind_ == Kind::kHarmonic ? value_ / (value_ + static_cast<double>(t)) : value_;
  }
  Kind kind() const { return kind_; }
  double value() const { return value_; }

 private:
  LearningRateSchedule(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_;
  double value_;
};

/// Previous joint action encoded as a base-A number with agent 0 most
/// significant; state 0 ("every agent played action 1") doubles as the
/// initial no-history state.
class MemoryEncoder {
 public:
  MemoryEncoder(int n_agents, int n_actions) : n_agents_(n_agents), n_actions_(n_actions) {
    n_states_ = static_cast<int>(PayoffTensor::joint_count(n_agents, n_actions, 1u << 30));
  }

  int n_states() const { return n_states_; }
  static constexpr int initial_state() { return 0; }

  int encode(std::span<const int> actions) const {
    if (static_cast<int>(actions.size()) != n_agents_) throw std::domain_error("wrong agent count");
    int s = 0;
    for (int a : actions) {
      if (a < 0 || a >= n_actions_) throw std::domain_error("action index out of range");
      s = s * n_actions_ + a;
    }
    return s;
  }

  std::vector<int> decode(int state) const {
    if (state < 0 || state >= n_states_) throw std::domain_error("memory state out of range");
    std::vector<int> out(static_cast<std::size_t>(n_agents_));
    for (int i = n_agents_ - 1; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = state % n_actions_;
      state /= n_actions_;
    }
    return out;
  }

 private:
  int n_agents_;
  int n_actions_;
  int n_states_ = 1;
};

struct LearnerParams {
  double temperature = 0.1;
  double discount = 0.0;
  LearningRateSchedule schedule = LearningRateSchedule::harmonic(1e4);
};

/// One agent's Q-table over (memory state, action). Stateless agents have a
/// single state.
class QLearner {
 public:
  QLearner(int n_states, int n_actions, LearnerParams params,
           std::span<const double> initial_q = {})
      : n_states_(n_states), n_actions_(n_actions), params_(params) {
    if (n_states < 1 || n_actions < 1) throw ConfigError("empty Q-table");
    if (!(params_.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(params_.discount >= 0.0 && params_.discount < 1.0)) {
      throw ConfigError("discount must lie in [0, 1)");
    }
    if (!initial_q.empty() && static_cast<int>(initial_q.size()) != n_actions) {
      throw ConfigError("initial Q-values need one entry per action");
    }
    q_.assign(static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_actions), 0.0);
    if (!initial_q.empty()) {
      for (int s = 0; s < n_states; ++s) {
        std::copy(initial_q.begin(), initial_q.end(), q_.begin() + offset(s));
      }
    }
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  long step() const { return t_; }
  const LearnerParams& params() const { return params_; }

  std::span<const double> row(int state) const {
    check_state(state);
    return {q_.data() + offset(state), static_cast<std::size_t>(n_actions_)};
  }
  double q(int state, int action) const { return row(state)[static_cast<std::size_t>(action)]; }
  const std::vector<double>& table() const { return q_; }

  Policy policy(int state) const { return boltzmann_policy(row(state), params_.temperature); }

  /// Samples a Boltzmann action for `state`.
  int select_action(int state, Rng& rng) const {
    const auto r = row(state);
    const double top = *std::max_element(r.begin(), r.end());
    // Unnormalized weights; avoids a second pass to divide.
    double total = 0.0;
    weights_.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      weights_[i] = std::exp((r[i] - top) / params_.temperature);
      total += weights_[i];
    }
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i + 1 < weights_.size(); ++i) {
      if (u < weights_[i]) return static_cast<int>(i);
      u -= weights_[i];
    }
    return n_actions_ - 1;
  }

  void update_stateless(int action, double reward) { update_with_memory(0, action, reward, 0); }

  /// q(s, w) <- (1 - a_t) q(s, w) + a_t (r + discount * max_w' q(s', w')).
  void update_with_memory(int state, int action, double reward, int next_state) {
    check_state(state);
    check_state(next_state);
    if (action < 0 || action >= n_actions_) throw std::domain_error("action index out of range");
    const auto next = row(next_state);
    const double target = reward + params_.discount * *std::max_element(next.begin(), next.end());
    const double alpha = params_.schedule.rate(t_);
    double& cell = q_[offset(state) + static_cast<std::size_t>(action)];
    cell = (1.0 - alpha) * cell + alpha * target;
    ++t_;
  }

  // Argmax of one state's row; ties go to the lowest index.
  int greedy_action(int state) const {
    const auto r = row(state);
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }

  std::vector<int> greedy_policy() const {
    std::vector<int> out(static_cast<std::size_t>(n_states_));
    for (int s = 0; s < n_states_; ++s) out[static_cast<std::size_t>(s)] = greedy_action(s);
    return out;
  }

 private:
  std::size_t offset(int state) const {
    return static_cast<std::size_t>(state) * static_cast<std::size_t>(n_actions_);
  }
  void check_state(int state) const {
    if (state < 0 || state >= n_states_) throw std::domain_error("memory state out of range");
  }

  int n_states_;
  int n_actions_;
  LearnerParams params_;
  std::vector<double> q_;
  long t_ = 0;
  mutable std::vector<double> weights_;
};

}  // namespace mmcoop
