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


// Repeated market-making game: order arrivals, fill routing, inventories,
// realized rewards, the inventory skew override and training runs.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mmcoop/errors.hpp"
#include "mmcoop/game_analysis.hpp"
#include "mmcoop/market_model.hpp"
#include "mmcoop/qlearning.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop {

enum class Sides { kAskOnly, kBoth };

/// The stage game: spreads, arrivals, penalty and whether agents quote one
/// side or both.
struct GameConfig {
  SpreadGrid grid;
  ArrivalModel model;
  InventoryPenalty penalty{};
  Sides sides = Sides::kBoth;

  int n_levels() const { return grid.size(); }
  int n_agents() const { return model.n_agents(); }
  int n_actions() const { return sides == Sides::kBoth ? n_levels() * n_levels() : n_levels(); }

  Quote quote(int action) const {
    return sides == Sides::kBoth ? split_combined(action, n_levels()) : Quote{action, 0};
  }

  PayoffTensor tensor(std::size_t cell_budget = kDefaultCellBudget) const {
    return sides == Sides::kBoth ? build_payoff_tensor(grid, model, penalty, cell_budget)
                                 : build_side_tensor(grid, model, penalty, cell_budget);
  }
};

inline void validate(const GameConfig& game) {
  check_consistent(game.grid, game.model);
  validate(game.penalty);
}

/// Hard inventory control: above `upper` the agent quotes `long_skew` (low
/// ask, high bid), below `lower` it quotes `short_skew`.
struct SkewRule {
  bool enabled = false;
  double upper = 100.0;
  double lower = -100.0;
  std::optional<Quote> long_skew;   // default: lowest ask, highest bid
  std::optional<Quote> short_skew;  // default: highest ask, lowest bid
  bool update_on_override = true;   // learner still updates the played action

  Quote long_quote(int n_levels) const { return long_skew.value_or(Quote{0, n_levels - 1}); }
  Quote short_quote(int n_levels) const { return short_skew.value_or(Quote{n_levels - 1, 0}); }
};

inline void validate(const SkewRule& skew, const GameConfig& game) {
  if (!skew.enabled) return;
  if (game.sides != Sides::kBoth) throw ConfigError("skew rule needs two-sided quoting");
  if (!(skew.lower < 0.0 && 0.0 < skew.upper)) {
    throw ConfigError("skew thresholds must satisfy lower < 0 < upper");
  }
  for (const Quote q : {skew.long_quote(game.n_levels()), skew.short_quote(game.n_levels())}) {
    if (q.ask < 0 || q.ask >= game.n_levels() || q.bid < 0 || q.bid >= game.n_levels()) {
      throw ConfigError("skew quote out of range");
    }
  }
}

/// One period of the market.
struct MarketStep {
  long period = 0;
  std::vector<int> actions;  // action actually played by each agent
  std::vector<bool> overridden;
  bool ask_arrived = false;
  bool bid_arrived = false;
  std::vector<double> ask_fill;
  std::vector<double> bid_fill;
  std::vector<double> rewards;
  std::vector<double> inventories;  // after the period

  int orders() const { return static_cast<int>(ask_arrived) + static_cast<int>(bid_arrived); }
};

/// Random streams of one instance: one per agent plus one per side.
struct StepStreams {
  std::vector<Rng> agents;
  Rng ask;
  Rng bid;

  StepStreams(std::uint64_t seed, std::uint64_t instance, int n_agents)
      : ask(make_stream(seed, instance, 1'000'000)), bid(make_stream(seed, instance, 1'000'001)) {
    agents.reserve(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) {
      agents.push_back(make_stream(seed, instance, static_cast<std::uint64_t>(i)));
    }
  }
};

/// Routes given arrivals to the best quotes and updates inventories.
inline MarketStep settle(const GameConfig& game, std::span<const int> actions, bool ask_arrived,
                         bool bid_arrived, std::span<double> inventories) {
  const int n = game.n_agents();
  MarketStep out;
  out.actions.assign(actions.begin(), actions.end());
  out.overridden.assign(static_cast<std::size_t>(n), false);
  out.ask_fill.assign(static_cast<std::size_t>(n), 0.0);
  out.bid_fill.assign(static_cast<std::size_t>(n), 0.0);
  out.rewards.assign(static_cast<std::size_t>(n), 0.0);

  std::vector<int> asks(static_cast<std::size_t>(n)), bids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Quote q = game.quote(actions[static_cast<std::size_t>(i)]);
    asks[static_cast<std::size_t>(i)] = q.ask;
    bids[static_cast<std::size_t>(i)] = q.bid;
  }
  const SideOutcome ask = evaluate_side(game.model, asks);
  out.ask_arrived = ask_arrived;
  std::optional<SideOutcome> bid;
  if (game.sides == Sides::kBoth) {
    bid = evaluate_side(game.model, bids);
    out.bid_arrived = bid_arrived;
  }
  for (std::size_t i = 0; i < asks.size(); ++i) {
    if (out.ask_arrived) out.ask_fill[i] = ask.share(asks[i]);
    if (out.bid_arrived) out.bid_fill[i] = bid->share(bids[i]);
    const double dy = out.bid_fill[i] - out.ask_fill[i];
    out.rewards[i] = game.grid[asks[i]] * out.ask_fill[i] + game.grid[bids[i]] * out.bid_fill[i] -
                     game.penalty.xi * dy * dy;
    inventories[i] += dy;
  }
  out.inventories.assign(inventories.begin(), inventories.end());
  return out;
}

/// Samples both arrivals for a fixed joint action and settles the period.
inline MarketStep play_fixed(const GameConfig& game, std::span<const int> actions,
                             std::span<double> inventories, StepStreams& streams) {
  std::vector<int> asks(actions.size()), bids(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Quote q = game.quote(actions[i]);
    asks[i] = q.ask;
    bids[i] = q.bid;
  }
  // Draw both sides every period so the streams stay aligned.
  const bool ask_arrived = uniform01(streams.ask) < arrival_probability(game.model, asks);
  const bool bid_arrived = uniform01(streams.bid) < arrival_probability(game.model, bids);
  return settle(game, actions, ask_arrived, game.sides == Sides::kBoth && bid_arrived,
                inventories);
}

/// One period: Boltzmann selection (or skew override), arrivals, fills,
/// rewards and inventory update.
inline MarketStep step(const GameConfig& game, const SkewRule& skew,
                       std::span<const QLearner> agents, int state,
                       std::span<double> inventories, StepStreams& streams, long period = 0) {
  const int n = game.n_agents();
  std::vector<int> actions(static_cast<std::size_t>(n));
  std::vector<bool> overridden(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    // Always draw, so an override does not shift the agent's stream.
    actions[ui] = agents[ui].select_action(state, streams.agents[ui]);
    if (skew.enabled) {
      if (inventories[ui] > skew.upper) {
        actions[ui] = combined_index(skew.long_quote(game.n_levels()), game.n_levels());
        overridden[ui] = true;
      } else if (inventories[ui] < skew.lower) {
        actions[ui] = combined_index(skew.short_quote(game.n_levels()), game.n_levels());
        overridden[ui] = true;
      }
    }
  }
  MarketStep out = play_fixed(game, actions, inventories, streams);
  out.overridden = std::move(overridden);
  out.period = period;
  return out;
}

// ---------------------------------------------------------------------------
// Training runs

struct StopRule {
  long greedy_window = 1'000'000;  // 0 disables the stability stop
  long max_steps = 2'000'000;
};

struct TrainingConfig {
  GameConfig game;
  LearnerParams learner{};
  std::vector<double> initial_q;  // per action; zeros when empty
  bool memory = false;
  SkewRule skew{};
  StopRule stop{};
  long snapshot_interval = 10'000;
  long last_window = 1'000;
};

inline constexpr std::size_t kMaxQCells = std::size_t{1} << 24;

inline void validate(const TrainingConfig& cfg) {
  validate(cfg.game);
  validate(cfg.skew, cfg.game);
  const int a = cfg.game.n_actions();
  if (!cfg.initial_q.empty() && static_cast<int>(cfg.initial_q.size()) != a) {
    throw ConfigError("initial Q-values need " + std::to_string(a) + " entries");
  }
  if (!(cfg.learner.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(cfg.learner.discount >= 0.0 && cfg.learner.discount < 1.0)) {
    throw ConfigError("discount must lie in [0, 1)");
  }
  if (cfg.stop.max_steps < 1) throw ConfigError("step budget must be positive");
  if (cfg.stop.greedy_window < 0) throw ConfigError("greedy window must be non-negative");
  if (cfg.snapshot_interval < 1) throw ConfigError("snapshot interval must be positive");
  if (cfg.last_window < 1) throw ConfigError("last window must be positive");
  if (cfg.memory) {
    const std::size_t states = PayoffTensor::joint_count(cfg.game.n_agents(), a, kMaxQCells);
    if (states * static_cast<std::size_t>(a) > kMaxQCells) {
      throw ConfigError("memory Q-table too large");
    }
  }
}

struct Snapshot {
  long period = 0;
  std::vector<std::vector<double>> q;  // per agent, per action (mean over states)
  std::vector<double> inventories;
  std::vector<double> mean_rewards;  // per agent, over the interval
  double mean_orders = 0.0;          // over the interval
};

/// Per-period samples of the final periods of a run.
struct WindowMetrics {
  std::vector<double> orders;       // orders executed per period
  std::vector<double> rewards;      // mean reward per agent per period
  std::vector<long> action_counts;  // pooled over agents

  static double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  double mean_orders() const { return mean(orders); }
  double mean_reward() const { return mean(rewards); }
  std::vector<double> action_frequency() const {
    const double total = static_cast<double>(std::accumulate(action_counts.begin(), action_counts.end(), 0L));
    std::vector<double> f(action_counts.size(), 0.0);
    if (total > 0) {
      for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(action_counts[i]) / total;
    }
    return f;
  }
};

enum class Termination { kGreedyStable, kStepBudget };

inline const char* to_string(Termination t) {
  return t == Termination::kGreedyStable ? "greedy-stable" : "step-budget";
}

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int instance = 0;
  long periods = 0;
  Termination termination = Termination::kStepBudget;
  std::vector<Snapshot> snapshots;
  std::vector<QLearner> agents;               // terminal learners
  std::vector<std::vector<int>> greedy;       // per agent, per state
  std::vector<double> inventories;            // terminal
  WindowMetrics last_window;
  double wall_seconds = 0.0;
};

namespace detail {

inline std::vector<double> state_mean_q(const QLearner& agent) {
  std::vector<double> out(static_cast<std::size_t>(agent.n_actions()), 0.0);
  for (int s = 0; s < agent.n_states(); ++s) {
    const auto r = agent.row(s);
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += r[a];
  }
  for (double& x : out) x /= agent.n_states();
  return out;
}

}  // namespace detail

/// Trains one instance until the greedy policies have not changed for the
/// stability window or the step budget is spent.
inline RunRecord run_instance(const TrainingConfig& cfg, std::uint64_t seed, int instance = 0) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  const GameConfig& game = cfg.game;
  const int n = game.n_agents();
  const int a = game.n_actions();
  const MemoryEncoder encoder(n, a);
  const int n_states = cfg.memory ? encoder.n_states() : 1;

  RunRecord rec;
  rec.seed = seed;
  rec.instance = instance;
  rec.agents.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) rec.agents.emplace_back(n_states, a, cfg.learner, cfg.initial_q);
  rec.greedy.reserve(static_cast<std::size_t>(n));
  for (const auto& agent : rec.agents) rec.greedy.push_back(agent.greedy_policy());
  rec.inventories.assign(static_cast<std::size_t>(n), 0.0);

  StepStreams streams(seed, static_cast<std::uint64_t>(instance), n);
  const long window = std::min(cfg.last_window, cfg.stop.max_steps);
  std::vector<double> ring_orders(static_cast<std::size_t>(window));
  std::vector<double> ring_rewards(static_cast<std::size_t>(window));
  std::vector<std::vector<int>> ring_actions(static_cast<std::size_t>(window));

  std::vector<double> interval_rewards(static_cast<std::size_t>(n), 0.0);
  double interval_orders = 0.0;
  long interval_len = 0;
  auto take_snapshot = [&](long period) {
    Snapshot s;
    s.period = period;
    for (const auto& agent : rec.agents) s.q.push_back(detail::state_mean_q(agent));
    s.inventories = rec.inventories;
    s.mean_rewards.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s.mean_rewards[static_cast<std::size_t>(i)] =
          interval_len ? interval_rewards[static_cast<std::size_t>(i)] / interval_len : 0.0;
    }
    s.mean_orders = interval_len ? interval_orders / interval_len : 0.0;
    rec.snapshots.push_back(std::move(s));
    std::fill(interval_rewards.begin(), interval_rewards.end(), 0.0);
    interval_orders = 0.0;
    interval_len = 0;
  };

  int state = MemoryEncoder::initial_state();
  long last_change = 0;
  long t = 0;
  rec.termination = Termination::kStepBudget;
  while (t < cfg.stop.max_steps) {
    const MarketStep ms = step(game, cfg.skew, rec.agents, state, rec.inventories, streams, t);
    const int next_state = cfg.memory ? encoder.encode(ms.actions) : 0;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (ms.overridden[ui] && !cfg.skew.update_on_override) continue;
      QLearner& agent = rec.agents[ui];
      agent.update_with_memory(state, ms.actions[ui], ms.rewards[ui], next_state);
      const int g = agent.greedy_action(state);
      int& cached = rec.greedy[ui][static_cast<std::size_t>(state)];
      if (g != cached) {
        cached = g;
        last_change = t + 1;
      }
    }

    double mean_reward = 0.0;
    for (int i = 0; i < n; ++i) {
      interval_rewards[static_cast<std::size_t>(i)] += ms.rewards[static_cast<std::size_t>(i)];
      mean_reward += ms.rewards[static_cast<std::size_t>(i)];
    }
    mean_reward /= n;
    interval_orders += ms.orders();
    ++interval_len;
    const auto slot = static_cast<std::size_t>(t % window);
    ring_orders[slot] = ms.orders();
    ring_rewards[slot] = mean_reward;
    ring_actions[slot] = ms.actions;

    state = next_state;
    ++t;
    if (t % cfg.snapshot_interval == 0) take_snapshot(t);
    if (cfg.stop.greedy_window > 0 && t - last_change >= cfg.stop.greedy_window) {
      rec.termination = Termination::kGreedyStable;
      break;
    }
  }
  if (rec.snapshots.empty() || rec.snapshots.back().period != t) take_snapshot(t);
  rec.periods = t;

  const long kept = std::min(window, t);
  rec.last_window.action_counts.assign(static_cast<std::size_t>(a), 0);
  for (long k = t - kept; k < t; ++k) {
    const auto slot = static_cast<std::size_t>(k % window);
    rec.last_window.orders.push_back(ring_orders[slot]);
    rec.last_window.rewards.push_back(ring_rewards[slot]);
    for (int act : ring_actions[slot]) ++rec.last_window.action_counts[static_cast<std::size_t>(act)];
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Batches

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * standard error across instances
};

inline MeanCi mean_ci(std::span<const double> xs) {
  MeanCi out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.half_width = 1.96 * std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

inline double pooled_sd(const std::vector<const std::vector<double>*>& groups) {
  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (const auto* g : groups) {
    for (double x : *g) {
      sum += x;
      sum_sq += x * x;
      ++n;
    }
  }
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, (sum_sq - static_cast<double>(n) * mean * mean) /
                                     static_cast<double>(n - 1)));
}

struct SnapshotSummary {
  long period = 0;
  int instances = 0;
  std::vector<MeanCi> q;                       // per action, averaged over agents
  std::vector<MeanCi> inventories;             // per agent
};

struct BatchSummary {
  std::vector<MeanCi> terminal_q;  // per action, agent and state averaged
  Policy long_run_policy;          // Boltzmann policy of the mean terminal q
  std::vector<SnapshotSummary> snapshots;
  double window_orders = 0.0;
  double window_orders_sd = 0.0;
  double window_reward = 0.0;
  double window_reward_sd = 0.0;
  std::vector<double> window_action_frequency;
  int greedy_stable = 0;
  int step_budget = 0;
};

struct BatchResult {
  std::vector<RunRecord> records;
  BatchSummary summary;
};

inline BatchSummary summarize(const TrainingConfig& cfg, const std::vector<RunRecord>& records) {
  BatchSummary s;
  const int a = cfg.game.n_actions();
  const int n = cfg.game.n_agents();

  std::vector<std::vector<double>> per_action(static_cast<std::size_t>(a));
  for (const auto& rec : records) {
    std::vector<double> q(static_cast<std::size_t>(a), 0.0);
    for (const auto& agent : rec.agents) {
      const auto m = detail::state_mean_q(agent);
      for (std::size_t k = 0; k < q.size(); ++k) q[k] += m[k] / n;
    }
    for (std::size_t k = 0; k < q.size(); ++k) per_action[k].push_back(q[k]);
    (rec.termination == Termination::kGreedyStable ? s.greedy_stable : s.step_budget) += 1;
  }
  QVector mean_q;
  for (const auto& v : per_action) {
    s.terminal_q.push_back(mean_ci(v));
    mean_q.push_back(s.terminal_q.back().mean);
  }
  s.long_run_policy = boltzmann_policy(mean_q, cfg.learner.temperature);

  std::size_t max_snaps = 0;
  for (const auto& rec : records) max_snaps = std::max(max_snaps, rec.snapshots.size());
  for (std::size_t k = 0; k < max_snaps; ++k) {
    SnapshotSummary ss;
    std::vector<std::vector<double>> q(static_cast<std::size_t>(a));
    std::vector<std::vector<double>> inv(static_cast<std::size_t>(n));
    for (const auto& rec : records) {
      if (k >= rec.snapshots.size()) continue;
      const Snapshot& snap = rec.snapshots[k];
      if (ss.instances == 0) ss.period = snap.period;
      if (snap.period != ss.period) continue;
      ++ss.instances;
      for (int act = 0; act < a; ++act) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += snap.q[static_cast<std::size_t>(i)][static_cast<std::size_t>(act)] / n;
        q[static_cast<std::size_t>(act)].push_back(m);
      }
      for (int i = 0; i < n; ++i) inv[static_cast<std::size_t>(i)].push_back(snap.inventories[static_cast<std::size_t>(i)]);
    }
    for (const auto& v : q) ss.q.push_back(mean_ci(v));
    for (const auto& v : inv) ss.inventories.push_back(mean_ci(v));
    s.snapshots.push_back(std::move(ss));
  }

  std::vector<const std::vector<double>*> orders, rewards;
  std::vector<double> order_means, reward_means;
  std::vector<long> counts(static_cast<std::size_t>(a), 0);
  for (const auto& rec : records) {
    orders.push_back(&rec.last_window.orders);
    rewards.push_back(&rec.last_window.rewards);
    order_means.push_back(rec.last_window.mean_orders());
    reward_means.push_back(rec.last_window.mean_reward());
    for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += rec.last_window.action_counts[k];
  }
  s.window_orders = mean_ci(order_means).mean;
  s.window_reward = mean_ci(reward_means).mean;
  s.window_orders_sd = pooled_sd(orders);
  s.window_reward_sd = pooled_sd(rewards);
  WindowMetrics pooled;
  pooled.action_counts = counts;
  s.window_action_frequency = pooled.action_frequency();
  return s;
}

/// Runs `n_instances` independently seeded instances on up to `jobs` threads.
/// Results are identical for any thread count.
inline BatchResult run_batch(const TrainingConfig& cfg, int n_instances, std::uint64_t base_seed,
                             int jobs = 1) {
  validate(cfg);
  if (n_instances < 1) throw ConfigError("need at least one instance");
  BatchResult out;
  out.records.resize(static_cast<std::size_t>(n_instances));
  const int workers = std::clamp(jobs, 1, n_instances);
  if (workers == 1) {
    for (int k = 0; k < n_instances; ++k) {
      out.records[static_cast<std::size_t>(k)] = run_instance(cfg, base_seed, k);
    }
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        for (int k = w; k < n_instances; k += workers) {
          out.records[static_cast<std::size_t>(k)] = run_instance(cfg, base_seed, k);
        }
      });
    }
    for (auto& th : threads) th.join();
  }
  out.summary = summarize(cfg, out.records);
  return out;
}

}  // namespace mmcoop
