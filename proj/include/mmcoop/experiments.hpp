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


// Analyze / train / payoff commands: run an ExperimentSpec and write its CSV
// and JSON outputs.
//
// Output files (all optional per command):
//   tensor.csv        agent, action_1..action_N, expected_reward
//   matrix.csv        two-agent games: agent 1's payoff, rows own action
//   analysis.csv      temperature, xi, branch, action, ask, bid, q_value, probability
//   crossings.csv     temperature, root, residual
//   snapshots.csv     instance, period, agent, inventory, mean_reward, mean_orders
//   q_snapshots.csv   instance, period, agent, state, action, q_value
//   qtable.csv        terminal tables, same columns as q_snapshots.csv
//   policies.csv      instance, agent, state, greedy_action
//   last_window.csv   instance, period_offset, orders, mean_reward
//   batch.csv         period, action, mean_q, ci_half_width
//   summary.json      equilibria, fixed points, roots and bounds, or the run manifest

#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mmcoop/config.hpp"
#include "mmcoop/errors.hpp"
#include "mmcoop/game_analysis.hpp"
#include "mmcoop/sim_engine.hpp"

namespace mmcoop {

// Writes via a temporary file and a rename so readers never see partial output.
inline void write_atomically(const std::filesystem::path& path,
                             const std::function<void(std::ostream&)>& body) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.precision(17);
    body(os);
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline Json one_based(const std::vector<std::vector<int>>& profiles) {
  Json out = Json::array();
  for (const auto& p : profiles) {
    Json row = Json::array();
    for (int a : p) row.push_back(a + 1);
    out.push_back(row);
  }
  return out;
}

inline std::array<std::array<double, 2>, 2> two_by_two(const PayoffTensor& side) {
  std::array<std::array<double, 2>, 2> z{};
  for (int k = 0; k < 2; ++k) {
    for (int l = 0; l < 2; ++l) {
      const int profile[2] = {k, l};
      z[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = side.payoff(0, profile);
    }
  }
  return z;
}

}  // namespace detail

struct FixedPointRow {
  double temperature = 0.0;
  double xi = 0.0;
  FixedPointResult result;
};

struct AnalysisReport {
  std::string name;
  EquilibriumReport equilibria;
  std::vector<FixedPointRow> fixed_points;
  std::vector<std::pair<double, std::vector<double>>> crossings;  // temperature -> roots
  std::vector<std::pair<double, double>> contraction;             // temperature -> bound
  std::vector<std::pair<double, double>> separability;            // temperature -> defect
  std::optional<LimitProfile> limit;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

inline Json to_json(const AnalysisReport& r, const ExperimentSpec& spec) {
  Json fps = Json::array();
  for (const auto& row : r.fixed_points) {
    fps.push_back({{"temperature", row.temperature},
                   {"xi", row.xi},
                   {"branch", to_string(row.result.branch)},
                   {"residual", row.result.residual},
                   {"iterations", row.result.iterations},
                   {"q", row.result.q},
                   {"probability", row.result.policy}});
  }
  Json crossings = Json::array();
  for (const auto& [t, roots] : r.crossings) crossings.push_back({{"temperature", t}, {"roots", roots}});
  Json contraction = Json::array();
  for (const auto& [t, d] : r.contraction) {
    contraction.push_back({{"temperature", t}, {"coefficient", d}, {"certified", d < 1.0}});
  }
  Json sep = Json::array();
  for (const auto& [t, d] : r.separability) sep.push_back({{"temperature", t}, {"defect", d}});
  Json limit = nullptr;
  if (r.limit) {
    limit = {{"u", r.limit->u},
             {"x", r.limit->x},
             {"lowest_roots", r.limit->lowest_roots},
             {"residual", r.limit->residual},
             {"multiple_roots", r.limit->multiple_roots}};
  }
  return Json{{"name", r.name},
              {"config", to_json(spec)},
              {"nash", detail::one_based(r.equilibria.nash)},
              {"cooperative", detail::one_based(r.equilibria.cooperative)},
              {"best_joint_payoff", r.equilibria.best_total},
              {"fixed_points", fps},
              {"crossings", crossings},
              {"contraction", contraction},
              {"separability_defect", sep},
              {"limit_profile", limit},
              {"failures", r.failures}};
}

/// Equilibria, fixed points (per temperature and penalty), crossing roots for
/// two-spread games, contraction bounds, the separability defect for
/// penalty-free two-sided games and the many-agent limit when requested.
inline AnalysisReport analyze(const ExperimentSpec& spec) {
  AnalysisReport r;
  r.name = spec.name;
  const PayoffTensor tensor = spec.game.tensor();
  r.equilibria = analyze_equilibria(tensor);
  const auto temps = spec.analysis_temperatures();

  FixedPointOptions opts;
  opts.method = spec.analysis.method;
  std::vector<double> xis = spec.analysis.xi_grid;
  if (xis.empty()) xis = {spec.game.xi};

  for (double t : temps) {
    for (double xi : xis) {
      const PayoffTensor tx = xi == spec.game.xi ? tensor : spec.game.tensor(xi);
      try {
        if (spec.analysis.all_branches) {
          const auto found = locate_fixed_points(tx, t, spec.discount, opts);
          if (found.empty()) {
            r.failures.push_back("no fixed point located at temperature " + std::to_string(t));
          }
          for (const auto& f : found) r.fixed_points.push_back({t, xi, f});
        } else {
          r.fixed_points.push_back({t, xi, fixed_point_q(tx, t, spec.discount, opts)});
        }
      } catch (const SolverError& e) {
        r.failures.push_back(e.what());
      }
    }
    r.contraction.emplace_back(t, contraction_coefficient(tensor, t, spec.discount));
  }

  if (tensor.side_separable() && spec.game.n_agents == 2) {
    const PayoffTensor side = spec.game.side_tensor();
    if (side.n_actions() == 2 && side.payoff(0, std::array<int, 2>{1, 0}) == 0.0) {
      for (double t : temps) r.crossings.emplace_back(t, two_spread_crossings(detail::two_by_two(side), t));
    }
  }
  if (spec.game.sides == Sides::kBoth && spec.game.xi == 0.0) {
    const PayoffTensor side = spec.game.side_tensor();
    for (double t : temps) {
      try {
        r.separability.emplace_back(
            t, separability_check(tensor, side, side, t, spec.discount, 0.0, opts).defect);
      } catch (const SolverError& e) {
        r.failures.push_back(e.what());
      }
    }
  }
  if (spec.analysis.u) {
    if (spec.game.spreads.empty()) throw ConfigError("many-agent limit needs a spread grid");
    try {
      r.limit = infinite_agent_limit(spec.game.grid(), frequency_arrival(spec.game.model()),
                                     *spec.analysis.u);
    } catch (const SolverError& e) {
      r.failures.push_back(e.what());
    }
  }
  return r;
}

inline void write_tensor_csv(const std::filesystem::path& dir, const PayoffTensor& tensor) {
  write_atomically(dir / "tensor.csv", [&](std::ostream& os) { tensor.write_csv(os); });
  if (tensor.n_agents() != 2) return;
  write_atomically(dir / "matrix.csv", [&](std::ostream& os) {
    os << "own_action";
    for (int l = 0; l < tensor.n_actions(); ++l) os << ",rival_" << (l + 1);
    os << '\n';
    for (int k = 0; k < tensor.n_actions(); ++k) {
      os << (k + 1);
      for (int l = 0; l < tensor.n_actions(); ++l) {
        const int profile[2] = {k, l};
        os << ',' << tensor.payoff(0, profile);
      }
      os << '\n';
    }
  });
}

inline AnalysisReport cmd_analyze(const ExperimentSpec& spec, const std::filesystem::path& dir) {
  AnalysisReport r = analyze(spec);
  const PayoffTensor tensor = spec.game.tensor();
  write_tensor_csv(dir, tensor);
  const int m = static_cast<int>(spec.game.spreads.empty() ? 0 : spec.game.spreads.size());
  write_atomically(dir / "analysis.csv", [&](std::ostream& os) {
    os << "temperature,xi,branch,action,ask,bid,q_value,probability\n";
    for (const auto& row : r.fixed_points) {
      for (std::size_t w = 0; w < row.result.q.size(); ++w) {
        const int a = static_cast<int>(w);
        os << row.temperature << ',' << row.xi << ',' << to_string(row.result.branch) << ','
           << (a + 1) << ',';
        if (spec.game.sides == Sides::kBoth && m > 0) {
          const Quote q = split_combined(a, m);
          os << (q.ask + 1) << ',' << (q.bid + 1);
        } else {
          os << (a + 1) << ',';
        }
        os << ',' << row.result.q[w] << ',' << row.result.policy[w] << '\n';
      }
    }
  });
  if (!r.crossings.empty()) {
    const auto z = detail::two_by_two(spec.game.side_tensor());
    write_atomically(dir / "crossings.csv", [&](std::ostream& os) {
      os << "temperature,root,residual\n";
      for (const auto& [t, roots] : r.crossings) {
        for (double p : roots) os << t << ',' << p << ',' << crossing_residual(z, t, p) << '\n';
      }
    });
  }
  write_atomically(dir / "summary.json",
                   [&](std::ostream& os) { os << to_json(r, spec).dump(2) << '\n'; });
  return r;
}

inline PayoffTensor cmd_payoff(const ExperimentSpec& spec, const std::filesystem::path& dir) {
  PayoffTensor tensor = spec.game.tensor();
  write_tensor_csv(dir, tensor);
  const auto eq = analyze_equilibria(tensor);
  write_atomically(dir / "summary.json", [&](std::ostream& os) {
    os << Json{{"name", spec.name},
               {"config", to_json(spec)},
               {"n_agents", tensor.n_agents()},
               {"n_actions", tensor.n_actions()},
               {"nash", detail::one_based(eq.nash)},
               {"cooperative", detail::one_based(eq.cooperative)},
               {"best_joint_payoff", eq.best_total}}
              .dump(2)
       << '\n';
  });
  return tensor;
}

struct TrainOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> instances;
  int jobs = 1;
};

inline BatchResult train(const ExperimentSpec& spec, const TrainOptions& opts = {}) {
  const TrainingConfig cfg = spec.training_config();
  const std::uint64_t seed = opts.seed.value_or(spec.training.seed);
  const int n = opts.instances.value_or(spec.training.instances);
  BatchResult batch = run_batch(cfg, n, seed, opts.jobs);
  const std::uint64_t hash = config_hash(spec);
  for (auto& rec : batch.records) rec.config_hash = hash;
  return batch;
}

inline Json manifest(const ExperimentSpec& spec, const BatchResult& batch, std::uint64_t seed,
                     double wall_seconds) {
  const auto& s = batch.summary;
  Json runs = Json::array();
  for (const auto& rec : batch.records) {
    runs.push_back({{"instance", rec.instance},
                    {"periods", rec.periods},
                    {"termination", to_string(rec.termination)},
                    {"inventories", rec.inventories},
                    {"window_orders", rec.last_window.mean_orders()},
                    {"window_reward", rec.last_window.mean_reward()},
                    {"wall_seconds", rec.wall_seconds}});
  }
  Json q = Json::array();
  for (const auto& c : s.terminal_q) q.push_back({{"mean", c.mean}, {"ci_half_width", c.half_width}});
  std::ostringstream hash;
  hash << std::hex << config_hash(spec);
  return Json{{"name", spec.name},
              {"config", to_json(spec)},
              {"config_hash", hash.str()},
              {"seed", seed},
              {"instances", batch.records.size()},
              {"terminal_q", q},
              {"long_run_probabilities", s.long_run_policy},
              {"window",
               {{"orders", s.window_orders},
                {"orders_sd", s.window_orders_sd},
                {"reward", s.window_reward},
                {"reward_sd", s.window_reward_sd},
                {"action_frequency", s.window_action_frequency}}},
              {"termination", {{"greedy-stable", s.greedy_stable}, {"step-budget", s.step_budget}}},
              {"runs", runs},
              {"wall_seconds", wall_seconds}};
}

inline void write_training_outputs(const ExperimentSpec& spec, const BatchResult& batch,
                                   std::uint64_t seed, double wall_seconds,
                                   const std::filesystem::path& dir) {
  write_atomically(dir / "snapshots.csv", [&](std::ostream& os) {
    os << "instance,period,agent,inventory,mean_reward,mean_orders\n";
    for (const auto& rec : batch.records) {
      for (const auto& snap : rec.snapshots) {
        for (std::size_t i = 0; i < snap.inventories.size(); ++i) {
          os << rec.instance << ',' << snap.period << ',' << (i + 1) << ',' << snap.inventories[i]
             << ',' << snap.mean_rewards[i] << ',' << snap.mean_orders << '\n';
        }
      }
    }
  });
  // Memory agents are snapshotted as the mean over states, written as state 0.
  write_atomically(dir / "q_snapshots.csv", [&](std::ostream& os) {
    os << "instance,period,agent,state,action,q_value\n";
    for (const auto& rec : batch.records) {
      for (const auto& snap : rec.snapshots) {
        for (std::size_t i = 0; i < snap.q.size(); ++i) {
          for (std::size_t a = 0; a < snap.q[i].size(); ++a) {
            os << rec.instance << ',' << snap.period << ',' << (i + 1) << ",0," << (a + 1) << ','
               << snap.q[i][a] << '\n';
          }
        }
      }
    }
  });
  write_atomically(dir / "qtable.csv", [&](std::ostream& os) {
    os << "instance,period,agent,state,action,q_value\n";
    for (const auto& rec : batch.records) {
      for (std::size_t i = 0; i < rec.agents.size(); ++i) {
        const auto& agent = rec.agents[i];
        for (int st = 0; st < agent.n_states(); ++st) {
          for (int a = 0; a < agent.n_actions(); ++a) {
            os << rec.instance << ',' << rec.periods << ',' << (i + 1) << ',' << st << ','
               << (a + 1) << ',' << agent.q(st, a) << '\n';
          }
        }
      }
    }
  });
  write_atomically(dir / "policies.csv", [&](std::ostream& os) {
    os << "instance,agent,state,greedy_action\n";
    for (const auto& rec : batch.records) {
      for (std::size_t i = 0; i < rec.greedy.size(); ++i) {
        for (std::size_t st = 0; st < rec.greedy[i].size(); ++st) {
          os << rec.instance << ',' << (i + 1) << ',' << st << ',' << (rec.greedy[i][st] + 1) << '\n';
        }
      }
    }
  });
  write_atomically(dir / "last_window.csv", [&](std::ostream& os) {
    os << "instance,period_offset,orders,mean_reward\n";
    for (const auto& rec : batch.records) {
      for (std::size_t k = 0; k < rec.last_window.orders.size(); ++k) {
        os << rec.instance << ',' << k << ',' << rec.last_window.orders[k] << ','
           << rec.last_window.rewards[k] << '\n';
      }
    }
  });
  write_atomically(dir / "action_frequency.csv", [&](std::ostream& os) {
    os << "action,frequency\n";
    const auto& f = batch.summary.window_action_frequency;
    for (std::size_t a = 0; a < f.size(); ++a) os << (a + 1) << ',' << f[a] << '\n';
  });
  write_atomically(dir / "batch.csv", [&](std::ostream& os) {
    os << "period,instances,action,mean_q,ci_half_width\n";
    for (const auto& snap : batch.summary.snapshots) {
      for (std::size_t a = 0; a < snap.q.size(); ++a) {
        os << snap.period << ',' << snap.instances << ',' << (a + 1) << ',' << snap.q[a].mean
           << ',' << snap.q[a].half_width << '\n';
      }
    }
  });
  write_atomically(dir / "summary.json", [&](std::ostream& os) {
    os << manifest(spec, batch, seed, wall_seconds).dump(2) << '\n';
  });
}

inline BatchResult cmd_train(const ExperimentSpec& spec, const std::filesystem::path& dir,
                             const TrainOptions& opts = {}) {
  const auto started = std::chrono::steady_clock::now();
  BatchResult batch = train(spec, opts);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_training_outputs(spec, batch, opts.seed.value_or(spec.training.seed), wall, dir);
  return batch;
}

}  // namespace mmcoop
