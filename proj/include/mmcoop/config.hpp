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


// Experiment specifications, their JSON form and the built-in presets.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmcoop/errors.hpp"
#include "mmcoop/game_analysis.hpp"
#include "mmcoop/market_model.hpp"
#include "mmcoop/qlearning.hpp"
#include "mmcoop/sim_engine.hpp"

namespace mmcoop {

using Json = nlohmann::ordered_json;

struct GameSpec {
  std::vector<double> spreads;
  std::vector<double> weights;  // zeros when empty
  double sigma = 1.0;
  int n_agents = 2;
  double xi = 0.0;
  Sides sides = Sides::kBoth;
  // Agent 1's one-side payoff matrix for a two-agent game; replaces the
  // arrival model in analysis.
  std::optional<std::vector<std::vector<double>>> payoff_matrix;
  std::size_t cell_budget = kDefaultCellBudget;

  SpreadGrid grid() const { return SpreadGrid(spreads); }
  ArrivalModel model() const {
    if (weights.empty()) return ArrivalModel(std::vector<double>(spreads.size(), 0.0), sigma, n_agents);
    return ArrivalModel(weights, sigma, n_agents);
  }
  GameConfig game(double xi_override) const {
    return GameConfig{grid(), model(), InventoryPenalty{xi_override}, sides};
  }
  GameConfig game() const { return game(xi); }

  PayoffTensor tensor(double xi_value) const {
    if (payoff_matrix) {
      if (xi_value != 0.0) throw ConfigError("payoff matrix override requires xi = 0");
      const auto side = PayoffTensor::from_two_player_matrix(*payoff_matrix);
      return sides == Sides::kBoth ? combine_sides(side, side, 0.0, cell_budget) : side;
    }
    return game(xi_value).tensor(cell_budget);
  }
  PayoffTensor tensor() const { return tensor(xi); }

  // One-side game behind a separable two-sided game.
  PayoffTensor side_tensor() const {
    if (payoff_matrix) return PayoffTensor::from_two_player_matrix(*payoff_matrix);
    return build_side_tensor(grid(), model(), InventoryPenalty{}, cell_budget);
  }
};

struct AnalysisSpec {
  std::vector<double> temperatures;  // defaults to the experiment temperature
  std::vector<double> xi_grid;       // penalty sweep for two-sided games
  std::optional<double> u;           // many-agent limit exponent
  FixedPointMethod method = FixedPointMethod::kAuto;
  bool all_branches = false;
};

struct TrainingSpec {
  LearningRateSchedule schedule = LearningRateSchedule::harmonic(1e4);
  std::vector<double> initial_q;
  bool memory = false;
  SkewRule skew{};
  StopRule stop{};
  long snapshot_interval = 10'000;
  long last_window = 1'000;
  int instances = 10;
  std::uint64_t seed = 1;
};

struct ExperimentSpec {
  std::string name;
  std::string description;
  GameSpec game;
  double temperature = 0.1;
  double discount = 0.0;
  AnalysisSpec analysis;
  TrainingSpec training;

  std::vector<double> analysis_temperatures() const {
    return analysis.temperatures.empty() ? std::vector<double>{temperature} : analysis.temperatures;
  }

  TrainingConfig training_config() const {
    if (game.payoff_matrix) {
      throw ConfigError("training needs a spread grid and arrival model, not a payoff matrix");
    }
    TrainingConfig cfg{game.game(), LearnerParams{temperature, discount, training.schedule},
                       training.initial_q, training.memory, training.skew, training.stop,
                       training.snapshot_interval, training.last_window};
    validate(cfg);
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline void check_keys(const Json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const Json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Json quote_json(const std::optional<Quote>& q) {
  if (!q) return nullptr;
  return Json::array({q->ask + 1, q->bid + 1});
}

inline std::optional<Quote> quote_from(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto v = get<std::vector<int>>(j, key, {});
  if (v.size() != 2) throw ConfigError(std::string(key) + " must be [ask, bid]");
  return Quote{v[0] - 1, v[1] - 1};
}

inline const char* method_name(FixedPointMethod m) {
  switch (m) {
    case FixedPointMethod::kDirect: return "direct";
    case FixedPointMethod::kContinuation: return "continuation";
    default: return "auto";
  }
}

}  // namespace detail

inline Json to_json(const ExperimentSpec& s) {
  Json game = {
      {"spreads", s.game.spreads},
      {"weights", s.game.weights},
      {"sigma", s.game.sigma},
      {"n_agents", s.game.n_agents},
      {"xi", s.game.xi},
      {"sides", s.game.sides == Sides::kBoth ? "both" : "ask"},
      {"cell_budget", s.game.cell_budget},
  };
  if (s.game.payoff_matrix) game["payoff_matrix"] = *s.game.payoff_matrix;

  Json analysis = {
      {"temperatures", s.analysis.temperatures},
      {"xi_grid", s.analysis.xi_grid},
      {"u", s.analysis.u ? Json(*s.analysis.u) : Json(nullptr)},
      {"method", detail::method_name(s.analysis.method)},
      {"all_branches", s.analysis.all_branches},
  };
  const auto& t = s.training;
  Json training = {
      {"schedule",
       {{"kind", t.schedule.kind() == LearningRateSchedule::Kind::kHarmonic ? "harmonic" : "constant"},
        {"value", t.schedule.value()}}},
      {"initial_q", t.initial_q},
      {"memory", t.memory},
      {"skew",
       {{"enabled", t.skew.enabled},
        {"upper", t.skew.upper},
        {"lower", t.skew.lower},
        {"long_skew", detail::quote_json(t.skew.long_skew)},
        {"short_skew", detail::quote_json(t.skew.short_skew)},
        {"update_on_override", t.skew.update_on_override}}},
      {"greedy_window", t.stop.greedy_window},
      {"max_steps", t.stop.max_steps},
      {"snapshot_interval", t.snapshot_interval},
      {"last_window", t.last_window},
      {"instances", t.instances},
      {"seed", t.seed},
  };
  return Json{{"name", s.name},
              {"description", s.description},
              {"game", game},
              {"temperature", s.temperature},
              {"discount", s.discount},
              {"analysis", analysis},
              {"training", training}};
}

inline ExperimentSpec spec_from_json(const Json& j) {
  using detail::get;
  detail::check_keys(j, "experiment",
                     {"name", "description", "game", "temperature", "discount", "analysis", "training"});
  ExperimentSpec s;
  s.name = get<std::string>(j, "name", "custom");
  s.description = get<std::string>(j, "description", "");
  s.temperature = get<double>(j, "temperature", s.temperature);
  s.discount = get<double>(j, "discount", s.discount);
  if (!(s.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(s.discount >= 0.0 && s.discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");

  if (!j.contains("game")) throw ConfigError("missing 'game' section");
  const Json& g = j.at("game");
  detail::check_keys(g, "game",
                     {"spreads", "weights", "sigma", "n_agents", "xi", "sides", "payoff_matrix", "cell_budget"});
  s.game.spreads = get<std::vector<double>>(g, "spreads", {});
  s.game.weights = get<std::vector<double>>(g, "weights", {});
  s.game.sigma = get<double>(g, "sigma", s.game.sigma);
  s.game.n_agents = get<int>(g, "n_agents", s.game.n_agents);
  s.game.xi = get<double>(g, "xi", s.game.xi);
  s.game.cell_budget = get<std::size_t>(g, "cell_budget", s.game.cell_budget);
  const auto sides = get<std::string>(g, "sides", "both");
  if (sides == "both") {
    s.game.sides = Sides::kBoth;
  } else if (sides == "ask") {
    s.game.sides = Sides::kAskOnly;
  } else {
    throw ConfigError("sides must be 'both' or 'ask'");
  }
  if (g.contains("payoff_matrix") && !g.at("payoff_matrix").is_null()) {
    s.game.payoff_matrix = get<std::vector<std::vector<double>>>(g, "payoff_matrix", {});
    if (s.game.n_agents != 2) throw ConfigError("payoff matrix override needs two agents");
  }
  if (!s.game.payoff_matrix) {
    // Validates the grid and arrival model.
    check_consistent(s.game.grid(), s.game.model());
  } else if (!s.game.spreads.empty() && s.game.spreads.size() != s.game.payoff_matrix->size()) {
    throw ConfigError("payoff matrix size does not match the spread grid");
  }
  validate(InventoryPenalty{s.game.xi});

  if (j.contains("analysis")) {
    const Json& a = j.at("analysis");
    detail::check_keys(a, "analysis", {"temperatures", "xi_grid", "u", "method", "all_branches"});
    s.analysis.temperatures = get<std::vector<double>>(a, "temperatures", {});
    for (double t : s.analysis.temperatures) {
      if (!(t > 0.0)) throw ConfigError("analysis temperatures must be positive");
    }
    s.analysis.xi_grid = get<std::vector<double>>(a, "xi_grid", {});
    for (double xi : s.analysis.xi_grid) validate(InventoryPenalty{xi});
    if (a.contains("u") && !a.at("u").is_null()) s.analysis.u = get<double>(a, "u", 1.0);
    const auto method = get<std::string>(a, "method", "auto");
    if (method == "auto") {
      s.analysis.method = FixedPointMethod::kAuto;
    } else if (method == "direct") {
      s.analysis.method = FixedPointMethod::kDirect;
    } else if (method == "continuation") {
      s.analysis.method = FixedPointMethod::kContinuation;
    } else {
      throw ConfigError("method must be auto, direct or continuation");
    }
    s.analysis.all_branches = get<bool>(a, "all_branches", false);
  }

  if (j.contains("training")) {
    const Json& t = j.at("training");
    detail::check_keys(t, "training",
                       {"schedule", "initial_q", "memory", "skew", "greedy_window", "max_steps",
                        "snapshot_interval", "last_window", "instances", "seed"});
    auto& tr = s.training;
    if (t.contains("schedule")) {
      const Json& sc = t.at("schedule");
      detail::check_keys(sc, "schedule", {"kind", "value"});
      const auto kind = get<std::string>(sc, "kind", "harmonic");
      const double value = get<double>(sc, "value", 1e4);
      if (kind == "harmonic") {
        tr.schedule = LearningRateSchedule::harmonic(value);
      } else if (kind == "constant") {
        tr.schedule = LearningRateSchedule::constant(value);
      } else {
        throw ConfigError("schedule kind must be harmonic or constant");
      }
    }
    tr.initial_q = get<std::vector<double>>(t, "initial_q", {});
    tr.memory = get<bool>(t, "memory", false);
    if (t.contains("skew")) {
      const Json& k = t.at("skew");
      detail::check_keys(k, "skew",
                         {"enabled", "upper", "lower", "long_skew", "short_skew", "update_on_override"});
      tr.skew.enabled = get<bool>(k, "enabled", false);
      tr.skew.upper = get<double>(k, "upper", tr.skew.upper);
      tr.skew.lower = get<double>(k, "lower", tr.skew.lower);
      tr.skew.long_skew = detail::quote_from(k, "long_skew");
      tr.skew.short_skew = detail::quote_from(k, "short_skew");
      tr.skew.update_on_override = get<bool>(k, "update_on_override", true);
    }
    tr.stop.greedy_window = get<long>(t, "greedy_window", tr.stop.greedy_window);
    tr.stop.max_steps = get<long>(t, "max_steps", tr.stop.max_steps);
    tr.snapshot_interval = get<long>(t, "snapshot_interval", tr.snapshot_interval);
    tr.last_window = get<long>(t, "last_window", tr.last_window);
    tr.instances = get<int>(t, "instances", tr.instances);
    tr.seed = get<std::uint64_t>(t, "seed", tr.seed);
    if (tr.instances < 1) throw ConfigError("need at least one instance");
    if (!s.game.payoff_matrix) {
      TrainingConfig cfg{s.game.game(), LearnerParams{s.temperature, s.discount, tr.schedule},
                         tr.initial_q, tr.memory, tr.skew, tr.stop, tr.snapshot_interval,
                         tr.last_window};
      validate(cfg);
    }
  }
  return s;
}

// Accepts one experiment object or an array of them.
inline std::vector<ExperimentSpec> specs_from_json(const Json& j) {
  std::vector<ExperimentSpec> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(spec_from_json(e));
  } else {
    out.push_back(spec_from_json(j));
  }
  if (out.empty()) throw ConfigError("config holds no experiments");
  return out;
}

inline std::uint64_t config_hash(const ExperimentSpec& s) {
  // FNV-1a over the canonical JSON text.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(s).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Presets

namespace presets {

inline GameSpec one_side_pair(double low, double high) {
  GameSpec g;
  g.spreads = {low, high};
  g.weights = {0.0, 0.0};
  g.sigma = 1.0;
  g.sides = Sides::kAskOnly;
  return g;
}

inline GameSpec stag_hunt() { return one_side_pair(0.1, 0.8); }
inline GameSpec prisoners_dilemma() { return one_side_pair(0.41, 0.8); }

inline GameSpec ten_spreads() {
  GameSpec g;
  for (int i = 1; i <= 10; ++i) g.spreads.push_back(0.1 * i);
  for (int i = 0; i < 10; ++i) g.weights.push_back(i / 90.0);
  g.sigma = 0.1;
  g.sides = Sides::kAskOnly;
  return g;
}

inline GameSpec four_spreads_two_sided(double xi) {
  GameSpec g;
  g.spreads = {3 / 30.0, 7 / 30.0, 11 / 30.0, 15 / 30.0};
  g.weights = {0.0, 1 / 30.0, 2 / 30.0, 3 / 30.0};
  g.sigma = 0.1;
  g.xi = xi;
  g.sides = Sides::kBoth;
  return g;
}

inline ExperimentSpec make(std::string name, std::string description, GameSpec game,
                           double temperature, double discount = 0.0) {
  ExperimentSpec s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.game = std::move(game);
  s.temperature = temperature;
  s.discount = discount;
  return s;
}

inline ExperimentSpec table3_row(int row) {
  const bool sh = row <= 3;
  ExperimentSpec s = make("table3-row" + std::to_string(row),
                          sh ? "stag hunt training run" : "prisoner's dilemma training run",
                          sh ? stag_hunt() : prisoners_dilemma(), row == 1 ? 0.1 : 0.01);
  s.training.stop.greedy_window = 1'000'000;
  s.training.stop.max_steps = 20'000'000;
  s.training.snapshot_interval = 100'000;
  if (row == 3) {
    s.training.initial_q = {0.02, 0.0};
    s.training.schedule = LearningRateSchedule::harmonic(100);
  } else if (row == 5) {
    s.training.initial_q = {0.0, 0.02};
  }
  return s;
}

inline ExperimentSpec table7_cell(bool memory, bool far_sighted) {
  ExperimentSpec s = make(std::string("table7-") + (memory ? "memory" : "stateless") + "-" +
                              (far_sighted ? "farsighted" : "myopic"),
                          "four spreads per side with inventory risk, low temperature",
                          four_spreads_two_sided(0.1), 0.01, far_sighted ? 0.9 : 0.0);
  s.training.memory = memory;
  s.training.schedule = LearningRateSchedule::harmonic(1e5);
  s.training.stop.greedy_window = 0;
  s.training.stop.max_steps = 4'000'000;
  s.training.snapshot_interval = 100'000;
  return s;
}

inline std::map<std::string, std::vector<ExperimentSpec>> all() {
  std::map<std::string, std::vector<ExperimentSpec>> p;

  auto table1 = make("table1", "stag hunt, two spreads, one side", stag_hunt(), 0.1);
  table1.analysis.temperatures = {0.1, 0.01};
  table1.analysis.all_branches = true;
  auto table2 = make("table2", "prisoner's dilemma, two spreads, one side", prisoners_dilemma(), 0.01);
  table2.analysis.temperatures = {0.1, 0.01};
  table2.analysis.all_branches = true;
  p["table1"] = {table1};
  p["table2"] = {table2};
  p["figure1"] = {table1, table2};

  std::vector<ExperimentSpec> rows;
  for (int r = 1; r <= 5; ++r) {
    p["table3-row" + std::to_string(r)] = {table3_row(r)};
    rows.push_back(table3_row(r));
  }
  p["table3"] = rows;

  auto fig3 = make("figure3", "ten spreads, one side, no inventory risk", ten_spreads(), 0.1);
  p["figure3"] = {fig3};
  auto table4 = fig3;
  table4.name = "table4";
  p["table4"] = {table4};
  auto fig5 = fig3;
  fig5.name = "figure5";
  fig5.training.schedule = LearningRateSchedule::harmonic(1e5);
  fig5.training.stop = StopRule{0, 4'000'000};
  fig5.training.snapshot_interval = 100'000;
  p["figure5"] = {fig5};

  auto sh2 = stag_hunt();
  sh2.sides = Sides::kBoth;
  auto pd2 = prisoners_dilemma();
  pd2.sides = Sides::kBoth;
  auto t5sh = make("table5-sh", "stag hunt, both sides, penalty sweep", sh2, 0.1);
  t5sh.analysis.xi_grid = {0.0, 0.1, 0.2};
  auto t5pd = make("table5-pd", "prisoner's dilemma, both sides, penalty sweep", pd2, 0.1);
  t5pd.analysis.xi_grid = {0.0, 0.1, 0.2};
  p["table5-sh"] = {t5sh};
  p["table5-pd"] = {t5pd};
  p["table5"] = {t5sh, t5pd};

  auto sh_risk = sh2;
  sh_risk.xi = 0.1;
  auto fig2 = make("figure2", "stag hunt, both sides, quadratic inventory penalty", sh_risk, 0.1);
  fig2.training.stop = StopRule{0, 2'000'000};
  p["figure2"] = {fig2};

  auto fig4 = make("figure4", "stag hunt, both sides, inventory skew rule", sh2, 0.1);
  fig4.training.stop = StopRule{0, 2'000'000};
  fig4.training.skew.enabled = true;
  fig4.training.skew.long_skew = Quote{0, 1};
  fig4.training.skew.short_skew = Quote{1, 0};
  p["figure4"] = {fig4};

  auto fig8 = make("figure8", "four spreads per side with inventory risk",
                   four_spreads_two_sided(0.1), 0.1);
  fig8.analysis.temperatures = {0.1, 0.01};
  p["figure8"] = {fig8};
  auto table6 = fig8;
  table6.name = "table6";
  p["table6"] = {table6};
  auto fig6 = fig8;
  fig6.name = "figure6";
  fig6.analysis.temperatures.clear();
  fig6.training.schedule = LearningRateSchedule::harmonic(1e5);
  fig6.training.stop = StopRule{0, 4'000'000};
  fig6.training.snapshot_interval = 100'000;
  p["figure6"] = {fig6};

  p["table7"] = {table7_cell(false, false), table7_cell(true, false), table7_cell(false, true),
                 table7_cell(true, true)};
  p["figure7"] = {table7_cell(false, true), table7_cell(true, true)};
  for (const auto& s : p["table7"]) p[s.name] = {s};

  auto thm2 = make("theorem2", "many-agent limit on the ten-spread grid", ten_spreads(), 0.1);
  thm2.analysis.u = 1.0;
  p["theorem2"] = {thm2};
  return p;
}

inline std::vector<ExperimentSpec> get(const std::string& name) {
  auto p = all();
  auto it = p.find(name);
  if (it == p.end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

inline std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : all()) out.push_back(k);
  return out;
}

}  // namespace presets
}  // namespace mmcoop
