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


// mmcoop: analyze, train and payoff commands over presets or JSON configs.
//
// Exit codes: 0 success, 2 solver non-convergence, 3 invalid config.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmcoop/mmcoop.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kSolverFailure = 2;
constexpr int kInvalidConfig = 3;

struct CommonArgs {
  std::string preset;
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> instances;
  int jobs = 1;
  bool dump_config = false;
  std::vector<double> xi;
  std::optional<double> u;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  auto* preset = cmd->add_option("--preset", args.preset, "Built-in experiment name");
  auto* config = cmd->add_option("--config", args.config, "JSON experiment file")->check(CLI::ExistingFile);
  preset->excludes(config);
  cmd->add_option("--out", args.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", args.seed, "Base seed");
  cmd->add_option("--instances", args.instances, "Independent instances")->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", args.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--dump-config", args.dump_config, "Print the resolved config as JSON and exit");
}

std::vector<mmcoop::ExperimentSpec> resolve(const CommonArgs& args) {
  std::vector<mmcoop::ExperimentSpec> specs;
  if (!args.preset.empty()) {
    specs = mmcoop::presets::get(args.preset);
  } else if (!args.config.empty()) {
    std::ifstream in(args.config);
    mmcoop::Json j;
    try {
      j = mmcoop::Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw mmcoop::ConfigError(std::string("cannot parse ") + args.config + ": " + e.what());
    }
    specs = mmcoop::specs_from_json(j);
  } else {
    throw mmcoop::ConfigError("one of --preset or --config is required");
  }
  for (auto& s : specs) {
    if (!args.xi.empty()) {
      for (double xi : args.xi) mmcoop::validate(mmcoop::InventoryPenalty{xi});
      s.analysis.xi_grid = args.xi;
    }
    if (args.u) s.analysis.u = *args.u;
    if (args.seed) s.training.seed = *args.seed;
    if (args.instances) s.training.instances = *args.instances;
  }
  return specs;
}

std::filesystem::path out_dir(const CommonArgs& args, const mmcoop::ExperimentSpec& s, std::size_t n) {
  const std::filesystem::path base(args.out);
  return n > 1 ? base / s.name : base;
}

bool dump(const CommonArgs& args, const std::vector<mmcoop::ExperimentSpec>& specs) {
  if (!args.dump_config) return false;
  if (specs.size() == 1) {
    std::cout << mmcoop::to_json(specs.front()).dump(2) << '\n';
  } else {
    mmcoop::Json arr = mmcoop::Json::array();
    for (const auto& s : specs) arr.push_back(mmcoop::to_json(s));
    std::cout << arr.dump(2) << '\n';
  }
  return true;
}

int run_analyze(const CommonArgs& args) {
  const auto specs = resolve(args);
  if (dump(args, specs)) return kOk;
  int code = kOk;
  for (const auto& s : specs) {
    const auto dir = out_dir(args, s, specs.size());
    const auto report = mmcoop::cmd_analyze(s, dir);
    std::cout << s.name << ": ";
    for (const auto& row : report.fixed_points) {
      std::cout << "\n  lambda=" << row.temperature << " xi=" << row.xi << " ["
                << mmcoop::to_string(row.result.branch) << "] p=";
      for (double p : row.result.policy) std::cout << ' ' << p;
    }
    if (report.limit) {
      std::cout << "\n  limit profile x1=" << report.limit->x.front()
                << " residual=" << report.limit->residual;
    }
    std::cout << "\n  wrote " << dir.string() << '\n';
    for (const auto& f : report.failures) {
      std::cerr << s.name << ": solver failure: " << f << '\n';
      code = kSolverFailure;
    }
  }
  return code;
}

int run_train(const CommonArgs& args) {
  const auto specs = resolve(args);
  if (dump(args, specs)) return kOk;
  for (const auto& s : specs) {
    const auto dir = out_dir(args, s, specs.size());
    mmcoop::TrainOptions opts;
    opts.jobs = args.jobs;
    const auto batch = mmcoop::cmd_train(s, dir, opts);
    const auto& sum = batch.summary;
    std::cout << s.name << ": " << batch.records.size() << " instances, long-run p =";
    for (double p : sum.long_run_policy) std::cout << ' ' << p;
    std::cout << "\n  window orders " << sum.window_orders << " (sd " << sum.window_orders_sd
              << "), reward " << sum.window_reward << " (sd " << sum.window_reward_sd << ")"
              << "\n  greedy-stable " << sum.greedy_stable << ", step-budget " << sum.step_budget
              << "\n  wrote " << dir.string() << '\n';
  }
  return kOk;
}

int run_payoff(const CommonArgs& args) {
  const auto specs = resolve(args);
  if (dump(args, specs)) return kOk;
  for (const auto& s : specs) {
    const auto dir = out_dir(args, s, specs.size());
    const auto tensor = mmcoop::cmd_payoff(s, dir);
    const auto eq = mmcoop::analyze_equilibria(tensor);
    std::cout << s.name << ": " << tensor.n_agents() << " agents, " << tensor.n_actions()
              << " actions\n  nash:";
    for (const auto& p : eq.nash) {
      std::cout << " (";
      for (std::size_t i = 0; i < p.size(); ++i) std::cout << (i ? "," : "") << p[i] + 1;
      std::cout << ')';
    }
    std::cout << "\n  wrote " << dir.string() << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market-making Q-learning games: analysis and simulation"};
  app.require_subcommand(0, 1);
  app.set_version_flag("--version", "mmcoop 1.0.0");
  bool list = false;
  app.add_flag("--list-presets", list, "Print preset names and exit");

  CommonArgs analyze_args, train_args, payoff_args;
  auto* analyze = app.add_subcommand("analyze", "Equilibria, fixed points, crossings and bounds");
  add_common(analyze, analyze_args);
  analyze->add_option("--xi", analyze_args.xi, "Penalty sweep, comma separated")->delimiter(',');
  analyze->add_option("--u", analyze_args.u, "Many-agent limit exponent");
  auto* train = app.add_subcommand("train", "Independent Q-learning instances");
  add_common(train, train_args);
  auto* payoff = app.add_subcommand("payoff", "Expected payoff tensor");
  add_common(payoff, payoff_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalidConfig;
  }

  if (list) {
    for (const auto& n : mmcoop::presets::names()) std::cout << n << '\n';
    return kOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << "A subcommand is required\nRun with --help for more information.\n";
    return kInvalidConfig;
  }

  try {
    if (*analyze) return run_analyze(analyze_args);
    if (*train) return run_train(train_args);
    if (*payoff) return run_payoff(payoff_args);
  } catch (const mmcoop::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << " (residual " << e.residual() << " after "
              << e.iterations() << " iterations)\n";
    return kSolverFailure;
  } catch (const mmcoop::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const mmcoop::BudgetError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
