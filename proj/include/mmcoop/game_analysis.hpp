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

// Static analysis of the market-making game: equilibria, Boltzmann fixed
// points of the expected Q-learning update, contraction bounds, side
// separability and the many-agent limit.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcoop/errors.hpp"
#include "mmcoop/market_model.hpp"

namespace mmcoop {

using QVector = std::vector<double>;
using Policy = std::vector<double>;

/// exp(q(c)/temperature) normalized over actions, computed after subtracting
/// max q.
inline Policy boltzmann_policy(std::span<const double> q, double temperature) {
  if (!(temperature > 0.0)) throw std::domain_error("temperature must be positive");
  if (q.empty()) return {};
  const double top = *std::max_element(q.begin(), q.end());
  Policy p(q.size());
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    p[i] = std::exp((q[i] - top) / temperature);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

// ---------------------------------------------------------------------------
// Equilibria

struct EquilibriumReport {
  std::vector<std::vector<int>> nash;         // pure Nash profiles, zero-based
  std::vector<std::vector<int>> cooperative;  // maximizers of the joint payoff
  std::vector<double> joint_totals;           // sum_i E[r_i | C] per joint index
  double best_total = 0.0;
};

// Weak-inequality test; a deviation must gain more than `tolerance` to break
// an equilibrium.
inline std::vector<std::vector<int>> pure_nash_equilibria(const PayoffTensor& tensor,
                                                          double tolerance = 1e-12) {
  std::vector<std::vector<int>> out;
  const int n = tensor.n_agents();
  const int m = tensor.n_actions();
  std::vector<int> profile(static_cast<std::size_t>(n));
  std::vector<int> trial(profile.size());
  for (std::size_t j = 0; j < tensor.n_joint(); ++j) {
    tensor.decode(j, profile);
    bool stable = true;
    for (int i = 0; i < n && stable; ++i) {
      const double current = tensor(i, j);
      trial = profile;
      for (int alt = 0; alt < m; ++alt) {
        if (alt == profile[static_cast<std::size_t>(i)]) continue;
        trial[static_cast<std::size_t>(i)] = alt;
        if (tensor.payoff(i, trial) > current + tolerance) {
          stable = false;
          break;
        }
      }
    }
    if (stable) out.push_back(profile);
  }
  return out;
}

inline std::vector<double> joint_payoff_totals(const PayoffTensor& tensor) {
  std::vector<double> totals(tensor.n_joint(), 0.0);
  for (int i = 0; i < tensor.n_agents(); ++i) {
    const auto values = tensor.agent_values(i);
    for (std::size_t j = 0; j < totals.size(); ++j) totals[j] += values[j];
  }
  return totals;
}

inline std::vector<std::vector<int>> cooperative_strategies(const PayoffTensor& tensor,
                                                            double tolerance = 1e-12) {
  const auto totals = joint_payoff_totals(tensor);
  const double best = *std::max_element(totals.begin(), totals.end());
  std::vector<std::vector<int>> out;
  for (std::size_t j = 0; j < totals.size(); ++j) {
    if (totals[j] >= best - tolerance) out.push_back(tensor.decode(j));
  }
  return out;
}

inline EquilibriumReport analyze_equilibria(const PayoffTensor& tensor) {
  EquilibriumReport report;
  report.nash = pure_nash_equilibria(tensor);
  report.cooperative = cooperative_strategies(tensor);
  report.joint_totals = joint_payoff_totals(tensor);
  report.best_total = *std::max_element(report.joint_totals.begin(), report.joint_totals.end());
  return report;
}

// ---------------------------------------------------------------------------
// Expected update operator

/// R_i(w) = sum over joint actions with c_i = w of prod_{j != i} pi_j(c_j) E[r_i | C],
/// for every action w of agent i. `policies` holds one distribution per agent;
/// entry i is ignored.
inline std::vector<double> expected_action_rewards(const PayoffTensor& tensor, int agent,
                                                   std::span<const Policy> policies) {
  const int n = tensor.n_agents();
  const int m = tensor.n_actions();
  if (static_cast<int>(policies.size()) != n) {
    throw std::domain_error("need one policy per agent");
  }
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  const auto values = tensor.agent_values(agent);
  std::vector<int> profile(static_cast<std::size_t>(n), 0);
  std::size_t j = 0;
  do {
    double weight = 1.0;
    for (int k = 0; k < n; ++k) {
      if (k == agent) continue;
      weight *= policies[static_cast<std::size_t>(k)][static_cast<std::size_t>(profile[static_cast<std::size_t>(k)])];
    }
    out[static_cast<std::size_t>(profile[static_cast<std::size_t>(agent)])] += weight * values[j];
    ++j;
  } while (detail::next_profile(profile, m));
  return out;
}

/// H[q] for agent 0 of a symmetric game when every rival plays the Boltzmann
/// policy of the same q.
inline QVector bellman_operator(const PayoffTensor& tensor, std::span<const double> q,
                                double temperature, double discount) {
  if (static_cast<int>(q.size()) != tensor.n_actions()) {
    throw std::domain_error("q vector size does not match the action count");
  }
  const Policy pi = boltzmann_policy(q, temperature);
  const std::vector<Policy> policies(static_cast<std::size_t>(tensor.n_agents()), pi);
  QVector h = expected_action_rewards(tensor, 0, policies);
  const double top = *std::max_element(q.begin(), q.end());
  for (double& x : h) x += discount * top;
  return h;
}

/// H applied to the stacked Q = (q_1, ..., q_N), each agent facing the
/// Boltzmann policies of the others.
inline std::vector<QVector> bellman_operator(const PayoffTensor& tensor,
                                             const std::vector<QVector>& stacked,
                                             double temperature, double discount) {
  if (static_cast<int>(stacked.size()) != tensor.n_agents()) {
    throw std::domain_error("need one q vector per agent");
  }
  std::vector<Policy> policies;
  policies.reserve(stacked.size());
  for (const auto& q : stacked) {
    if (static_cast<int>(q.size()) != tensor.n_actions()) {
      throw std::domain_error("q vector size does not match the action count");
    }
    policies.push_back(boltzmann_policy(q, temperature));
  }
  std::vector<QVector> out;
  out.reserve(stacked.size());
  for (int i = 0; i < tensor.n_agents(); ++i) {
    QVector h = expected_action_rewards(tensor, i, policies);
    const auto& q = stacked[static_cast<std::size_t>(i)];
    const double top = *std::max_element(q.begin(), q.end());
    for (double& x : h) x += discount * top;
    out.push_back(std::move(h));
  }
  return out;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// ---------------------------------------------------------------------------
// Fixed point q* = H[q*]

enum class FixedPointMethod {
  kAuto,          // direct damped iteration, continuation on failure
  kDirect,        // damped iteration at the target temperature only
  kContinuation,  // follow the solution down from a high temperature
};

enum class Branch { kDirect, kContinuation };

inline const char* to_string(Branch b) {
  return b == Branch::kDirect ? "direct" : "continuation";
}

struct FixedPointOptions {
  double damping = 0.5;
  double tolerance = 1e-12;
  long max_iterations = 1'000'000;
  FixedPointMethod method = FixedPointMethod::kAuto;
  double continuation_start = 1.0;  // temperature the continuation starts from
  int continuation_steps = 40;
  QVector initial;  // zeros when empty
};

struct FixedPointResult {
  QVector q;
  Policy policy;
  double residual = 0.0;
  long iterations = 0;
  double damping = 0.0;
  Branch branch = Branch::kDirect;
};

namespace detail {

struct IterationOutcome {
  bool converged = false;
  double residual = 0.0;
  long iterations = 0;
};

// q <- (1 - beta) q + beta H[q] until ||H[q] - q|| <= tol.
inline IterationOutcome damped_iteration(const PayoffTensor& tensor, QVector& q,
                                         double temperature, double discount, double beta,
                                         double tolerance, long max_iterations) {
  IterationOutcome out;
  for (long k = 0; k < max_iterations; ++k) {
    const QVector h = bellman_operator(tensor, q, temperature, discount);
    out.residual = sup_distance(h, q);
    out.iterations = k;
    if (!std::isfinite(out.residual)) return out;
    if (out.residual <= tolerance) {
      out.converged = true;
      return out;
    }
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = (1.0 - beta) * q[i] + beta * h[i];
  }
  out.iterations = max_iterations;
  return out;
}

inline FixedPointResult continuation(const PayoffTensor& tensor, double temperature,
                                     double discount, const FixedPointOptions& opts,
                                     QVector q) {
  const double start = std::max(opts.continuation_start, temperature);
  const int steps = std::max(1, opts.continuation_steps);
  double last_residual = 0.0;
  long total = 0;
  double beta = opts.damping;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double lam = s == steps ? temperature : start * std::pow(temperature / start, t);
    const double tol = s == steps ? opts.tolerance : std::max(opts.tolerance, 1e-10);
    IterationOutcome it;
    // Shrink the step until the warm-started iteration settles.
    for (double b = opts.damping; b >= 1e-4; b *= 0.2) {
      QVector trial = q;
      it = damped_iteration(tensor, trial, lam, discount, b, tol, opts.max_iterations);
      total += it.iterations;
      last_residual = it.residual;
      if (it.converged) {
        q = std::move(trial);
        beta = b;
        break;
      }
    }
    if (!it.converged) {
      throw SolverError("continuation stalled at temperature " + std::to_string(lam),
                        last_residual, total);
    }
  }
  FixedPointResult r;
  r.policy = boltzmann_policy(q, temperature);
  r.q = std::move(q);
  r.residual = last_residual;
  r.iterations = total;
  r.damping = beta;
  r.branch = Branch::kContinuation;
  return r;
}

}  // namespace detail

/// Solves q*(w) = R_1(w; q*) + discount * max q* for a symmetric game.
/// Throws SolverError carrying the last residual when no method converges.
inline FixedPointResult fixed_point_q(const PayoffTensor& tensor, double temperature,
                                      double discount, const FixedPointOptions& opts = {}) {
  if (!(temperature > 0.0)) throw std::domain_error("temperature must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw std::domain_error("discount must lie in [0, 1)");
  QVector q = opts.initial.empty() ? QVector(static_cast<std::size_t>(tensor.n_actions()), 0.0)
                                   : opts.initial;
  if (static_cast<int>(q.size()) != tensor.n_actions()) {
    throw std::domain_error("initial q vector has the wrong size");
  }

  if (opts.method == FixedPointMethod::kContinuation) {
    return detail::continuation(tensor, temperature, discount, opts, std::move(q));
  }
  QVector direct = q;
  const auto it = detail::damped_iteration(tensor, direct, temperature, discount, opts.damping,
                                           opts.tolerance, opts.max_iterations);
  if (it.converged) {
    FixedPointResult r;
    r.policy = boltzmann_policy(direct, temperature);
    r.q = std::move(direct);
    r.residual = it.residual;
    r.iterations = it.iterations;
    r.damping = opts.damping;
    r.branch = Branch::kDirect;
    return r;
  }
  if (opts.method == FixedPointMethod::kDirect) {
    throw SolverError("damped fixed-point iteration did not converge", it.residual,
                      it.iterations);
  }
  return detail::continuation(tensor, temperature, discount, opts, std::move(q));
}

/// Distinct fixed points reachable from the continuation and from direct
/// iteration started at zero and at each "favour action k" tilt.
inline std::vector<FixedPointResult> locate_fixed_points(const PayoffTensor& tensor,
                                                         double temperature, double discount,
                                                         FixedPointOptions opts = {},
                                                         double tilt = 1.0,
                                                         double same_tolerance = 1e-8) {
  std::vector<FixedPointResult> found;
  auto add = [&](FixedPointResult r) {
    for (const auto& f : found) {
      if (sup_distance(f.q, r.q) <= same_tolerance) return;
    }
    found.push_back(std::move(r));
  };
  opts.method = FixedPointMethod::kContinuation;
  try {
    add(fixed_point_q(tensor, temperature, discount, opts));
  } catch (const SolverError&) {
  }
  opts.method = FixedPointMethod::kDirect;
  const auto m = static_cast<std::size_t>(tensor.n_actions());
  for (std::size_t k = 0; k <= m; ++k) {
    opts.initial.assign(m, 0.0);
    if (k < m) opts.initial[k] = tilt * tensor.max_abs();
    try {
      add(fixed_point_q(tensor, temperature, discount, opts));
    } catch (const SolverError&) {
    }
  }
  return found;
}

/// One row per inventory-penalty weight; the tensor is rebuilt for each.
struct PenaltyRow {
  double xi = 0.0;
  std::optional<FixedPointResult> result;
  std::string error;  // solver message when `result` is empty
};

inline std::vector<PenaltyRow> theoretical_action_probabilities(
    const SpreadGrid& grid, const ArrivalModel& model, double temperature,
    std::span<const double> xis, double discount = 0.0, const FixedPointOptions& opts = {},
    std::size_t cell_budget = kDefaultCellBudget) {
  std::vector<PenaltyRow> rows;
  rows.reserve(xis.size());
  for (double xi : xis) {
    PenaltyRow row;
    row.xi = xi;
    const PayoffTensor tensor = build_payoff_tensor(grid, model, InventoryPenalty{xi}, cell_budget);
    try {
      row.result = fixed_point_q(tensor, temperature, discount, opts);
    } catch (const SolverError& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Contraction bound

/// (N - 1) * A * max|E[r]| / temperature + discount, where A is the number of
/// actions per agent. Below one, H is a sup-norm contraction.
inline double contraction_coefficient(const PayoffTensor& tensor, double temperature,
                                      double discount) {
  if (!(temperature > 0.0)) throw std::domain_error("temperature must be positive");
  return (tensor.n_agents() - 1) * static_cast<double>(tensor.n_actions()) *
             tensor.max_abs() / temperature +
         discount;
}

// Largest |q| a learner can reach from zero with bounded rewards.
inline double default_q_bound(const PayoffTensor& tensor, double discount) {
  return tensor.max_abs() / (1.0 - discount);
}

// ---------------------------------------------------------------------------
// Two-spread crossing diagram

/// Solutions p1 in (0,1) of ln(p1/(1-p1)) = (z12 - z22)/lambda +
/// (z11 - z12 + z22)/lambda * p1 for a two-agent, two-spread one-side game
/// with z21 = 0. The scan runs over s = ln(p1/(1-p1)); every root lies in
/// [a + min(0,b), a + max(0,b)].
inline std::vector<double> two_spread_crossings(const std::array<std::array<double, 2>, 2>& z,
                                                double temperature,
                                                int grid_points = 100'000) {
  if (!(temperature > 0.0)) throw std::domain_error("temperature must be positive");
  if (z[1][0] != 0.0) throw std::domain_error("crossing equation requires z21 = 0");
  const double a = (z[0][1] - z[1][1]) / temperature;
  const double b = (z[0][0] - z[0][1] + z[1][1]) / temperature;
  if (a == 0.0 && b == 0.0) return {0.5};

  const auto logistic = [](double s) { return 1.0 / (1.0 + std::exp(-s)); };
  const auto g = [&](double s) { return s - a - b * logistic(s); };
  const double lo = a + std::min(0.0, b);
  const double hi = a + std::max(0.0, b);
  if (lo == hi) return {logistic(lo)};

  std::vector<double> roots;
  const int n = std::max(grid_points, 2);
  double s_prev = lo;
  double g_prev = g(lo);
  auto bisect = [&](double left, double right, double g_left) {
    for (int k = 0; k < 200 && right - left > 0.0; ++k) {
      const double mid = 0.5 * (left + right);
      if (mid == left || mid == right) break;
      const double gm = g(mid);
      if (gm == 0.0) return mid;
      if ((gm < 0.0) == (g_left < 0.0)) {
        left = mid;
        g_left = gm;
      } else {
        right = mid;
      }
    }
    return 0.5 * (left + right);
  };
  if (g_prev == 0.0) roots.push_back(logistic(lo));
  for (int k = 1; k <= n; ++k) {
    const double s = lo + (hi - lo) * static_cast<double>(k) / n;
    const double gs = g(s);
    if (gs == 0.0) {
      roots.push_back(logistic(s));
    } else if (g_prev != 0.0 && (gs < 0.0) != (g_prev < 0.0)) {
      roots.push_back(logistic(bisect(s_prev, s, g_prev)));
    }
    s_prev = s;
    g_prev = gs;
  }
  return roots;
}

// Residual of the crossing equation at p1, evaluated in logit form.
inline double crossing_residual(const std::array<std::array<double, 2>, 2>& z,
                                double temperature, double p1) {
  const double a = (z[0][1] - z[1][1]) / temperature;
  const double b = (z[0][0] - z[0][1] + z[1][1]) / temperature;
  return std::log(p1) - std::log1p(-p1) - a - b * p1;
}

// ---------------------------------------------------------------------------
// Side separability

struct SeparabilityReport {
  double defect = 0.0;
  FixedPointResult combined;
  FixedPointResult ask;
  FixedPointResult bid;
};

/// Solves the combined game and both one-side games and returns
/// max_w |q*(w) - q*_a(w_a) - q*_b(w_b) - constant / (1 - discount)|.
/// `combined` must equal ask + bid + constant.
inline SeparabilityReport separability_check(const PayoffTensor& combined,
                                             const PayoffTensor& ask, const PayoffTensor& bid,
                                             double temperature, double discount,
                                             double constant = 0.0,
                                             const FixedPointOptions& opts = {}) {
  const int m = ask.n_actions();
  if (bid.n_actions() != m || combined.n_actions() != m * m ||
      combined.n_agents() != ask.n_agents() || bid.n_agents() != ask.n_agents()) {
    throw ConfigError("combined game does not match the side games");
  }
  SeparabilityReport report;
  report.combined = fixed_point_q(combined, temperature, discount, opts);
  report.ask = fixed_point_q(ask, temperature, discount, opts);
  report.bid = fixed_point_q(bid, temperature, discount, opts);
  const double offset = constant / (1.0 - discount);
  for (int w = 0; w < m * m; ++w) {
    const Quote qw = split_combined(w, m);
    const double predicted = report.ask.q[static_cast<std::size_t>(qw.ask)] +
                             report.bid.q[static_cast<std::size_t>(qw.bid)] + offset;
    report.defect =
        std::max(report.defect, std::abs(report.combined.q[static_cast<std::size_t>(w)] - predicted));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Many-agent limit

/// Arrival probability as a function of the spread frequency vector x = v/N.
using FrequencyArrival = std::function<double(std::span<const double>)>;

inline FrequencyArrival frequency_arrival(const ArrivalModel& model) {
  return [weights = model.weights(), sigma = model.sigma()](std::span<const double> x) {
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e += weights[i] * x[i];
    return std::exp(-e / sigma);
  };
}

struct LimitProfile {
  double u = 0.0;
  std::vector<double> x;               // one-side spread probabilities
  std::vector<double> lowest_roots;    // every located x1 when u == 1
  double residual = 0.0;
  bool multiple_roots = false;
};

namespace detail {

inline std::vector<double> limit_profile_from_lowest(double x1, int m) {
  std::vector<double> x(static_cast<std::size_t>(m), m > 1 ? (1.0 - x1) / (m - 1) : 0.0);
  x[0] = m > 1 ? x1 : 1.0;
  return x;
}

}  // namespace detail

/// Consistency residual x1 - 1 / (1 + (M - 1) exp(-K(1) P(x) / x1)) of the
/// temperature ~ 1/N limit.
inline double limit_consistency_residual(const SpreadGrid& grid, const FrequencyArrival& arrival,
                                         double x1) {
  const int m = grid.size();
  const auto x = detail::limit_profile_from_lowest(x1, m);
  const double exponent = grid[0] * arrival(x) / x1;
  return x1 - 1.0 / (1.0 + (m - 1) * std::exp(-exponent));
}

/// Limit of the one-side spread distribution as N -> infinity with
/// temperature ~ N^(-u).
inline LimitProfile infinite_agent_limit(const SpreadGrid& grid, const FrequencyArrival& arrival,
                                         double u, int scan_points = 10'000) {
  const int m = grid.size();
  LimitProfile out;
  out.u = u;
  if (u < 1.0) {
    out.x.assign(static_cast<std::size_t>(m), 1.0 / m);
    return out;
  }
  if (u > 1.0 || m == 1) {
    out.x.assign(static_cast<std::size_t>(m), 0.0);
    out.x[0] = 1.0;
    return out;
  }

  // g(0+) < 0 and g(1) > 0; scan for every sign change, then bisect.
  const auto g = [&](double x1) { return limit_consistency_residual(grid, arrival, x1); };
  const int n = std::max(scan_points, 2);
  double prev_x = 0.0;
  double prev_g = -1.0;
  for (int k = 1; k <= n; ++k) {
    const double x = static_cast<double>(k) / n;
    const double gx = g(x);
    if ((gx < 0.0) != (prev_g < 0.0) || gx == 0.0) {
      double lo = prev_x, hi = x, g_lo = prev_g;
      if (gx == 0.0) {
        lo = hi = x;
      }
      for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        const double gm = mid > 0.0 ? g(mid) : -1.0;
        if ((gm < 0.0) == (g_lo < 0.0)) {
          lo = mid;
          g_lo = gm;
        } else {
          hi = mid;
        }
      }
      const double root = 0.5 * (lo + hi);
      if (out.lowest_roots.empty() || std::abs(root - out.lowest_roots.back()) > 1e-12) {
        out.lowest_roots.push_back(root);
      }
    }
    prev_x = x;
    prev_g = gx == 0.0 ? 1.0 : gx;
  }
  if (out.lowest_roots.empty()) {
    throw SolverError("no consistent lowest-spread probability found", g(0.5), n);
  }
  out.multiple_roots = out.lowest_roots.size() > 1;
  const double x1 = out.lowest_roots.front();
  out.x = detail::limit_profile_from_lowest(x1, m);
  out.residual = std::abs(g(x1));
  return out;
}

}  // namespace mmcoop
