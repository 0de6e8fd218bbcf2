/*
 * Copyright 2026 The vacbo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vacbo/acquisition.hpp"
#include "vacbo/budget.hpp"
#include "vacbo/common.hpp"
#include "vacbo/gp.hpp"
#include "vacbo/plant.hpp"

namespace vacbo::opt {

enum class Mode { vacbo, cbo_generic, safe_style };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::vacbo: return "vacbo";
    case Mode::cbo_generic: return "cbo_generic";
    case Mode::safe_style: return "safe_style";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "vacbo") return Mode::vacbo;
  if (s == "cbo_generic") return Mode::cbo_generic;
  if (s == "safe_style") return Mode::safe_style;
  throw ConfigError("unknown mode '" + s + "' (expected vacbo, cbo_generic or safe_style)");
}

/// Violation budget settings, one entry per constraint.
struct BudgetSettings {
  std::vector<double> total;
  std::vector<double> cap;
  std::vector<budget::Schedule> schedules;
};

struct OptimizerConfig {
  std::size_t horizon = 30;
  double epsilon = 0.01;
  int grid_resolution = 25;
  Mode mode = Mode::vacbo;
  std::uint64_t rng_seed = 0;
  bool multistart_refine = false;
  BudgetSettings budget;

  /// Budgets after applying the mode: cbo_generic releases everything
  /// (B = B^max = inf), safe_style allows nothing (B = 0).
  BudgetSettings effective_budget() const {
    BudgetSettings b = budget;
    if (mode == Mode::cbo_generic) {
      std::fill(b.total.begin(), b.total.end(), budget::kInf);
      std::fill(b.cap.begin(), b.cap.end(), budget::kInf);
    } else if (mode == Mode::safe_style) {
      std::fill(b.total.begin(), b.total.end(), 0.0);
    }
    return b;
  }

  void validate(std::size_t n_constraints) const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
    if (grid_resolution < 1) throw ConfigError("grid_resolution must be >= 1");
    if (budget.total.size() != n_constraints || budget.cap.size() != n_constraints ||
        budget.schedules.size() != n_constraints) {
      throw ConfigError("budget, budget_max and schedule need " +
                        std::to_string(n_constraints) + " entries (one per constraint)");
    }
  }
};

/// Everything that happened at one optimization step.
struct StepRecord {
  std::size_t t = 0;
  Vector context;
  Vector theta;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Vector constraints;
  std::vector<double> violation_costs;
  std::vector<double> step_budgets;
  std::size_t feasible_set_size = 0;
  bool fallback_used = false;
};

/// A step aborted by the plant; carries the record filled up to the
/// proposal.
class StepError : public plant::PlantError {
 public:
  StepError(const std::string& what, StepRecord partial)
      : plant::PlantError(what), partial_(std::move(partial)) {}
  const StepRecord& partial() const { return partial_; }

 private:
  StepRecord partial_;
};

struct OptimizerState {
  std::shared_ptr<const plant::TuningProblem> problem;
  OptimizerConfig config;
  std::optional<gp::GPModel> objective;
  std::vector<gp::GPModel> constraints;
  budget::BudgetState budget;
  Matrix grid;
  std::vector<std::string> warnings;
  bool safe_set_violated = false;

  std::size_t next_step() const { return budget.step; }
};

/// Result of solving the chance-constrained auxiliary problem at one step.
struct Proposal {
  Vector theta;
  Eigen::Index grid_index = 0;
  double acquisition = 0.0;
  double within_budget_prob = 0.0;
  double incumbent = 0.0;
  std::size_t feasible_set_size = 0;
  bool fallback_used = false;
  std::vector<double> step_budgets;
  std::vector<double> thresholds;
};

/// Evaluates the initial safe set (exact duplicates dropped) and fits one GP
/// for the objective and one per constraint.
inline OptimizerState initialize(std::shared_ptr<const plant::TuningProblem> problem,
                                 OptimizerConfig config) {
  if (!problem) throw ConfigError("initialize: null problem");
  problem->validate();
  const std::size_t n_con = problem->n_constraints();
  config.validate(n_con);

  std::vector<std::pair<Vector, Vector>> safe;
  for (const auto& pt : problem->initial_safe_set) {
    if (pt.first.size() != problem->n_theta || pt.second.size() != problem->n_z) {
      throw ConfigError(problem->name + ": initial safe point has wrong dimension");
    }
    const bool dup = std::any_of(safe.begin(), safe.end(), [&](const auto& s) {
      return s.first == pt.first && s.second == pt.second;
    });
    if (!dup) safe.push_back(pt);
  }
  if (safe.empty()) throw ConfigError(problem->name + ": initial safe set is empty");

  OptimizerState state;
  const auto n = static_cast<Eigen::Index>(safe.size());
  const Eigen::Index dim = problem->n_theta + problem->n_z;
  Matrix inputs(n, dim);
  Vector obj(n);
  Matrix con(n, static_cast<Eigen::Index>(n_con));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& [theta, z] = safe[static_cast<std::size_t>(k)];
    const plant::Evaluation e = problem->evaluate(theta, z);
    if (e.constraints.size() != static_cast<Eigen::Index>(n_con) || !std::isfinite(e.objective) ||
        !e.constraints.allFinite()) {
      throw plant::PlantError(problem->name + ": bad evaluation of initial safe point " +
                              std::to_string(k));
    }
    inputs.row(k) = augment(theta, z).transpose();
    obj[k] = e.objective;
    con.row(k) = e.constraints.transpose();
    for (std::size_t i = 0; i < n_con; ++i) {
      const double g = e.constraints[static_cast<Eigen::Index>(i)];
      if (g > 0.0) {
        std::ostringstream msg;
        msg << "initial safe point " << k << " violates constraint " << i << " (g = " << g
            << "); it is kept, but the safe-set assumption does not hold";
        state.warnings.push_back(msg.str());
        state.safe_set_violated = true;
      }
    }
  }

  state.objective = gp::GPModel::fit(problem->objective_kernel, obj.mean(), inputs, obj);
  for (std::size_t i = 0; i < n_con; ++i) {
    state.constraints.push_back(gp::GPModel::fit(problem->constraint_kernels[i], 0.0, inputs,
                                                 con.col(static_cast<Eigen::Index>(i))));
  }
  const BudgetSettings eff = config.effective_budget();
  state.budget = budget::BudgetState::create(eff.total, eff.cap, eff.schedules, config.horizon);
  state.grid = plant::make_grid(problem->theta_lo, problem->theta_hi, config.grid_resolution);
  state.problem = std::move(problem);
  state.config = std::move(config);
  return state;
}

namespace detail {

struct CandidateScore {
  double cpei = 0.0;
  double within_budget = 0.0;
};

inline CandidateScore score(const OptimizerState& state, const Vector& theta,
                            const Vector& context, double incumbent,
                            const std::vector<double>& thresholds) {
  const Vector x = augment(theta, context);
  CandidateScore s;
  double pf = 1.0;
  double pb = 1.0;
  for (std::size_t i = 0; i < state.constraints.size(); ++i) {
    const gp::Posterior g = state.constraints[i].posterior(x);
    pf *= acq::feasibility_prob(g.mean, g.std, 0.0);
    pb *= acq::feasibility_prob(g.mean, g.std, thresholds[i]);
  }
  const gp::Posterior f = state.objective->posterior(x);
  s.cpei = pf * acq::expected_improvement(f.mean, f.std, incumbent);
  s.within_budget = pb;
  return s;
}

// Coordinate search around a grid optimum with halving steps. Only moves
// that stay inside the box and keep the chance constraint are accepted.
inline Vector refine(const OptimizerState& state, Vector theta, const Vector& context,
                     double incumbent, const std::vector<double>& thresholds,
                     CandidateScore& best) {
  const plant::TuningProblem& p = *state.problem;
  const double floor_prob = 1.0 - state.config.epsilon;
  const int res = std::max(state.config.grid_resolution, 2);
  Vector step = (p.theta_hi - p.theta_lo) / static_cast<double>(2 * (res - 1));
  for (int round = 0; round < 6; ++round) {
    bool moved = true;
    for (int sweep = 0; moved && sweep < 20; ++sweep) {
      moved = false;
      for (Eigen::Index d = 0; d < theta.size(); ++d) {
        for (double sign : {-1.0, 1.0}) {
          Vector cand = theta;
          cand[d] = std::clamp(cand[d] + sign * step[d], p.theta_lo[d], p.theta_hi[d]);
          if (cand[d] == theta[d]) continue;
          const CandidateScore s = score(state, cand, context, incumbent, thresholds);
          if (s.within_budget >= floor_prob && s.cpei > best.cpei) {
            theta = cand;
            best = s;
            moved = true;
          }
        }
      }
    }
    step /= 2.0;
  }
  return theta;
}

}  // namespace detail

/// Maximizes CPEI over the grid subject to
/// prod_i P(c_i <= B_{i,t}) >= 1 - epsilon. When no grid point passes, falls
/// back to the point most likely to stay within budget.
inline Proposal propose(const OptimizerState& state, const Vector& context) {
  const plant::TuningProblem& p = *state.problem;
  if (context.size() != p.n_z) {
    throw InputShapeError("context has dimension " + std::to_string(context.size()) +
                          ", problem expects " + std::to_string(p.n_z));
  }
  Proposal out;
  const std::size_t n_con = state.constraints.size();
  for (std::size_t i = 0; i < n_con; ++i) {
    out.step_budgets.push_back(budget::step_budget(state.budget, i));
    out.thresholds.push_back(p.cost_fns[i].inverse(out.step_budgets.back()));
  }
  const acq::ProxyIncumbent inc = acq::proxy_min(*state.objective, context, state.grid);
  out.incumbent = inc.value;

  const double floor_prob = 1.0 - state.config.epsilon;
  Eigen::Index best = -1;
  Eigen::Index safest = 0;
  detail::CandidateScore best_score{-1.0, 0.0};
  double safest_prob = -1.0;
  Vector theta(p.n_theta);
  for (Eigen::Index r = 0; r < state.grid.rows(); ++r) {
    theta = state.grid.row(r).transpose();
    const detail::CandidateScore s =
        detail::score(state, theta, context, inc.value, out.thresholds);
    if (s.within_budget > safest_prob) {
      safest_prob = s.within_budget;
      safest = r;
    }
    if (s.within_budget >= floor_prob) {
      ++out.feasible_set_size;
      if (s.cpei > best_score.cpei) {
        best_score = s;
        best = r;
      }
    }
  }

  if (best < 0) {
    out.fallback_used = true;
    out.grid_index = safest;
    out.theta = state.grid.row(safest).transpose();
    const detail::CandidateScore s =
        detail::score(state, out.theta, context, inc.value, out.thresholds);
    out.acquisition = s.cpei;
    out.within_budget_prob = s.within_budget;
    return out;
  }
  out.grid_index = best;
  out.theta = state.grid.row(best).transpose();
  if (state.config.multistart_refine) {
    out.theta = detail::refine(state, out.theta, context, inc.value, out.thresholds, best_score);
  }
  out.acquisition = best_score.cpei;
  out.within_budget_prob = best_score.within_budget;
  return out;
}

/// Grid rows passing the chance constraint at the current step (1 = admitted).
inline std::vector<char> admissible_mask(const OptimizerState& state, const Vector& context) {
  const plant::TuningProblem& p = *state.problem;
  std::vector<double> thresholds;
  for (std::size_t i = 0; i < state.constraints.size(); ++i) {
    thresholds.push_back(p.cost_fns[i].inverse(budget::step_budget(state.budget, i)));
  }
  const double floor_prob = 1.0 - state.config.epsilon;
  std::vector<char> mask(static_cast<std::size_t>(state.grid.rows()), 0);
  for (Eigen::Index r = 0; r < state.grid.rows(); ++r) {
    const detail::CandidateScore s =
        detail::score(state, state.grid.row(r).transpose(), context, 0.0, thresholds);
    mask[static_cast<std::size_t>(r)] = s.within_budget >= floor_prob;
  }
  return mask;
}

/// One pass of the loop: propose, run the plant, charge the budget, update
/// the models.
inline std::pair<OptimizerState, StepRecord> step(const OptimizerState& state,
                                                  const Vector& context) {
  if (state.budget.step > state.config.horizon) {
    throw ContractError("step called after the horizon was exhausted");
  }
  const plant::TuningProblem& p = *state.problem;
  const Proposal prop = propose(state, context);

  StepRecord rec;
  rec.t = state.budget.step;
  rec.context = context;
  rec.theta = prop.theta;
  rec.step_budgets = prop.step_budgets;
  rec.feasible_set_size = prop.feasible_set_size;
  rec.fallback_used = prop.fallback_used;

  plant::Evaluation e;
  try {
    e = p.evaluate(prop.theta, context);
  } catch (const std::exception& ex) {
    throw StepError("plant evaluation failed at step " + std::to_string(rec.t) + ": " + ex.what(),
                    rec);
  }
  if (!std::isfinite(e.objective) || e.constraints.size() != static_cast<Eigen::Index>(p.n_constraints()) ||
      !e.constraints.allFinite()) {
    throw StepError("plant returned a malformed or non-finite reading at step " +
                        std::to_string(rec.t),
                    rec);
  }
  rec.objective = e.objective;
  rec.constraints = e.constraints;
  for (std::size_t i = 0; i < p.n_constraints(); ++i) {
    rec.violation_costs.push_back(
        budget::violation_cost(p.cost_fns[i], e.constraints[static_cast<Eigen::Index>(i)]));
  }

  OptimizerState next = state;
  next.budget = budget::record_violation(state.budget, rec.violation_costs);
  const Vector x = augment(prop.theta, context);
  next.objective = state.objective->add_observation(x, e.objective);
  for (std::size_t i = 0; i < p.n_constraints(); ++i) {
    next.constraints[i] =
        state.constraints[i].add_observation(x, e.constraints[static_cast<Eigen::Index>(i)]);
  }
  return {std::move(next), std::move(rec)};
}

/// Aggregate metrics of a trace.
struct RunSummary {
  bool defined = false;
  std::size_t steps = 0;
  double mean_objective = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> best_feasible_objective;
  std::vector<double> max_violation;
  std::vector<double> max_step_cost;
  std::vector<double> cumulative_cost;
  bool coverage_holds = true;
  double implied_delta = 0.0;
  std::size_t fallback_count = 0;
};

/// Recomputes the summary from the step records alone.
inline RunSummary summarize(const std::vector<StepRecord>& steps, const BudgetSettings& budget,
                            double epsilon, std::size_t horizon) {
  RunSummary s;
  const std::size_t n_con = budget.total.size();
  s.steps = steps.size();
  s.defined = !steps.empty();
  s.max_violation.assign(n_con, 0.0);
  s.max_step_cost.assign(n_con, 0.0);
  s.cumulative_cost.assign(n_con, 0.0);
  s.implied_delta = budget::implied_delta(epsilon, horizon);
  double sum = 0.0;
  for (const StepRecord& r : steps) {
    sum += r.objective;
    bool feasible = true;
    for (std::size_t i = 0; i < n_con; ++i) {
      const double g = r.constraints[static_cast<Eigen::Index>(i)];
      if (g > 0.0) feasible = false;
      s.max_violation[i] = std::max(s.max_violation[i], std::max(g, 0.0));
      s.max_step_cost[i] = std::max(s.max_step_cost[i], r.violation_costs[i]);
      s.cumulative_cost[i] += r.violation_costs[i];
    }
    if (feasible && (!s.best_feasible_objective || r.objective < *s.best_feasible_objective)) {
      s.best_feasible_objective = r.objective;
    }
    if (r.fallback_used) ++s.fallback_count;
  }
  if (s.defined) s.mean_objective = sum / static_cast<double>(steps.size());
  for (std::size_t i = 0; i < n_con; ++i) {
    if (!(s.max_step_cost[i] <= budget.cap[i]) || !(s.cumulative_cost[i] <= budget.total[i])) {
      s.coverage_holds = false;
    }
  }
  return s;
}

struct RunResult {
  std::string problem;
  OptimizerConfig config;
  BudgetSettings effective_budget;
  std::vector<StepRecord> steps;
  RunSummary summary;
  std::vector<std::string> warnings;
  bool safe_set_violated = false;
};

inline constexpr std::uint64_t kContextStream = 1;
inline constexpr std::uint64_t kPlantStream = 2;

/// Runs the full loop for config.horizon steps. Context noise comes from a
/// stream split off config.rng_seed.
inline RunResult run(const plant::TuningProblem& problem, const OptimizerConfig& config,
                     const plant::ContextSource& contexts) {
  contexts.validate(problem.n_z);
  if (contexts.capacity() < config.horizon) {
    throw ConfigError("context source yields " + std::to_string(contexts.capacity()) +
                      " contexts but the horizon is " + std::to_string(config.horizon));
  }
  OptimizerState state = initialize(std::make_shared<const plant::TuningProblem>(problem), config);
  RunResult result;
  result.problem = problem.name;
  result.config = config;
  result.effective_budget = config.effective_budget();
  result.warnings = state.warnings;
  result.safe_set_violated = state.safe_set_violated;

  std::mt19937_64 rng(derive_seed(config.rng_seed, kContextStream));
  for (std::size_t t = 0; t < config.horizon; ++t) {
    const Vector z = plant::next_context(contexts, t, rng, problem.context_lo, problem.context_hi);
    auto [next, rec] = step(state, z);
    state = std::move(next);
    result.steps.push_back(std::move(rec));
  }
  result.summary =
      summarize(result.steps, result.effective_budget, config.epsilon, config.horizon);
  return result;
}

}  // namespace vacbo::opt
