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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vacbo/common.hpp"

namespace vacbo::budget {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class CostKind { quadratic, linear, power };

inline std::string to_string(CostKind k) {
  switch (k) {
    case CostKind::quadratic: return "quadratic";
    case CostKind::linear: return "linear";
    case CostKind::power: return "power";
  }
  return "?";
}

/// Price of a constraint violation magnitude s >= 0: scale * s^p, with
/// p = 2 (quadratic), 1 (linear) or a user exponent >= 1 (power).
///
/// Every family has c(0) = 0, is non-decreasing and continuous, and has a
/// closed-form generalized inverse.
struct ViolationCostFn {
  CostKind kind = CostKind::quadratic;
  double scale = 1.0;
  double exponent = 2.0;

  static ViolationCostFn quadratic(double scale = 1.0) {
    return {CostKind::quadratic, scale, 2.0};
  }
  static ViolationCostFn linear(double scale = 1.0) {
    return {CostKind::linear, scale, 1.0};
  }
  static ViolationCostFn power(double exponent, double scale = 1.0) {
    return {CostKind::power, scale, exponent};
  }

  double effective_exponent() const {
    switch (kind) {
      case CostKind::quadratic: return 2.0;
      case CostKind::linear: return 1.0;
      case CostKind::power: return exponent;
    }
    return exponent;
  }

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw ConfigError("violation cost scale must be positive and finite");
    }
    if (kind == CostKind::power && (!(exponent >= 1.0) || !std::isfinite(exponent))) {
      throw ConfigError("power violation cost needs a finite exponent >= 1");
    }
  }

  /// c(s) for s >= 0.
  double operator()(double s) const {
    if (s <= 0.0) return 0.0;
    switch (kind) {
      case CostKind::quadratic: return scale * s * s;
      case CostKind::linear: return scale * s;
      case CostKind::power: return scale * std::pow(s, exponent);
    }
    return 0.0;
  }

  /// sup{ r >= 0 : c(r) <= b }
  double inverse(double b) const {
    if (b == kInf) return kInf;
    if (!(b > 0.0)) return 0.0;
    switch (kind) {
      case CostKind::quadratic: return std::sqrt(b / scale);
      case CostKind::linear: return b / scale;
      case CostKind::power: return std::pow(b / scale, 1.0 / exponent);
    }
    return 0.0;
  }
};

/// c([g]^+)
inline double violation_cost(const ViolationCostFn& fn, double g_value) {
  return fn(std::max(0.0, g_value));
}

inline double inverse_cost(const ViolationCostFn& fn, double budget) {
  if (budget < 0.0) {
    throw ContractError("inverse_cost needs a non-negative budget");
  }
  return fn.inverse(budget);
}

/// Cumulative fraction S_t of the total budget released by step t.
///
/// Affine a + b t / T by default; an explicit per-step table is accepted as
/// long as it is non-negative, non-decreasing and ends at 1.
struct Schedule {
  double a = 0.0;
  double b = 1.0;
  std::vector<double> table;

  static Schedule affine(double a, double b) { return {a, b, {}}; }
  static Schedule custom(std::vector<double> values) {
    return {0.0, 0.0, std::move(values)};
  }

  bool is_custom() const { return !table.empty(); }

  /// S_t, capped at 1 and exactly 1 at t = T.
  double at(std::size_t t, std::size_t horizon) const {
    if (t == horizon) return 1.0;
    if (is_custom()) return std::min(table.at(t - 1), 1.0);
    return std::min(a + b * static_cast<double>(t) / static_cast<double>(horizon), 1.0);
  }

  void validate(std::size_t horizon) const {
    if (is_custom()) {
      if (table.size() != horizon) {
        throw ConfigError("schedule table has " + std::to_string(table.size()) +
                          " entries, expected one per step (" +
                          std::to_string(horizon) + ")");
      }
      double prev = 0.0;
      for (double s : table) {
        if (!(s >= prev) || !std::isfinite(s)) {
          throw ConfigError("schedule table must be non-negative and non-decreasing");
        }
        prev = s;
      }
      if (std::abs(table.back() - 1.0) > 1e-12) {
        throw ConfigError("schedule table must end at 1");
      }
      return;
    }
    if (!(a >= 0.0) || !(b >= 0.0) || std::abs(a + b - 1.0) > 1e-12) {
      throw ConfigError("affine schedule needs a, b >= 0 with a + b = 1");
    }
  }
};

/// Per-constraint budget ledger for one run.
struct BudgetState {
  std::vector<double> total_budget;
  std::vector<double> per_step_cap;
  std::vector<Schedule> schedules;
  std::vector<double> spent;
  std::size_t horizon = 1;
  std::size_t step = 1;

  static BudgetState create(std::vector<double> total, std::vector<double> cap,
                            std::vector<Schedule> schedules, std::size_t horizon) {
    const std::size_t n = total.size();
    if (cap.size() != n || schedules.size() != n) {
      throw ConfigError("budget, cap and schedule lists must have one entry per constraint");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(total[i] >= 0.0)) throw ConfigError("budget must be >= 0");
      if (!(cap[i] >= 0.0)) throw ConfigError("per-step cap must be >= 0");
      if (horizon > 0) schedules[i].validate(horizon);
    }
    BudgetState s;
    s.total_budget = std::move(total);
    s.per_step_cap = std::move(cap);
    s.schedules = std::move(schedules);
    s.spent.assign(n, 0.0);
    s.horizon = horizon;
    s.step = 1;
    return s;
  }

  std::size_t size() const { return total_budget.size(); }
};

/// B_{i,t} = min{ max{ B_i S_{i,t} - spent_i, 0 }, B_i^max }
inline double step_budget(const BudgetState& state, std::size_t i) {
  if (state.step < 1 || state.step > state.horizon) {
    throw ContractError("step_budget called outside [1, T]");
  }
  const double s = state.schedules.at(i).at(state.step, state.horizon);
  const double B = state.total_budget.at(i);
  // inf * 0 would be NaN; an unreleased infinite budget is still zero.
  const double released = (B == kInf) ? (s > 0.0 ? kInf : 0.0) : B * s;
  const double spent = state.spent.at(i);
  double remaining = std::max(released - spent, 0.0);
  // Rounding in the subtraction must not let spent + remaining exceed released.
  while (remaining > 0.0 && spent + remaining > released) {
    remaining = std::nextafter(remaining, 0.0);
  }
  return std::min(remaining, state.per_step_cap.at(i));
}

/// Adds one step's realized costs and advances the step counter.
inline BudgetState record_violation(BudgetState state,
                                    std::span<const double> costs) {
  if (costs.size() != state.size()) {
    throw ContractError("record_violation expects one cost per constraint");
  }
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!(costs[i] >= 0.0)) {
      throw ContractError("violation cost " + std::to_string(i) +
                          " is negative or NaN");
    }
  }
  for (std::size_t i = 0; i < costs.size(); ++i) {
    state.spent[i] += costs[i];
  }
  ++state.step;
  return state;
}

/// The g-space level c_i^{-1}(B_{i,t}) used by the chance constraint.
inline double chance_threshold(const ViolationCostFn& fn,
                               const BudgetState& state, std::size_t i) {
  return fn.inverse(step_budget(state, i));
}

/// delta = 1 - (1 - eps)^T for a constant per-step epsilon.
inline double implied_delta(double epsilon, std::size_t horizon) {
  return 1.0 - std::pow(1.0 - epsilon, static_cast<double>(horizon));
}

}  // namespace vacbo::budget
