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

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "vacbo/common.hpp"
#include "vacbo/gp.hpp"
#include "vacbo/normal.hpp"

namespace vacbo::acq {

/// Lowest posterior objective mean over the candidate grid at one context.
struct ProxyIncumbent {
  double value = 0.0;
  Vector argmin_theta;
  Eigen::Index grid_index = 0;
};

/// Everything needed to score one candidate theta at one context.
struct AcquisitionQuery {
  Vector theta;
  Vector context;
  const gp::GPModel& objective_model;
  std::span<const gp::GPModel> constraint_models;
};

/// Grid rows are candidate thetas. Ties go to the lowest row index.
inline ProxyIncumbent proxy_min(const gp::GPModel& objective_model,
                                const Vector& context, const Matrix& grid) {
  if (grid.rows() == 0) {
    throw ConfigError("proxy_min needs a non-empty candidate grid");
  }
  ProxyIncumbent best;
  best.value = std::numeric_limits<double>::infinity();
  Vector theta(grid.cols());
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    theta = grid.row(r).transpose();
    const double m = objective_model.mean(augment(theta, context));
    if (m < best.value) {
      best.value = m;
      best.grid_index = r;
    }
  }
  best.argmin_theta = grid.row(best.grid_index).transpose();
  return best;
}

/// Closed-form E[max(0, incumbent - Y)] for Y ~ N(mean, std^2).
inline double expected_improvement(double mean, double std, double incumbent) {
  const double delta = incumbent - mean;
  if (!(std > 0.0)) {
    return delta > 0.0 ? delta : 0.0;
  }
  const double w = delta / std;
  const double ei = delta * normal_cdf(w) + std * normal_pdf(w);
  return ei > 0.0 ? ei : 0.0;
}

/// P(g <= threshold) for g ~ N(mean, std^2).
inline double feasibility_prob(double mean, double std, double threshold) {
  if (threshold == std::numeric_limits<double>::infinity()) return 1.0;
  if (!(std > 0.0)) return mean <= threshold ? 1.0 : 0.0;
  return normal_cdf((threshold - mean) / std);
}

inline double feasibility_prob(const gp::GPModel& constraint_model,
                               const Vector& x, double threshold) {
  if (threshold == std::numeric_limits<double>::infinity()) return 1.0;
  const gp::Posterior p = constraint_model.posterior(x);
  return feasibility_prob(p.mean, p.std, threshold);
}

/// Constrained proxy expected improvement: product of P(g_i <= 0) times EI
/// against the context's proxy incumbent.
inline double cpei(const AcquisitionQuery& query,
                   const ProxyIncumbent& incumbent) {
  const Vector x = augment(query.theta, query.context);
  double pf = 1.0;
  for (const gp::GPModel& g : query.constraint_models) {
    pf *= feasibility_prob(g, x, 0.0);
  }
  const gp::Posterior p = query.objective_model.posterior(x);
  return pf * expected_improvement(p.mean, p.std, incumbent.value);
}

}  // namespace vacbo::acq
