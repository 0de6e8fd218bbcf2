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

#include <Eigen/Cholesky>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vacbo/budget.hpp"
#include "vacbo/common.hpp"
#include "vacbo/gp.hpp"

namespace vacbo::plant {

/// One steady-state read of the plant.
struct Evaluation {
  double objective = 0.0;
  Vector constraints;
};

/// Raised when the plant cannot produce a reading.
class PlantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Context sources

enum class ContextKind { recurring, trace, constant };

inline std::string to_string(ContextKind k) {
  switch (k) {
    case ContextKind::recurring: return "recurring";
    case ContextKind::trace: return "trace";
    case ContextKind::constant: return "constant";
  }
  return "?";
}

struct ContextSource {
  ContextKind kind = ContextKind::constant;
  // recurring
  std::vector<Vector> base;
  Vector noise_std;
  std::size_t period = 0;  // 0 means base.size()
  // trace
  std::string trace_path;
  std::vector<std::string> columns;
  std::vector<double> times;
  std::vector<Vector> rows;
  // constant
  Vector fixed;

  static ContextSource constant(Vector z) {
    ContextSource s;
    s.kind = ContextKind::constant;
    s.fixed = std::move(z);
    return s;
  }

  static ContextSource recurring(std::vector<Vector> base, Vector noise_std,
                                 std::size_t period = 0) {
    ContextSource s;
    s.kind = ContextKind::recurring;
    s.base = std::move(base);
    s.noise_std = std::move(noise_std);
    s.period = period;
    return s;
  }

  std::size_t effective_period() const {
    return period == 0 ? base.size() : period;
  }

  /// Number of contexts this source can yield (max for unbounded kinds).
  std::size_t capacity() const {
    return kind == ContextKind::trace ? rows.size()
                                      : std::numeric_limits<std::size_t>::max();
  }

  void validate(Eigen::Index n_z) const {
    auto check = [n_z](const Vector& v, const char* what) {
      if (v.size() != n_z) {
        throw ConfigError(std::string(what) + " has dimension " +
                          std::to_string(v.size()) + ", problem expects " +
                          std::to_string(n_z));
      }
    };
    switch (kind) {
      case ContextKind::constant:
        check(fixed, "constant context");
        break;
      case ContextKind::recurring:
        if (base.empty()) throw ConfigError("recurring context list is empty");
        for (const Vector& b : base) check(b, "recurring context entry");
        check(noise_std, "recurring noise_std");
        for (Eigen::Index d = 0; d < noise_std.size(); ++d) {
          if (!(noise_std[d] >= 0.0)) throw ConfigError("noise_std must be >= 0");
        }
        if (effective_period() > base.size()) {
          throw ConfigError("recurring period exceeds the context list length");
        }
        break;
      case ContextKind::trace:
        for (const Vector& r : rows) check(r, "trace row");
        break;
    }
  }
};

namespace detail {

inline double parse_double(std::string_view text, std::size_t line,
                           const std::string& path) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError(path + ":" + std::to_string(line) + ": cannot parse finite number '" +
                      std::string(text) + "'");
  }
  return value;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace detail

/// Reads a context trace CSV: a header row naming the columns (default
/// `time,temp,humidity`) followed by one row per optimization step.
/// `columns` selects which named columns form the context, in order.
inline ContextSource load_trace_csv(const std::string& path,
                                    std::vector<std::string> columns = {"temp", "humidity"}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open context trace '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty trace file");
  const auto header = detail::split_csv(line);
  std::vector<std::size_t> col_index;
  std::optional<std::size_t> time_index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (detail::trim(header[c]) == "time") time_index = c;
  }
  if (!time_index) throw ConfigError(path + ":1: trace header has no 'time' column");
  for (const std::string& name : columns) {
    auto it = std::find_if(header.begin(), header.end(),
                           [&](std::string_view h) { return detail::trim(h) == name; });
    if (it == header.end()) {
      throw ConfigError(path + ":1: trace header has no column '" + name + "'");
    }
    col_index.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  ContextSource src;
  src.kind = ContextKind::trace;
  src.trace_path = path;
  src.columns = std::move(columns);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    const double time = detail::parse_double(fields[*time_index], lineno, path);
    if (!src.times.empty() && !(time > src.times.back())) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": time column must be strictly increasing");
    }
    Vector z(static_cast<Eigen::Index>(col_index.size()));
    for (std::size_t k = 0; k < col_index.size(); ++k) {
      z[static_cast<Eigen::Index>(k)] = detail::parse_double(fields[col_index[k]], lineno, path);
    }
    src.times.push_back(time);
    src.rows.push_back(std::move(z));
  }
  return src;
}

/// Context for 0-based step index `t`, clamped into [lo, hi].
/// Recurring sources draw one Gaussian per dimension every call, so the
/// rng stream advances identically whatever the noise levels are.
inline Vector next_context(const ContextSource& source, std::size_t t,
                           std::mt19937_64& rng, const Vector& lo, const Vector& hi) {
  Vector z;
  switch (source.kind) {
    case ContextKind::constant:
      z = source.fixed;
      break;
    case ContextKind::recurring: {
      z = source.base.at(t % source.effective_period());
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Eigen::Index d = 0; d < z.size(); ++d) {
        z[d] += source.noise_std[d] * normal(rng);
      }
      break;
    }
    case ContextKind::trace:
      if (t >= source.rows.size()) {
        throw ConfigError("context trace exhausted at step " + std::to_string(t + 1) +
                          " (" + std::to_string(source.rows.size()) +
                          " rows); supply a longer trace or a smaller horizon");
      }
      z = source.rows[t];
      break;
  }
  if (lo.size() == z.size() && hi.size() == z.size()) {
    z = z.cwiseMax(lo).cwiseMin(hi);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Problems

struct KnownOptimum {
  bool found = false;
  Vector theta;
  double value = std::numeric_limits<double>::quiet_NaN();
};

/// A contextual constrained tuning task: box domain, black-box plant,
/// violation pricing, initial safe set and default GP hyperparameters.
struct TuningProblem {
  std::string name;
  Eigen::Index n_theta = 0;
  Eigen::Index n_z = 0;
  Vector theta_lo, theta_hi;
  Vector context_lo, context_hi;
  std::function<Evaluation(const Vector& theta, const Vector& z)> evaluate;
  std::vector<std::pair<Vector, Vector>> initial_safe_set;
  std::vector<budget::ViolationCostFn> cost_fns;
  gp::KernelSpec objective_kernel;
  std::vector<gp::KernelSpec> constraint_kernels;
  ContextSource default_context;
  /// Per-context best feasible grid point at `oracle_resolution` points per
  /// theta dimension. Benchmarks only.
  std::function<KnownOptimum(const Vector& z)> known_optimum;
  int oracle_resolution = 0;
  /// Grid resolution on which the plant is natively defined (0: continuous).
  int native_resolution = 0;
  std::uint64_t seed = 0;
  double noise_std = 0.0;

  std::size_t n_constraints() const { return cost_fns.size(); }

  void validate() const {
    if (n_theta <= 0) throw ConfigError(name + ": needs at least one control parameter");
    if (theta_lo.size() != n_theta || theta_hi.size() != n_theta) {
      throw ConfigError(name + ": theta box dimension mismatch");
    }
    if (((theta_hi - theta_lo).array() < 0.0).any()) {
      throw ConfigError(name + ": theta box has hi < lo");
    }
    if (initial_safe_set.empty()) {
      throw ConfigError(name + ": initial safe set is empty");
    }
    if (constraint_kernels.size() != cost_fns.size()) {
      throw ConfigError(name + ": need one constraint kernel per cost function");
    }
    for (const auto& fn : cost_fns) fn.validate();
    objective_kernel.validate();
    if (objective_kernel.dim() != n_theta + n_z) {
      throw ConfigError(name + ": objective kernel dimension must be n_theta + n_z");
    }
    for (const auto& k : constraint_kernels) {
      k.validate();
      if (k.dim() != n_theta + n_z) {
        throw ConfigError(name + ": constraint kernel dimension must be n_theta + n_z");
      }
    }
  }
};

inline double grid_coordinate(double lo, double hi, int resolution, int k) {
  if (resolution <= 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(resolution - 1);
}

/// Full tensor grid on the box, one row per point, last dimension fastest.
inline Matrix make_grid(const Vector& lo, const Vector& hi, int resolution) {
  if (resolution < 1) throw ConfigError("grid resolution must be >= 1");
  const Eigen::Index dims = lo.size();
  Eigen::Index count = 1;
  for (Eigen::Index d = 0; d < dims; ++d) count *= resolution;
  Matrix grid(count, dims);
  std::vector<int> idx(static_cast<std::size_t>(dims), 0);
  for (Eigen::Index r = 0; r < count; ++r) {
    for (Eigen::Index d = 0; d < dims; ++d) {
      grid(r, d) = grid_coordinate(lo[d], hi[d], resolution, idx[static_cast<std::size_t>(d)]);
    }
    for (Eigen::Index d = dims - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < resolution) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return grid;
}

/// Exhaustive scan for the best feasible grid point at context z.
inline KnownOptimum grid_optimum(const TuningProblem& problem, const Vector& z,
                                 int resolution) {
  const Matrix grid = make_grid(problem.theta_lo, problem.theta_hi, resolution);
  KnownOptimum best;
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    const Vector theta = grid.row(r).transpose();
    const Evaluation e = problem.evaluate(theta, z);
    if ((e.constraints.array() > 0.0).any()) continue;
    if (!best.found || e.objective < best.value) {
      best.found = true;
      best.value = e.objective;
      best.theta = theta;
    }
  }
  return best;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Standard normal that is a pure function of (seed, theta, z, channel).
inline double hashed_normal(std::uint64_t seed, const Vector& theta, const Vector& z,
                            std::uint64_t channel) {
  std::uint64_t h = splitmix64(seed ^ (channel * 0x632be59bd9b4e019ULL));
  for (Eigen::Index d = 0; d < theta.size(); ++d) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(theta[d]));
  for (Eigen::Index d = 0; d < z.size(); ++d) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(z[d]));
  const std::uint64_t h2 = splitmix64(h);
  const double u1 = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

inline void add_observation_noise(TuningProblem& p) {
  if (!(p.noise_std > 0.0)) return;
  auto clean = p.evaluate;
  const std::uint64_t seed = p.seed;
  const double sd = p.noise_std;
  p.evaluate = [clean, seed, sd](const Vector& theta, const Vector& z) {
    Evaluation e = clean(theta, z);
    e.objective += sd * hashed_normal(seed, theta, z, 0);
    for (Eigen::Index i = 0; i < e.constraints.size(); ++i) {
      e.constraints[i] += sd * hashed_normal(seed, theta, z, static_cast<std::uint64_t>(i) + 1);
    }
    return e;
  };
}

inline void check_input(const TuningProblem& p, const Vector& theta, const Vector& z) {
  if (theta.size() != p.n_theta || z.size() != p.n_z) {
    throw InputShapeError(p.name + ": evaluate expects " + std::to_string(p.n_theta) +
                          " control and " + std::to_string(p.n_z) + " context values");
  }
  if (!theta.allFinite() || !z.allFinite()) {
    throw PlantError(p.name + ": non-finite set-point or context");
  }
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

}  // namespace detail

struct ProblemOptions {
  std::uint64_t seed = 0;
  double noise_std = 0.0;
};

/// Analytic stand-in for a vapor-compression cycle.
///
/// theta = (expansion valve [counts], indoor fan [rpm], outdoor fan [rpm])
/// on [200,350] x [300,450] x [500,850]; z = (ambient temperature [K],
/// ambient humidity [fraction]). With u_k the set-points normalized to [0,1],
/// dT = T_amb - 300 and dH = H - 0.5:
///
///   power = 20 + 0.8 dT + 4 dH + 6 (u1 - a1)^2 + 5 (u2 - a2)^2 + 4 (u3 - a3)^2
///           a1 = 0.45 + 0.02 dT, a2 = 0.40 + 0.3 dH, a3 = 0.45 + 0.03 dT
///   T_dis = 321 + 1.2 dT + 5 dH + 16 (1 - u1)^2 + 2 (1 - u2)^2 + 5 (1 - u3)^2
///   g     = T_dis - 333
///
/// The safe start (340, 440, 840) is feasible over the whole context range
/// [295,305] x [0.3,0.7] but draws roughly 20% more power than the
/// per-context optimum; hot contexts push the unconstrained optimum across
/// the discharge limit.
inline TuningProblem vcs_surrogate(ProblemOptions opts = {}) {
  TuningProblem p;
  p.name = "vcs-surrogate";
  p.n_theta = 3;
  p.n_z = 2;
  p.theta_lo = Vector{{200.0, 300.0, 500.0}};
  p.theta_hi = Vector{{350.0, 450.0, 850.0}};
  p.context_lo = Vector{{295.0, 0.3}};
  p.context_hi = Vector{{305.0, 0.7}};
  p.seed = opts.seed;
  p.noise_std = opts.noise_std;
  const std::string name = p.name;
  p.evaluate = [name](const Vector& theta, const Vector& z) {
    if (theta.size() != 3 || z.size() != 2) {
      throw InputShapeError(name + ": evaluate expects 3 control and 2 context values");
    }
    if (!theta.allFinite() || !z.allFinite()) throw PlantError(name + ": non-finite input");
    const double u1 = (theta[0] - 200.0) / 150.0;
    const double u2 = (theta[1] - 300.0) / 150.0;
    const double u3 = (theta[2] - 500.0) / 350.0;
    const double dT = z[0] - 300.0;
    const double dH = z[1] - 0.5;
    const double a1 = 0.45 + 0.02 * dT;
    const double a2 = 0.40 + 0.3 * dH;
    const double a3 = 0.45 + 0.03 * dT;
    Evaluation e;
    e.objective = 20.0 + 0.8 * dT + 4.0 * dH + 6.0 * (u1 - a1) * (u1 - a1) +
                  5.0 * (u2 - a2) * (u2 - a2) + 4.0 * (u3 - a3) * (u3 - a3);
    const double t_dis = 321.0 + 1.2 * dT + 5.0 * dH + 16.0 * (1.0 - u1) * (1.0 - u1) +
                         2.0 * (1.0 - u2) * (1.0 - u2) + 5.0 * (1.0 - u3) * (1.0 - u3);
    e.constraints = Vector::Constant(1, t_dis - 333.0);
    return e;
  };
  detail::add_observation_noise(p);
  p.initial_safe_set = {{Vector{{340.0, 440.0, 840.0}}, Vector{{300.0, 0.5}}}};
  p.cost_fns = {budget::ViolationCostFn::quadratic()};
  p.objective_kernel =
      gp::KernelSpec::with_default_noise(15.0, Vector{{50.0, 60.0, 70.0, 1.0, 0.06}});
  p.constraint_kernels = {
      gp::KernelSpec::with_default_noise(2.0, Vector{{20.0, 24.0, 28.0, 1.0, 0.06}})};
  p.default_context = ContextSource::recurring(
      {Vector{{298.0, 0.45}}, Vector{{301.0, 0.55}}, Vector{{303.0, 0.50}},
       Vector{{299.0, 0.60}}},
      Vector{{0.2, 0.01}});
  p.oracle_resolution = 41;
  return p;
}

/// Two-basin benchmark on theta in [0,1]^2 with a scalar context in [0,1].
///
/// The safe start (0.2, 0.5) sits in a shallow left bowl. A thin ridge of
/// mild infeasibility (peak g = 0.3 at theta1 = 0.425) cuts the box in two
/// for every theta2, and the deep right bowl is centred inside a steep
/// constraint wall (g ~ 6 at theta1 = 1), so the constrained optimum lies on
/// that wall near theta1 ~ 0.76.
///
///   f = 20 + (z - 0.5) - 5 exp(-|t - (0.2, 0.5)|^2 / (2 * 0.12^2))
///                      - 12 exp(-|t - (0.8, 0.5)|^2 / (2 * 0.3^2))
///   g = -1 + 1.3 exp(-((t1 - 0.425) / 0.04)^2)
///       + 25 * 0.02 * softplus((t1 - 0.72 - 0.04 (z - 0.5)) / 0.02)
inline TuningProblem trap_benchmark(ProblemOptions opts = {}) {
  TuningProblem p;
  p.name = "trap-2d";
  p.n_theta = 2;
  p.n_z = 1;
  p.theta_lo = Vector::Zero(2);
  p.theta_hi = Vector::Ones(2);
  p.context_lo = Vector::Zero(1);
  p.context_hi = Vector::Ones(1);
  p.seed = opts.seed;
  p.noise_std = opts.noise_std;
  p.evaluate = [](const Vector& theta, const Vector& z) {
    if (theta.size() != 2 || z.size() != 1) {
      throw InputShapeError("trap-2d: evaluate expects 2 control and 1 context value");
    }
    if (!theta.allFinite() || !z.allFinite()) throw PlantError("trap-2d: non-finite input");
    const double t1 = theta[0];
    const double t2 = theta[1];
    const double dz = z[0] - 0.5;
    const double local = ((t1 - 0.2) * (t1 - 0.2) + (t2 - 0.5) * (t2 - 0.5)) / (2.0 * 0.12 * 0.12);
    const double global = ((t1 - 0.8) * (t1 - 0.8) + (t2 - 0.5) * (t2 - 0.5)) / (2.0 * 0.3 * 0.3);
    Evaluation e;
    e.objective = 20.0 + dz - 5.0 * std::exp(-local) - 12.0 * std::exp(-global);
    const double ridge = (t1 - 0.425) / 0.04;
    const double wall = 25.0 * 0.02 * detail::softplus((t1 - 0.72 - 0.04 * dz) / 0.02);
    e.constraints = Vector::Constant(1, -1.0 + 1.3 * std::exp(-ridge * ridge) + wall);
    return e;
  };
  detail::add_observation_noise(p);
  p.initial_safe_set = {{Vector{{0.2, 0.5}}, Vector{{0.5}}}};
  p.cost_fns = {budget::ViolationCostFn::quadratic()};
  p.objective_kernel = gp::KernelSpec::with_default_noise(15.0, Vector{{0.3, 0.3, 1.0}});
  p.constraint_kernels = {gp::KernelSpec::with_default_noise(2.0, Vector{{0.15, 0.5, 1.0}})};
  p.default_context =
      ContextSource::recurring({Vector{{0.3}}, Vector{{0.5}}, Vector{{0.7}}}, Vector{{0.03}});
  p.oracle_resolution = 201;
  return p;
}

/// Plant drawn from the GP prior the optimizer itself assumes.
///
/// theta in [0,1] sampled at 41 points, z in {0, 1/3, 2/3, 1}. Objective and
/// constraint are independent joint draws over that support from
/// N(0, K + noise I) with the problem's own kernels; draws are repeated
/// until the safe start theta = 0.5 is feasible at every support context.
/// Queries off the support snap to the nearest support point.
inline TuningProblem gp_prior_sample(ProblemOptions opts = {}) {
  constexpr int kThetaPoints = 41;
  constexpr int kContexts = 4;
  TuningProblem p;
  p.name = "gp-prior-sample";
  p.n_theta = 1;
  p.n_z = 1;
  p.theta_lo = Vector::Zero(1);
  p.theta_hi = Vector::Ones(1);
  p.context_lo = Vector::Zero(1);
  p.context_hi = Vector::Ones(1);
  p.seed = opts.seed;
  p.noise_std = opts.noise_std;
  p.native_resolution = kThetaPoints;
  p.objective_kernel = gp::KernelSpec::with_default_noise(1.0, Vector{{0.2, 0.5}});
  p.constraint_kernels = {gp::KernelSpec::with_default_noise(1.0, Vector{{0.2, 0.5}})};
  p.cost_fns = {budget::ViolationCostFn::quadratic()};

  const int n = kThetaPoints * kContexts;
  Matrix support(n, 2);
  for (int c = 0; c < kContexts; ++c) {
    for (int k = 0; k < kThetaPoints; ++k) {
      support(c * kThetaPoints + k, 0) = grid_coordinate(0.0, 1.0, kThetaPoints, k);
      support(c * kThetaPoints + k, 1) = grid_coordinate(0.0, 1.0, kContexts, c);
    }
  }
  auto factor = [&](const gp::KernelSpec& spec) {
    Matrix K(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        K(i, j) = gp::kernel_eval(spec, support.row(i).transpose(), support.row(j).transpose());
      }
      K(i, i) += spec.noise_variance;
    }
    Eigen::LLT<Matrix> llt(K);
    if (llt.info() != Eigen::Success) throw NumericalError("gp-prior-sample: prior not PD");
    return Matrix(llt.matrixL());
  };
  const Matrix L_obj = factor(p.objective_kernel);
  const Matrix L_con = factor(p.constraint_kernels.front());

  std::seed_seq seq{opts.seed, std::uint64_t{0x67702d7072696f72ULL}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Matrix& L) {
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = normal(rng);
    return Vector(L * w);
  };
  const int safe_k = kThetaPoints / 2;
  Vector obj, con;
  bool accepted = false;
  for (int attempt = 0; attempt < 10000 && !accepted; ++attempt) {
    obj = draw(L_obj);
    con = draw(L_con);
    accepted = true;
    for (int c = 0; c < kContexts; ++c) {
      if (con[c * kThetaPoints + safe_k] > 0.0) accepted = false;
    }
  }
  if (!accepted) throw NumericalError("gp-prior-sample: no draw with a feasible safe start");

  const std::string name = p.name;
  p.evaluate = [obj, con, name](const Vector& theta, const Vector& z) {
    if (theta.size() != 1 || z.size() != 1) {
      throw InputShapeError(name + ": evaluate expects 1 control and 1 context value");
    }
    if (!theta.allFinite() || !z.allFinite()) throw PlantError(name + ": non-finite input");
    const double tk = std::clamp(theta[0], 0.0, 1.0) * (kThetaPoints - 1);
    const double zc = std::clamp(z[0], 0.0, 1.0) * (kContexts - 1);
    const int k = static_cast<int>(std::lround(tk));
    const int c = static_cast<int>(std::lround(zc));
    Evaluation e;
    e.objective = obj[c * kThetaPoints + k];
    e.constraints = Vector::Constant(1, con[c * kThetaPoints + k]);
    return e;
  };
  detail::add_observation_noise(p);
  const double safe_theta = grid_coordinate(0.0, 1.0, kThetaPoints, safe_k);
  for (int c = 0; c < kContexts; ++c) {
    p.initial_safe_set.emplace_back(Vector::Constant(1, safe_theta),
                                    Vector::Constant(1, grid_coordinate(0.0, 1.0, kContexts, c)));
  }
  std::vector<Vector> base;
  for (int c = 0; c < kContexts; ++c) {
    base.push_back(Vector::Constant(1, grid_coordinate(0.0, 1.0, kContexts, c)));
  }
  p.default_context = ContextSource::recurring(std::move(base), Vector::Zero(1));
  p.oracle_resolution = kThetaPoints;
  return p;
}

inline void attach_oracle(TuningProblem& p) {
  if (p.oracle_resolution <= 0) return;
  // Captures a copy without the oracle itself, so no self-reference.
  TuningProblem frozen = p;
  frozen.known_optimum = nullptr;
  const int res = p.oracle_resolution;
  p.known_optimum = [frozen = std::move(frozen), res](const Vector& z) {
    return grid_optimum(frozen, z, res);
  };
}

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"vcs-surrogate", "trap-2d", "gp-prior-sample"};
  return names;
}

/// Builds a registered problem by name.
inline TuningProblem make_problem(const std::string& name, ProblemOptions opts = {}) {
  TuningProblem p;
  if (name == "vcs-surrogate") {
    p = vcs_surrogate(opts);
  } else if (name == "trap-2d") {
    p = trap_benchmark(opts);
  } else if (name == "gp-prior-sample") {
    p = gp_prior_sample(opts);
  } else {
    std::string known;
    for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown problem '" + name + "' (known: " + known + ")");
  }
  attach_oracle(p);
  p.validate();
  return p;
}

}  // namespace vacbo::plant
