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
#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vacbo/common.hpp"

namespace vacbo::gp {

/// Hyperparameters of an ARD squared-exponential kernel.
struct KernelSpec {
  double variance = 1.0;
  Vector lengthscales;
  double noise_variance = 0.0;

  /// Near-noiseless default: noise is 1e-6 of the output variance.
  static KernelSpec with_default_noise(double variance, Vector lengthscales) {
    return KernelSpec{variance, std::move(lengthscales), 1e-6 * variance};
  }

  Eigen::Index dim() const { return lengthscales.size(); }

  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance)) {
      throw ConfigError("kernel variance must be positive and finite");
    }
    if (lengthscales.size() == 0) {
      throw ConfigError("kernel needs at least one lengthscale");
    }
    for (Eigen::Index d = 0; d < lengthscales.size(); ++d) {
      if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d])) {
        throw ConfigError("kernel lengthscale " + std::to_string(d) +
                          " must be positive and finite");
      }
    }
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
      throw ConfigError("kernel noise variance must be non-negative");
    }
  }
};

namespace detail {

inline void check_dim(const KernelSpec& spec, Eigen::Index got) {
  if (got != spec.dim()) {
    std::ostringstream msg;
    msg << "input has dimension " << got << " but kernel expects "
        << spec.dim();
    throw InputShapeError(msg.str());
  }
}

inline double scaled_sqdist(const KernelSpec& spec,
                            const Eigen::Ref<const Vector>& a,
                            const Eigen::Ref<const Vector>& b) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double r = (a[d] - b[d]) / spec.lengthscales[d];
    acc += r * r;
  }
  return acc;
}

inline std::atomic<std::size_t>& clamp_counter() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

}  // namespace detail

/// variance * exp(-0.5 * sum_d ((a_d - b_d) / l_d)^2)
inline double kernel_eval(const KernelSpec& spec,
                          const Eigen::Ref<const Vector>& a,
                          const Eigen::Ref<const Vector>& b) {
  detail::check_dim(spec, a.size());
  detail::check_dim(spec, b.size());
  return spec.variance * std::exp(-0.5 * detail::scaled_sqdist(spec, a, b));
}

/// Number of tiny negative posterior variances clamped to zero so far
/// (process-wide).
inline std::size_t variance_clamp_events() {
  return detail::clamp_counter().load(std::memory_order_relaxed);
}

struct Posterior {
  double mean = 0.0;
  double std = 0.0;
};

/// Exact GP regression model with a constant prior mean.
///
/// Immutable once built: add_observation returns a new model, so
/// concurrent posterior queries on one instance are safe.
class GPModel {
 public:
  static constexpr double kJitterStart = 1e-10;
  static constexpr double kJitterMax = 1e-4;
  static constexpr double kClampTolerance = 1e-8;

  /// Fits on the rows of `inputs` with matching `targets`.
  static GPModel fit(KernelSpec spec, double prior_mean, Matrix inputs,
                     Vector targets) {
    spec.validate();
    if (inputs.rows() == 0) {
      throw ConfigError("cannot fit a GP on an empty dataset");
    }
    if (inputs.rows() != targets.size()) {
      throw InputShapeError("inputs and targets differ in length");
    }
    detail::check_dim(spec, inputs.cols());
    for (Eigen::Index i = 0; i < targets.size(); ++i) {
      if (!std::isfinite(targets[i])) {
        throw NumericalError("non-finite training target at row " +
                             std::to_string(i));
      }
    }
    GPModel model;
    model.kernel_ = std::move(spec);
    model.prior_mean_ = prior_mean;
    model.inputs_ = std::move(inputs);
    model.targets_ = std::move(targets);
    model.factorize();
    return model;
  }

  static GPModel fit(KernelSpec spec, double prior_mean,
                     const std::vector<std::pair<Vector, double>>& data) {
    if (data.empty()) {
      throw ConfigError("cannot fit a GP on an empty dataset");
    }
    const Eigen::Index d = data.front().first.size();
    Matrix inputs(static_cast<Eigen::Index>(data.size()), d);
    Vector targets(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].first.size() != d) {
        throw InputShapeError("training inputs have mixed dimensions");
      }
      inputs.row(static_cast<Eigen::Index>(i)) = data[i].first.transpose();
      targets[static_cast<Eigen::Index>(i)] = data[i].second;
    }
    return fit(std::move(spec), prior_mean, std::move(inputs),
               std::move(targets));
  }

  Posterior posterior(const Eigen::Ref<const Vector>& x) const {
    detail::check_dim(kernel_, x.size());
    const Vector k = cross_covariance(x);
    Posterior out;
    out.mean = k.dot(alpha_) + prior_mean_;
    const Vector v = gram_factor_.triangularView<Eigen::Lower>().solve(k);
    double var = kernel_.variance - v.squaredNorm();
    if (var < 0.0) {
      if (var < -kClampTolerance * kernel_.variance) {
        std::ostringstream msg;
        msg << "posterior variance " << var
            << " is negative beyond tolerance";
        throw NumericalError(msg.str());
      }
      detail::clamp_counter().fetch_add(1, std::memory_order_relaxed);
      var = 0.0;
    }
    out.std = std::sqrt(var);
    return out;
  }

  /// Posterior mean only; identical to posterior(x).mean.
  double mean(const Eigen::Ref<const Vector>& x) const {
    detail::check_dim(kernel_, x.size());
    return cross_covariance(x).dot(alpha_) + prior_mean_;
  }

  /// Posterior at every row of `queries`. Each row goes through the same
  /// arithmetic as posterior(), so results agree bit for bit.
  void posterior_batch(const Matrix& queries, Vector& mean, Vector& std) const {
    mean.resize(queries.rows());
    std.resize(queries.rows());
    Vector x(queries.cols());
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
      x = queries.row(r).transpose();
      const Posterior p = posterior(x);
      mean[r] = p.mean;
      std[r] = p.std;
    }
  }

  /// Model conditioned on one more point. Extends the Cholesky factor by a
  /// row when that is well conditioned, else refits from scratch.
  GPModel add_observation(const Eigen::Ref<const Vector>& x, double y) const {
    detail::check_dim(kernel_, x.size());
    if (!std::isfinite(y)) {
      throw NumericalError("non-finite observation");
    }
    const Eigen::Index n = size();
    GPModel next;
    next.kernel_ = kernel_;
    next.prior_mean_ = prior_mean_;
    next.inputs_.resize(n + 1, dim());
    next.inputs_.topRows(n) = inputs_;
    next.inputs_.row(n) = x.transpose();
    next.targets_.resize(n + 1);
    next.targets_.head(n) = targets_;
    next.targets_[n] = y;

    const Vector k = cross_covariance(x);
    const Vector v = gram_factor_.triangularView<Eigen::Lower>().solve(k);
    const double diag =
        kernel_.variance + kernel_.noise_variance + jitter_ - v.squaredNorm();
    // Extending is only safe if the pivot stays clearly positive.
    if (diag > kJitterStart * kernel_.variance && std::isfinite(diag)) {
      next.jitter_ = jitter_;
      next.gram_factor_ = Matrix::Zero(n + 1, n + 1);
      next.gram_factor_.topLeftCorner(n, n) = gram_factor_;
      next.gram_factor_.block(n, 0, 1, n) = v.transpose();
      next.gram_factor_(n, n) = std::sqrt(diag);
      next.solve_alpha();
    } else {
      next.factorize();
    }
    return next;
  }

  const KernelSpec& kernel() const { return kernel_; }
  double prior_mean() const { return prior_mean_; }
  const Matrix& inputs() const { return inputs_; }
  const Vector& targets() const { return targets_; }
  /// Lower factor L with L L^T = K + (noise + jitter) I.
  const Matrix& gram_factor() const { return gram_factor_; }
  /// (K + noise I)^-1 (targets - prior_mean)
  const Vector& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return inputs_.rows(); }
  Eigen::Index dim() const { return kernel_.dim(); }

 private:
  GPModel() = default;

  Vector cross_covariance(const Eigen::Ref<const Vector>& x) const {
    Vector k(size());
    for (Eigen::Index i = 0; i < size(); ++i) {
      k[i] = kernel_.variance *
             std::exp(-0.5 * detail::scaled_sqdist(
                                 kernel_, inputs_.row(i).transpose(), x));
    }
    return k;
  }

  Matrix gram() const {
    const Eigen::Index n = size();
    Matrix K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      K(i, i) = kernel_.variance;
      for (Eigen::Index j = 0; j < i; ++j) {
        const double kij =
            kernel_.variance *
            std::exp(-0.5 * detail::scaled_sqdist(
                                kernel_, inputs_.row(i).transpose(),
                                inputs_.row(j).transpose()));
        K(i, j) = kij;
        K(j, i) = kij;
      }
    }
    return K;
  }

  // Jitter escalates 1e-10 -> 1e-4 (relative to variance) by factors of 10.
  void factorize() {
    Matrix K = gram();
    K.diagonal().array() += kernel_.noise_variance;
    double jitter = 0.0;
    while (true) {
      Matrix Kj = K;
      Kj.diagonal().array() += jitter;
      Eigen::LLT<Matrix> llt(Kj);
      if (llt.info() == Eigen::Success) {
        gram_factor_ = llt.matrixL();
        jitter_ = jitter;
        solve_alpha();
        return;
      }
      if (jitter == 0.0) {
        jitter = kJitterStart * kernel_.variance;
      } else if (jitter < kJitterMax * kernel_.variance * (1.0 - 1e-9)) {
        jitter *= 10.0;
      } else {
        throw NumericalError(degeneracy_report());
      }
    }
  }

  void solve_alpha() {
    const Vector resid = targets_.array() - prior_mean_;
    alpha_ = gram_factor_.triangularView<Eigen::Lower>().solve(resid);
    gram_factor_.triangularView<Eigen::Lower>().transpose().solveInPlace(
        alpha_);
  }

  std::string degeneracy_report() const {
    std::ostringstream msg;
    msg << "Gram matrix not positive definite after jitter up to "
        << kJitterMax << " x variance";
    int listed = 0;
    for (Eigen::Index i = 0; i < size() && listed < 8; ++i) {
      for (Eigen::Index j = 0; j < i && listed < 8; ++j) {
        if (detail::scaled_sqdist(kernel_, inputs_.row(i).transpose(),
                                  inputs_.row(j).transpose()) < 1e-12) {
          msg << (listed == 0 ? "; near-duplicate inputs at rows " : ", ")
              << j << "/" << i;
          ++listed;
        }
      }
    }
    if (listed == 0) {
      msg << "; inputs are degenerate relative to the lengthscales";
    }
    return msg.str();
  }

  KernelSpec kernel_;
  double prior_mean_ = 0.0;
  Matrix inputs_;
  Vector targets_;
  Matrix gram_factor_;
  Vector alpha_;
  double jitter_ = 0.0;
};

}  // namespace vacbo::gp
