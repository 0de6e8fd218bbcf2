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

#include "vacbo/gp.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using vacbo::Matrix;
using vacbo::Vector;
using vacbo::gp::GPModel;
using vacbo::gp::KernelSpec;

KernelSpec spec(double var, std::initializer_list<double> ls, double noise = 0.0) {
  Vector l(static_cast<Eigen::Index>(ls.size()));
  Eigen::Index k = 0;
  for (double v : ls) l[k++] = v;
  return KernelSpec{var, l, noise};
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

struct Dataset {
  KernelSpec kernel;
  double mu0;
  Matrix X;
  Vector y;
};

Dataset random_dataset(std::mt19937_64& rng, int n, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  Vector ls(dim);
  for (int k = 0; k < dim; ++k) ls[k] = 0.3 + 1.2 * u(rng);
  d.kernel = KernelSpec::with_default_noise(0.5 + 3.0 * u(rng), ls);
  d.mu0 = 4.0 * u(rng) - 2.0;
  d.X = Matrix(n, dim);
  d.y = Vector(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) d.X(i, k) = 2.0 * u(rng);
    d.y[i] = std::sin(3.0 * d.X(i, 0)) + 0.5 * d.X.row(i).sum();
  }
  return d;
}

double rel(double got, long double want, double scale) {
  return static_cast<double>(std::fabs(got - want) / std::max<long double>(std::fabs(want), scale));
}

TEST(KernelEval, IdentityIsVariance) {
  EXPECT_DOUBLE_EQ(vacbo::gp::kernel_eval(spec(2.0, {1, 1}), vec({0, 0}), vec({0, 0})), 2.0);
}

TEST(KernelEval, UnitDistance) {
  EXPECT_NEAR(vacbo::gp::kernel_eval(spec(1.0, {1}), vec({0}), vec({1})), 0.60653065971263342, 1e-15);
}

TEST(KernelEval, VcsObjectiveKernelAtSamePoint) {
  const KernelSpec k = spec(15.0, {50, 60, 70, 1.0, 0.06});
  const Vector a = vec({340, 440, 840, 300, 0.5});
  EXPECT_DOUBLE_EQ(vacbo::gp::kernel_eval(k, a, a), 15.0);
}

TEST(KernelEval, DimensionMismatchThrows) {
  EXPECT_THROW(vacbo::gp::kernel_eval(spec(1.0, {1, 1}), vec({0}), vec({0, 0})),
               vacbo::InputShapeError);
}

TEST(KernelEval, SymmetricOnRandomPairs) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 2.0);
  const KernelSpec k = spec(3.0, {0.5, 1.5, 2.0});
  for (int r = 0; r < 1000; ++r) {
    const Vector a = vec({n(rng), n(rng), n(rng)});
    const Vector b = vec({n(rng), n(rng), n(rng)});
    EXPECT_EQ(vacbo::gp::kernel_eval(k, a, b), vacbo::gp::kernel_eval(k, b, a));
  }
}

TEST(Fit, EmptyDataThrows) {
  EXPECT_THROW(GPModel::fit(spec(1.0, {1}), 0.0, std::vector<std::pair<Vector, double>>{}),
               vacbo::ConfigError);
  EXPECT_THROW(GPModel::fit(spec(1.0, {1}), 0.0, Matrix(0, 1), Vector(0)), vacbo::ConfigError);
}

TEST(Fit, MismatchedTargetsThrow) {
  EXPECT_THROW(GPModel::fit(spec(1.0, {1}), 0.0, Matrix::Zero(3, 1), Vector::Zero(2)),
               vacbo::InputShapeError);
}

TEST(Fit, NonFiniteTargetThrows) {
  EXPECT_THROW(GPModel::fit(spec(1.0, {1}), 0.0, Matrix::Zero(1, 1), vec({NAN})),
               vacbo::NumericalError);
}

TEST(Fit, SinglePointInterpolates) {
  const GPModel m = GPModel::fit(spec(2.0, {1.0, 1.0}), 0.5, {{vec({0.3, 0.7}), 1.75}});
  EXPECT_NEAR(m.posterior(vec({0.3, 0.7})).mean, 1.75, 1e-12);
}

TEST(Fit, TwoPointsMatchHandInverse) {
  const KernelSpec k = spec(1.5, {0.8}, 1e-3);
  const Vector x1 = vec({0.1}), x2 = vec({0.9}), q = vec({0.4});
  const double y1 = 2.0, y2 = -1.0, mu0 = 0.25;
  const GPModel m = GPModel::fit(k, mu0, {{x1, y1}, {x2, y2}});

  auto kf = [&](double a, double b) { return 1.5 * std::exp(-0.5 * (a - b) * (a - b) / 0.64); };
  const double a = kf(0.1, 0.1) + 1e-3, b = kf(0.1, 0.9), d = kf(0.9, 0.9) + 1e-3;
  const double det = a * d - b * b;
  const double i11 = d / det, i12 = -b / det, i22 = a / det;
  const double k1 = kf(0.4, 0.1), k2 = kf(0.4, 0.9);
  const double r1 = y1 - mu0, r2 = y2 - mu0;
  const double mean = mu0 + k1 * (i11 * r1 + i12 * r2) + k2 * (i12 * r1 + i22 * r2);
  const double var = 1.5 - (k1 * (i11 * k1 + i12 * k2) + k2 * (i12 * k1 + i22 * k2));

  const auto p = m.posterior(q);
  EXPECT_NEAR(p.mean, mean, 1e-12);
  EXPECT_NEAR(p.std, std::sqrt(var), 1e-12);
}

TEST(Fit, FactorReproducesGram) {
  std::mt19937_64 rng(3);
  const Dataset d = random_dataset(rng, 12, 3);
  const GPModel m = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
  const Matrix& L = m.gram_factor();
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.X.rows(); ++j) {
      double want = static_cast<double>(vacbo::testing::rbf(
          d.kernel.variance, d.kernel.lengthscales, d.X.row(i).transpose(), d.X.row(j).transpose()));
      if (i == j) want += d.kernel.noise_variance + m.jitter();
      EXPECT_NEAR(L.row(i).dot(L.row(j)), want, 1e-12 * d.kernel.variance);
    }
  }
}

TEST(Fit, DuplicateInputsNoiselessEscalateJitter) {
  const GPModel m = GPModel::fit(spec(1.0, {1.0}), 0.0, {{vec({0.5}), 1.0}, {vec({0.5}), 1.0}});
  EXPECT_GT(m.jitter(), 0.0);
  EXPECT_LE(m.jitter(), GPModel::kJitterMax);
  EXPECT_NEAR(m.posterior(vec({0.5})).mean, 1.0, 1e-6);
}

TEST(Posterior, PriorRecoveryFarAway) {
  std::mt19937_64 rng(5);
  const Dataset d = random_dataset(rng, 8, 2);
  const GPModel m = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
  const Vector far = Vector::Constant(2, 2.0) + 20.0 * d.kernel.lengthscales;
  const auto p = m.posterior(far);
  EXPECT_LE(std::abs(p.mean - d.mu0), 1e-6);
  EXPECT_LE(std::abs(p.std - std::sqrt(d.kernel.variance)), 1e-6);
}

TEST(Posterior, TrainingPointHasNearZeroStd) {
  std::mt19937_64 rng(6);
  const Dataset d = random_dataset(rng, 6, 2);
  KernelSpec k = d.kernel;
  k.noise_variance = 0.0;
  const GPModel m = GPModel::fit(k, d.mu0, d.X, d.y);
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    EXPECT_LE(m.posterior(d.X.row(i).transpose()).std, 1e-6 * std::sqrt(k.variance));
  }
}

TEST(Posterior, RandomFivePointsMatchDenseInverse) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset d = random_dataset(rng, 5, 2);
    const GPModel m = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
    for (int q = 0; q < 10; ++q) {
      const Vector x = vec({u(rng), u(rng)});
      const auto o = vacbo::testing::dense_posterior(d.kernel.variance, d.kernel.lengthscales,
                                                     d.kernel.noise_variance + m.jitter(), d.mu0,
                                                     d.X, d.y, x);
      const auto p = m.posterior(x);
      const double scale = std::sqrt(d.kernel.variance);
      EXPECT_LE(rel(p.mean, o.mean, scale), 1e-8);
      EXPECT_LE(rel(p.std, std::sqrt(std::max(o.var, 0.0L)), scale), 1e-8);
    }
  }
}

TEST(Posterior, BatchIsBitIdentical) {
  std::mt19937_64 rng(8);
  const Dataset d = random_dataset(rng, 9, 3);
  const GPModel m = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
  Matrix Q = Matrix::Random(50, 3);
  Vector mean, sd;
  m.posterior_batch(Q, mean, sd);
  for (Eigen::Index r = 0; r < Q.rows(); ++r) {
    const auto p = m.posterior(Q.row(r).transpose());
    EXPECT_EQ(mean[r], p.mean);
    EXPECT_EQ(sd[r], p.std);
    EXPECT_EQ(m.mean(Q.row(r).transpose()), p.mean);
  }
}

TEST(Posterior, StdNeverNegativeOrNan) {
  std::mt19937_64 rng(9);
  const Dataset d = random_dataset(rng, 20, 2);
  KernelSpec k = d.kernel;
  k.noise_variance = 0.0;
  Matrix X(40, 2);
  X << d.X, d.X;
  Vector y(40);
  y << d.y, d.y;
  const GPModel m = GPModel::fit(k, d.mu0, X, y);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double s = m.posterior(X.row(i).transpose()).std;
    EXPECT_FALSE(std::isnan(s));
    EXPECT_GE(s, 0.0);
  }
}

TEST(Posterior, WrongDimensionThrows) {
  const GPModel m = GPModel::fit(spec(1.0, {1, 1}), 0.0, {{vec({0, 0}), 1.0}});
  EXPECT_THROW(m.posterior(vec({0})), vacbo::InputShapeError);
}

TEST(AddObservation, QueryAtAddedPoint) {
  const GPModel m = GPModel::fit(spec(1.0, {0.5}), 0.0, {{vec({0.0}), 0.0}});
  const GPModel m2 = m.add_observation(vec({1.0}), 3.0);
  EXPECT_NEAR(m2.posterior(vec({1.0})).mean, 3.0, 1e-9);
  EXPECT_EQ(m.size(), 1);
  EXPECT_EQ(m2.size(), 2);
}

TEST(AddObservation, IncrementalMatchesRefit) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset d = random_dataset(rng, 10, 3);
    GPModel inc = GPModel::fit(d.kernel, d.mu0, d.X.topRows(1), d.y.head(1));
    for (Eigen::Index i = 1; i < 10; ++i) inc = inc.add_observation(d.X.row(i).transpose(), d.y[i]);
    const GPModel full = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
    for (int q = 0; q < 20; ++q) {
      const Vector x = vec({u(rng), u(rng), u(rng)});
      const auto a = inc.posterior(x), b = full.posterior(x);
      EXPECT_NEAR(a.mean, b.mean, 1e-10 * std::max(1.0, std::abs(b.mean)));
      EXPECT_NEAR(a.std, b.std, 1e-10);
    }
  }
}

TEST(AddObservation, DuplicateWithNoiseAverages) {
  const GPModel m = GPModel::fit(spec(1.0, {1.0}, 0.1), 0.0, {{vec({0.2}), 1.0}});
  const GPModel m2 = m.add_observation(vec({0.2}), 2.0);
  const double mu = m2.posterior(vec({0.2})).mean;
  EXPECT_GT(mu, 1.0);
  EXPECT_LT(mu, 2.0);
}

TEST(AddObservation, NeverIncreasesVariance) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Dataset d = random_dataset(rng, 6, 2);
    GPModel m = GPModel::fit(d.kernel, d.mu0, d.X, d.y);
    std::vector<Vector> queries;
    for (int q = 0; q < 10; ++q) queries.push_back(vec({u(rng), u(rng)}));
    for (int step = 0; step < 5; ++step) {
      const GPModel next = m.add_observation(vec({u(rng), u(rng)}), u(rng));
      for (const Vector& x : queries) {
        const double before = m.posterior(x).std, after = next.posterior(x).std;
        EXPECT_LE(after * after, before * before + 1e-9);
      }
      m = next;
    }
  }
}

TEST(AddObservation, NonFiniteThrows) {
  const GPModel m = GPModel::fit(spec(1.0, {1.0}), 0.0, {{vec({0.2}), 1.0}});
  EXPECT_THROW(m.add_observation(vec({0.3}), INFINITY), vacbo::NumericalError);
}

TEST(KernelSpec, ValidationRejectsBadValues) {
  EXPECT_THROW(spec(0.0, {1.0}).validate(), vacbo::ConfigError);
  EXPECT_THROW(spec(1.0, {-1.0}).validate(), vacbo::ConfigError);
  EXPECT_THROW(spec(1.0, {1.0}, -1e-3).validate(), vacbo::ConfigError);
  EXPECT_THROW((KernelSpec{1.0, Vector(0), 0.0}.validate()), vacbo::ConfigError);
  EXPECT_NEAR(KernelSpec::with_default_noise(15.0, vec({1.0})).noise_variance, 1.5e-5, 1e-20);
}

}  // namespace
