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
#include <numbers>

namespace vacbo {

// Beyond |x| = 8 the tails are below 1e-15 and get clamped to {0, 1}.
inline constexpr double kNormalTailCutoff = 8.0;

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

inline double normal_cdf(double x) {
  if (x < -kNormalTailCutoff) return 0.0;
  if (x > kNormalTailCutoff) return 1.0;
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

}  // namespace vacbo
