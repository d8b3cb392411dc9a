/*
 * Copyright 2026 The CANCE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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
#include <limits>
#include <span>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/stats/kde.hpp"
#include "cance/stats/univariate.hpp"

namespace cance::stats {

// 1-D normal N(mean, sd^2): the marginal of the Gaussian noise along one
// reconstruction feature.
struct NormalMarginal {
  double mean = 0.0;
  double sd = 1.0;
  double pdf(double z) const { return normal_pdf((z - mean) / sd) / sd; }
};

struct AugmentationCheck {
  bool passed = false;
  bool degenerate = false;       // zero-variance feature, grid not evaluated
  double worst_margin = 0.0;     // min over the grid of mixture - noise density
  double worst_at = 0.0;
  std::size_t grid_points = 0;
  std::size_t negative_points = 0;
};

// Numerically checks that the reconstruction-feature marginal of the
// augmented mixture, 0.5 p0(z) + 0.5 p_t(z), dominates the noise marginal
// p_n(z) on a uniform grid over [0, mode]. p0 is a kernel density estimate
// of `samples`. With include_truncated = false the p_t term is dropped,
// which is expected to fail for right-skewed p0.
inline AugmentationCheck verify_proposition1(std::span<const double> samples,
                                             const TruncatedNormal& params,
                                             const NormalMarginal& noise,
                                             std::size_t grid_points = 512,
                                             bool include_truncated = true) {
  if (samples.empty()) throw Error("verify_proposition1: no samples");
  AugmentationCheck report;
  if (params.degenerate() || !(noise.sd > 0.0)) {
    report.passed = true;
    report.degenerate = true;
    return report;
  }
  const KernelDensity p0(samples);
  report.grid_points = grid_points;
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double z = grid_points == 1
                         ? params.mode
                         : params.mode * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    double mixture = 0.5 * p0.pdf(z);
    if (include_truncated) mixture += 0.5 * params.pdf(z);
    const double margin = mixture - noise.pdf(z);
    if (margin < 0.0) ++report.negative_points;
    if (margin < report.worst_margin) {
      report.worst_margin = margin;
      report.worst_at = z;
    }
  }
  report.passed = report.negative_points == 0;
  return report;
}

}  // namespace cance::stats
