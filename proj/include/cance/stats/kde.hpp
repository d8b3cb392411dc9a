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
#include <span>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/stats/univariate.hpp"

namespace cance::stats {

// One-dimensional Gaussian kernel density estimate with Silverman's
// bandwidth 0.9 min(sd, IQR/1.34) n^(-1/5).
class KernelDensity {
 public:
  explicit KernelDensity(std::span<const double> samples)
      : samples_(samples.begin(), samples.end()) {
    if (samples_.empty()) throw Error("kernel density: no samples");
    std::sort(samples_.begin(), samples_.end());
    const SampleMoments m = sample_moments(samples_);
    const double sd = std::sqrt(m.variance);
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    bandwidth_ = 0.9 * spread * std::pow(static_cast<double>(samples_.size()), -0.2);
    if (!(bandwidth_ > 0.0)) bandwidth_ = 1e-12;
  }

  double bandwidth() const { return bandwidth_; }

  double pdf(double z) const {
    // Kernels further than 40 bandwidths away contribute < 1e-300.
    const double reach = 40.0 * bandwidth_;
    auto lo = std::lower_bound(samples_.begin(), samples_.end(), z - reach);
    auto hi = std::upper_bound(samples_.begin(), samples_.end(), z + reach);
    double s = 0.0;
    for (auto it = lo; it != hi; ++it) s += normal_pdf((z - *it) / bandwidth_);
    return s / (static_cast<double>(samples_.size()) * bandwidth_);
  }

 private:
  double quantile(double q) const {
    const double pos = q * static_cast<double>(samples_.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= samples_.size()) return samples_.back();
    return samples_[i] + frac * (samples_[i + 1] - samples_[i]);
  }

  std::vector<double> samples_;
  double bandwidth_ = 0.0;
};

}  // namespace cance::stats
