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

#include <cmath>
#include <span>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/linalg.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/stats/univariate.hpp"

namespace cance::stats {

inline constexpr double kCovarianceJitter = 1e-8;

// Multivariate normal with a cached Cholesky factor.
class GaussianModel {
 public:
  GaussianModel() = default;

  // Factorizes `cov`; on failure retries once with cov + 1e-8 I.
  GaussianModel(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
      throw ShapeError("gaussian: covariance " + cov_.shape_string() + " for mean of length " +
                       std::to_string(mean_.size()));
    }
    auto factor = cholesky(cov_);
    if (!factor) {
      Matrix jittered = cov_;
      for (std::size_t i = 0; i < jittered.rows(); ++i) jittered(i, i) += kCovarianceJitter;
      factor = cholesky(jittered);
      if (!factor) {
        throw NumericError("gaussian: covariance is not positive definite even after adding " +
                           std::to_string(kCovarianceJitter) +
                           " I (condition number " + std::to_string(condition_number(cov_)) +
                           ")");
      }
      jittered_ = true;
    }
    factor_ = std::move(*factor);
    log_det_half_ = 0.0;
    for (std::size_t i = 0; i < factor_.rows(); ++i) log_det_half_ += std::log(factor_(i, i));
  }

  std::size_t dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Matrix& factor() const { return factor_; }
  bool jittered() const { return jittered_; }
  // sum log diag(L) = 0.5 log det(cov)
  double half_log_det() const { return log_det_half_; }

  // Solves L w = (u - mean) and returns |w|^2.
  double mahalanobis_sq(std::span<const double> u) const {
    Vector w(dim());
    for (std::size_t i = 0; i < dim(); ++i) w[i] = u[i] - mean_[i];
    forward_substitute(factor_, w);
    return squared_norm(w);
  }

  double logpdf(std::span<const double> u) const {
    if (u.size() != dim()) {
      throw ShapeError("gaussian logpdf: point of length " + std::to_string(u.size()) +
                       ", model dimension " + std::to_string(dim()));
    }
    return -0.5 * mahalanobis_sq(u) - log_det_half_ - 0.5 * static_cast<double>(dim()) * kLog2Pi;
  }

  Vector sample(Rng& rng) const {
    Vector e(dim());
    for (double& v : e) v = rng.normal();
    Vector out(mean_);
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t k = 0; k <= i; ++k) out[i] += factor_(i, k) * e[k];
    return out;
  }

  Matrix sample(std::size_t n, Rng& rng) const {
    Matrix out(n, dim());
    for (std::size_t r = 0; r < n; ++r) {
      const Vector s = sample(rng);
      std::copy(s.begin(), s.end(), out.row(r).begin());
    }
    return out;
  }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix factor_;
  double log_det_half_ = 0.0;
  bool jittered_ = false;
};

inline double gaussian_logpdf(const GaussianModel& m, std::span<const double> u) {
  return m.logpdf(u);
}
inline Vector gaussian_sample(const GaussianModel& m, Rng& rng) { return m.sample(rng); }

}  // namespace cance::stats
