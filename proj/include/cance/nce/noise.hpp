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
#include <limits>
#include <span>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/stats/gaussian.hpp"

namespace cance::nce {

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// ln sigma(x) and ln(1 - sigma(x)) without overflow.
inline double log_sigmoid(double x) { return -softplus(-x); }
inline double log_one_minus_sigmoid(double x) { return -softplus(x); }

// Gaussian noise N(mu, Sigma) pushed through L_K(z) = K (z - mu) + mu with
// diagonal K_jj = 1 + softplus(psi_j) >= 1, i.e. N(mu, K Sigma K).
// psi_j = -inf gives K_jj = 1 exactly.
class NoiseModel {
 public:
  NoiseModel() = default;
  NoiseModel(stats::GaussianModel base, double nu)
      : NoiseModel(std::move(base), nu, Vector{}) {}
  NoiseModel(stats::GaussianModel base, double nu, Vector psi)
      : base_(std::move(base)), nu_(nu), psi_(std::move(psi)) {
    if (!(nu_ > 0.0)) throw ConfigError("noise-sample ratio nu must be positive");
    if (psi_.empty()) psi_.assign(base_.dim(), -std::numeric_limits<double>::infinity());
    if (psi_.size() != base_.dim()) {
      throw ShapeError("psi has length " + std::to_string(psi_.size()) + ", noise dimension " +
                       std::to_string(base_.dim()));
    }
  }

  std::size_t dim() const { return base_.dim(); }
  double nu() const { return nu_; }
  const stats::GaussianModel& base() const { return base_; }
  const Vector& mean() const { return base_.mean(); }
  const Vector& psi() const { return psi_; }
  Vector& psi() { return psi_; }

  Vector scales() const {
    Vector k(dim());
    for (std::size_t j = 0; j < dim(); ++j) k[j] = 1.0 + softplus(psi_[j]);
    return k;
  }

  // Same base and nu, K = I.
  NoiseModel without_scaling() const { return NoiseModel(base_, nu_); }

  // L_K applied to each row.
  Matrix transform(const Matrix& z) const {
    check(z);
    const Vector k = scales();
    const Vector& mu = mean();
    Matrix out(z.rows(), z.cols());
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t j = 0; j < dim(); ++j) out(r, j) = k[j] * (z(r, j) - mu[j]) + mu[j];
    return out;
  }

  Matrix inverse_transform(const Matrix& u) const {
    check(u);
    const Vector k = scales();
    const Vector& mu = mean();
    Matrix out(u.rows(), u.cols());
    for (std::size_t r = 0; r < u.rows(); ++r)
      for (std::size_t j = 0; j < dim(); ++j) out(r, j) = (u(r, j) - mu[j]) / k[j] + mu[j];
    return out;
  }

  Matrix sample_base(std::size_t n, Rng& rng) const { return base_.sample(n, rng); }
  Matrix sample(std::size_t n, Rng& rng) const { return transform(sample_base(n, rng)); }

  // ln N(u; mu, K Sigma K) = ln N(L_K^{-1}(u); mu, Sigma) - sum_j ln K_jj
  double logpdf(std::span<const double> u) const {
    if (u.size() != dim()) {
      throw ShapeError("noise logpdf: point of length " + std::to_string(u.size()) +
                       ", noise dimension " + std::to_string(dim()));
    }
    const Vector k = scales();
    const Vector& mu = mean();
    Vector back(dim());
    double log_det_k = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      back[j] = (u[j] - mu[j]) / k[j] + mu[j];
      log_det_k += std::log(k[j]);
    }
    return base_.logpdf(back) - log_det_k;
  }

 private:
  void check(const Matrix& m) const {
    if (m.cols() != dim()) {
      throw ShapeError("noise transform: batch has " + std::to_string(m.cols()) +
                       " columns, noise dimension " + std::to_string(dim()));
    }
  }

  stats::GaussianModel base_;
  double nu_ = 8.0;
  Vector psi_;
};

inline Matrix sample_noise(const NoiseModel& noise, std::size_t n, Rng& rng) {
  return noise.sample(n, rng);
}

}  // namespace cance::nce
