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
#include <numbers>
#include <span>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/rng.hpp"

namespace cance::stats {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

// Inverse standard normal CDF: Acklam's rational approximation refined with
// one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw Error("normal_quantile: probability outside [0, 1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;  // biased
};

inline SampleMoments sample_moments(std::span<const double> samples) {
  SampleMoments m;
  if (samples.empty()) return m;
  for (double v : samples) m.mean += v;
  m.mean /= static_cast<double>(samples.size());
  for (double v : samples) m.variance += (v - m.mean) * (v - m.mean);
  m.variance /= static_cast<double>(samples.size());
  return m;
}

// Mode of a log-normal expressed through its mean and variance:
//   m = mean * (variance / mean^2 + 1)^(-3/2)
inline double lognormal_mode(double mean, double variance) {
  if (!(mean > 0.0)) {
    throw NumericError("lognormal_mode: mean must be positive, got " + std::to_string(mean));
  }
  if (variance <= 0.0) return mean;
  return mean * std::pow(variance / (mean * mean) + 1.0, -1.5);
}

// Mode estimate from samples using biased sample moments.
inline double lognormal_mode(std::span<const double> samples) {
  if (samples.size() < 2) throw Error("lognormal_mode: need at least two samples");
  for (double v : samples) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw NumericError("lognormal_mode: samples must be finite and non-negative");
    }
  }
  const SampleMoments m = sample_moments(samples);
  return lognormal_mode(m.mean, m.variance);
}

// Normal(mode, sigma^2) truncated to [0, mode]. With sigma == 0 it is the
// point mass at `mode`.
struct TruncatedNormal {
  double mode = 0.0;
  double sigma = 0.0;

  bool degenerate() const { return !(sigma > 0.0) || !(mode > 0.0); }

  // Parent-normal probability of the support: Phi(0) - Phi(-mode/sigma).
  double mass() const { return 0.5 - normal_cdf(-mode / sigma); }

  double logpdf(double z) const {
    if (z < 0.0 || z > mode) return -std::numeric_limits<double>::infinity();
    if (degenerate()) {
      return z == mode ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    }
    return normal_logpdf(z, mode, sigma) - std::log(mass());
  }

  double pdf(double z) const { return std::exp(logpdf(z)); }

  // Rejection from the parent normal; inverse-CDF when the acceptance
  // probability drops below 1%.
  double sample(Rng& rng) const {
    if (degenerate()) return mode;
    const double accept = mass();
    if (accept >= 0.01) {
      for (;;) {
        const double z = rng.normal(mode, sigma);
        if (z >= 0.0 && z <= mode) return z;
      }
    }
    const double lo = normal_cdf(-mode / sigma);
    const double u = lo + (0.5 - lo) * rng.uniform_open();
    const double z = mode + sigma * normal_quantile(u);
    return std::min(std::max(z, 0.0), mode);
  }
};

// Truncated normal for a reconstruction feature: location at the log-normal
// mode estimate, scale equal to the sample standard deviation.
inline TruncatedNormal fit_truncated_normal(std::span<const double> samples) {
  const double mode = lognormal_mode(samples);
  const SampleMoments m = sample_moments(samples);
  return TruncatedNormal{mode, std::sqrt(m.variance)};
}

inline TruncatedNormal truncnorm_params(double mode, double sigma) {
  if (!(mode > 0.0) || sigma < 0.0) {
    throw Error("truncated normal needs mode > 0 and sigma >= 0");
  }
  return TruncatedNormal{mode, sigma};
}

inline double truncnorm_sample(const TruncatedNormal& p, Rng& rng) { return p.sample(rng); }
inline double truncnorm_logpdf(const TruncatedNormal& p, double z) { return p.logpdf(z); }

}  // namespace cance::stats
