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

#include <cmath>
#include <numbers>
#include <vector>

#include "gtest/gtest.h"

#include "cance/stats/gaussian.hpp"
#include "cance/stats/moments.hpp"
#include "cance/stats/proposition.hpp"
#include "cance/stats/univariate.hpp"
#include "test_util.hpp"

namespace cance::stats {
namespace {

using cance::testing::random_matrix;

// Composite Simpson rule with `intervals` (even) subintervals.
template <typename F>
double simpson(F f, double a, double b, int intervals = 20000) {
  const double h = (b - a) / intervals;
  double s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

TEST(StreamingMoments, MeanOfThreeValues) {
  StreamingMoments m;
  m.update(Matrix{{1.0}, {3.0}});
  m.update(Matrix{{5.0}});
  EXPECT_DOUBLE_EQ(m.mean[0], 3.0);
  EXPECT_EQ(m.n, 3u);
}

TEST(StreamingMoments, VarianceByMergeFormula) {
  StreamingMoments m;
  m.update(Matrix{{0.0}, {2.0}});
  m.update(Matrix{{4.0}});
  // (2/3)(1) + (1/3)(0) + (2/9)(9) = 8/3
  EXPECT_NEAR(m.cov(0, 0), 8.0 / 3.0, 1e-15);
}

TEST(StreamingMoments, EmptyPriorGivesBatchMoments) {
  Rng rng(3);
  const Matrix batch = random_matrix(17, 4, rng);
  StreamingMoments empty(4);
  const StreamingMoments merged = update_moments(empty, batch);
  const StreamingMoments direct = StreamingMoments::of_batch(batch);
  EXPECT_EQ(merged.n, 17u);
  EXPECT_EQ(merged.mean, direct.mean);
  EXPECT_EQ(merged.cov, direct.cov);
}

TEST(StreamingMoments, DimensionMismatchAndEmptyBatchThrow) {
  StreamingMoments m;
  m.update(Matrix(3, 2, 1.0));
  EXPECT_THROW(m.update(Matrix(3, 3)), ShapeError);
  EXPECT_THROW(m.update(Matrix(0, 2)), ShapeError);
}

// Direct two-pass moments over the concatenation, written independently of
// column_means/covariance.
void one_pass_oracle(const Matrix& data, Vector& mean, Matrix& cov) {
  const std::size_t n = data.rows(), d = data.cols();
  mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += data(r, c) / static_cast<double>(n);
  cov = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += (data(r, i) - mean[i]) * (data(r, j) - mean[j]);
      cov(i, j) = s / static_cast<double>(n);
    }
}

TEST(StreamingMoments, RandomPartitionsMatchOnePass) {
  Rng rng(2024);
  Matrix data = random_matrix(1000, 8, rng, 3.0);
  for (std::size_t r = 0; r < 1000; ++r) data(r, 2) += 50.0;
  Vector mean;
  Matrix cov;
  one_pass_oracle(data, mean, cov);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batches = 1 + rng.index(7);
    std::vector<std::size_t> cuts{0, 1000};
    while (cuts.size() < batches + 1) {
      const std::size_t c = 1 + rng.index(999);
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    StreamingMoments m;
    for (std::size_t b = 0; b + 1 < cuts.size(); ++b) {
      std::vector<std::size_t> idx;
      for (std::size_t r = cuts[b]; r < cuts[b + 1]; ++r) idx.push_back(r);
      m.update(select_rows(data, idx));
    }
    EXPECT_LT(max_abs_diff(Matrix::row_vector(m.mean), Matrix::row_vector(mean)), 1e-10);
    EXPECT_LT(max_abs_diff(m.cov, cov), 1e-10);
  }
}

TEST(StreamingMoments, MergeIsAssociative) {
  Rng rng(5);
  const auto b1 = StreamingMoments::of_batch(random_matrix(13, 5, rng));
  const auto b2 = StreamingMoments::of_batch(random_matrix(40, 5, rng, 2.0));
  const auto b3 = StreamingMoments::of_batch(random_matrix(7, 5, rng, 0.5));
  StreamingMoments left = b1;
  left.merge(b2);
  left.merge(b3);
  StreamingMoments right23 = b2;
  right23.merge(b3);
  StreamingMoments right = b1;
  right.merge(right23);
  EXPECT_LT(max_abs_diff(left.cov, right.cov), 1e-10);
  EXPECT_LT(max_abs_diff(Matrix::row_vector(left.mean), Matrix::row_vector(right.mean)), 1e-10);
}

TEST(LognormalMode, ConstantSamplesReturnValue) {
  const std::vector<double> s(10, 2.5);
  EXPECT_DOUBLE_EQ(lognormal_mode(s), 2.5);
}

TEST(LognormalMode, ExactMomentsOfStandardLognormal) {
  const double e = std::numbers::e;
  EXPECT_NEAR(lognormal_mode(std::exp(0.5), (e - 1.0) * e), std::exp(-1.0), 1e-14);
}

TEST(LognormalMode, MonteCarloWithinFivePercent) {
  Rng rng(77);
  std::vector<double> s(100000);
  for (double& v : s) v = std::exp(rng.normal());
  EXPECT_NEAR(lognormal_mode(s), std::exp(-1.0), 0.05 * std::exp(-1.0));
}

TEST(LognormalMode, NeverExceedsSampleMean) {
  Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(2 + rng.index(200));
    const double mu = rng.uniform(-2, 2), sigma = rng.uniform(0, 2);
    for (double& v : s) v = std::exp(rng.normal(mu, sigma));
    EXPECT_LE(lognormal_mode(s), sample_moments(s).mean);
  }
}

TEST(LognormalMode, Errors) {
  EXPECT_THROW(lognormal_mode(std::vector<double>{1.0}), Error);
  EXPECT_THROW(lognormal_mode(std::vector<double>{0.0, 0.0}), NumericError);
  EXPECT_THROW(lognormal_mode(std::vector<double>{-1.0, 2.0}), NumericError);
}

TEST(NormalQuantile, InvertsCdf) {
  for (double p : {1e-12, 1e-6, 0.01, 0.02425, 0.3, 0.5, 0.77, 0.99, 1 - 1e-9}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-12 * std::max(1.0, p / 1e-3)) << p;
  }
}

TEST(TruncatedNormal, SamplesStayInSupport) {
  Rng rng(9);
  const TruncatedNormal t = truncnorm_params(0.7, 0.4);
  for (int i = 0; i < 100000; ++i) {
    const double z = truncnorm_sample(t, rng);
    ASSERT_GE(z, 0.0);
    ASSERT_LE(z, 0.7);
  }
}

TEST(TruncatedNormal, DensityIntegratesToOne) {
  for (auto [mode, sigma] : {std::pair{1.0, 0.3}, {0.05, 0.4}, {2.0, 5.0}, {0.3, 0.01}}) {
    const TruncatedNormal t = truncnorm_params(mode, sigma);
    const double integral = simpson([&](double z) { return std::exp(truncnorm_logpdf(t, z)); },
                                    0.0, mode);
    EXPECT_NEAR(integral, 1.0, 1e-6) << mode << " " << sigma;
  }
}

TEST(TruncatedNormal, WideScaleApproachesUniform) {
  const TruncatedNormal t = truncnorm_params(1.0, 100.0);
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) worst = std::max(worst, std::abs(t.pdf(i / 100.0) - 1.0));
  EXPECT_LT(worst, 1e-3);
  EXPECT_NEAR(simpson([&](double z) { return t.pdf(z); }, 0.0, 1.0), 1.0, 1e-6);
}

TEST(TruncatedNormal, OutsideSupportIsMinusInfinity) {
  const TruncatedNormal t = truncnorm_params(1.0, 1.0);
  EXPECT_EQ(t.logpdf(-0.01), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(t.logpdf(1.01), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(t.pdf(2.0), 0.0);
}

TEST(TruncatedNormal, InverseCdfPathMatchesQuadratureMean) {
  // mode / sigma = 0.002 gives acceptance ~8e-4, below the 1% switch.
  const TruncatedNormal t = truncnorm_params(0.002, 1.0);
  ASSERT_LT(t.mass(), 0.01);
  Rng rng(10);
  double sum = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = t.sample(rng);
    ASSERT_GE(z, 0.0);
    ASSERT_LE(z, 0.002);
    sum += z;
  }
  const double expected = simpson([&](double z) { return z * t.pdf(z); }, 0.0, 0.002);
  EXPECT_NEAR(sum / n, expected, 0.01 * expected);
}

TEST(TruncatedNormal, RejectionPathMatchesQuadratureMean) {
  const TruncatedNormal t = truncnorm_params(1.2, 0.5);
  Rng rng(11);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += t.sample(rng);
  const double expected = simpson([&](double z) { return z * t.pdf(z); }, 0.0, 1.2);
  EXPECT_NEAR(sum / n, expected, 0.01 * expected);
}

TEST(Gaussian, StandardNormalAtZero) {
  const GaussianModel g(Vector{0.0}, Matrix{{1.0}});
  EXPECT_NEAR(gaussian_logpdf(g, Vector{0.0}), -0.91893853320467274, 1e-14);
}

TEST(Gaussian, IdentityCovarianceAtMean) {
  for (std::size_t d : {1u, 3u, 7u}) {
    const Vector mean(d, 1.5);
    const GaussianModel g(mean, Matrix::identity(d));
    EXPECT_NEAR(g.logpdf(mean), -0.5 * static_cast<double>(d) * std::log(2 * std::numbers::pi),
                1e-12);
  }
}

TEST(Gaussian, MatchesExplicitInverseFormula2D) {
  const Matrix cov{{2.0, 0.6}, {0.6, 1.0}};
  const GaussianModel g(Vector{1.0, -1.0}, cov);
  const double det = 2.0 * 1.0 - 0.36;
  const double dx = 0.5 - 1.0, dy = 0.25 + 1.0;
  const double q = (1.0 * dx * dx - 2 * 0.6 * dx * dy + 2.0 * dy * dy) / det;
  EXPECT_NEAR(g.logpdf(Vector{0.5, 0.25}),
              -0.5 * q - 0.5 * std::log(det) - std::log(2 * std::numbers::pi), 1e-13);
}

TEST(Gaussian, MonteCarloMomentsWithinTwoPercent) {
  const Vector mean{1.0, -2.0, 3.0};
  const Matrix cov{{2.0, 0.8, 0.5}, {0.8, 1.0, 0.3}, {0.5, 0.3, 1.5}};
  const GaussianModel g(mean, cov);
  Rng rng(12);
  const Matrix draws = g.sample(100000, rng);
  const Vector m = column_means(draws);
  const Matrix c = covariance(draws);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(m[i], mean[i], 0.02 * std::abs(mean[i]));
    for (std::size_t j = 0; j < 3; ++j) {
      // Off-diagonal tolerance is relative to the entry's natural scale.
      EXPECT_NEAR(c(i, j), cov(i, j), 0.02 * std::sqrt(cov(i, i) * cov(j, j)));
    }
  }
}

TEST(Gaussian, SingularCovarianceGetsJitter) {
  const GaussianModel g(Vector{0.0, 0.0}, Matrix{{1.0, 1.0}, {1.0, 1.0}});
  EXPECT_TRUE(g.jittered());
  EXPECT_TRUE(std::isfinite(g.logpdf(Vector{0.1, -0.1})));
}

TEST(Gaussian, IndefiniteCovarianceIsHardError) {
  EXPECT_THROW(GaussianModel(Vector{0.0, 0.0}, Matrix{{1.0, 0.0}, {0.0, -1.0}}), NumericError);
}

TEST(Gaussian, FactorReproducesCovariance) {
  Rng rng(13);
  const Matrix a = random_matrix(30, 5, rng);
  const Matrix cov = covariance(a);
  const GaussianModel g(column_means(a), cov);
  EXPECT_LT(max_abs_diff(matmul_nt(g.factor(), g.factor()), cov), 1e-8);
}

std::vector<double> lognormal_samples(double mu, double sigma, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> s(n);
  for (double& v : s) v = std::exp(rng.normal(mu, sigma));
  return s;
}

TEST(Proposition1, HoldsOnLognormalFeature) {
  const auto s = lognormal_samples(0.0, 0.5, 20000, 14);
  const TruncatedNormal t = fit_truncated_normal(s);
  const SampleMoments m = sample_moments(s);
  const auto report = verify_proposition1(s, t, NormalMarginal{m.mean, std::sqrt(m.variance)});
  EXPECT_TRUE(report.passed);
  EXPECT_EQ(report.grid_points, 512u);
  EXPECT_GE(report.worst_margin, 0.0);
}

TEST(Proposition1, AblatedCheckFails) {
  const auto s = lognormal_samples(0.0, 0.5, 20000, 15);
  const TruncatedNormal t = fit_truncated_normal(s);
  const SampleMoments m = sample_moments(s);
  const auto report =
      verify_proposition1(s, t, NormalMarginal{m.mean, std::sqrt(m.variance)}, 512, false);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.negative_points, 0u);
}

TEST(Proposition1, ZeroVarianceGuardAndEmptyInput) {
  const std::vector<double> s(50, 0.3);
  const TruncatedNormal t = fit_truncated_normal(s);
  const auto report = verify_proposition1(s, t, NormalMarginal{0.3, 0.0});
  EXPECT_TRUE(report.degenerate);
  EXPECT_TRUE(report.passed);
  EXPECT_THROW(verify_proposition1(std::vector<double>{}, t, NormalMarginal{}), Error);
}

}  // namespace
}  // namespace cance::stats
