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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cance/nce/augment.hpp"
#include "cance/nce/estimator.hpp"
#include "cance/nce/noise.hpp"
#include "test_util.hpp"

namespace cance {
namespace {

using testing::random_matrix;
using testing::relative_error;

const double kLn2 = std::log(2.0);

stats::GaussianModel random_gaussian(std::size_t dim, Rng& rng) {
  const Matrix a = random_matrix(dim, dim, rng, 0.5);
  Matrix cov = matmul_nt(a, a);
  for (std::size_t j = 0; j < dim; ++j) cov(j, j) += 0.3;
  Vector mean(dim);
  for (double& m : mean) m = rng.normal();
  return stats::GaussianModel(mean, cov);
}

nn::Network small_net(std::size_t in, Rng& rng) {
  return nn::Network::mlp(in, {5, 4}, 1, nn::Activation::tanh, nn::Activation::identity, rng);
}

// Direct evaluation of the batch loss from network outputs.
double loss_oracle(const nn::Network& net, const Matrix& data, const Matrix& noise, double nu) {
  const Matrix td = net.predict(data), tn = net.predict(noise);
  double a = 0.0, b = 0.0;
  for (double t : td.storage()) a += std::log(1.0 / (1.0 + std::exp(-t)));
  for (double t : tn.storage()) b += std::log(1.0 - 1.0 / (1.0 + std::exp(-t)));
  return -a / static_cast<double>(td.rows()) - nu * b / static_cast<double>(tn.rows());
}

TEST(NceLoss, ZeroLogitsGiveClosedForm) {
  const Vector d(7, 0.0), n(56, 0.0);
  EXPECT_NEAR(nce::nce_loss_from_logits(d, n, 8.0).value, 9.0 * kLn2, 1e-14);
  EXPECT_NEAR(nce::nce_loss_from_logits(Vector{0.0}, Vector{0.0, 0.0}, 3.0).value, 4.0 * kLn2, 1e-14);
}

TEST(NceLoss, PerfectDiscriminationLimit) {
  const Vector d(4, 800.0), n(32, -800.0);
  const double v = nce::nce_loss_from_logits(d, n, 8.0).value;
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 1e-300);
  // extreme logits stay finite
  const Vector bad_d(4, -800.0), bad_n(4, 800.0);
  const double worst = nce::nce_loss_from_logits(bad_d, bad_n, 8.0).value;
  EXPECT_TRUE(std::isfinite(worst));
  EXPECT_NEAR(worst, 800.0 * 9.0, 1e-9);
}

TEST(NceLoss, MatchesDirectEvaluation) {
  Rng rng(3);
  nn::Network net = small_net(4, rng);
  const Matrix data = random_matrix(9, 4, rng), noise = random_matrix(20, 4, rng, 2.0);
  EXPECT_NEAR(nce::nce_loss(net, data, noise, 8.0), loss_oracle(net, data, noise, 8.0), 1e-12);
}

TEST(NceLoss, LogitGradientMatchesFiniteDifferences) {
  Rng rng(5);
  Vector d(6), n(11);
  for (double& v : d) v = 2.0 * rng.normal();
  for (double& v : n) v = 2.0 * rng.normal();
  const nce::NceLoss loss = nce::nce_loss_from_logits(d, n, 8.0);
  const double h = 1e-5;
  for (std::size_t i = 0; i < d.size() + n.size(); ++i) {
    Vector& v = i < d.size() ? d : n;
    const std::size_t k = i < d.size() ? i : i - d.size();
    const double saved = v[k];
    v[k] = saved + h;
    const double up = nce::nce_loss_from_logits(d, n, 8.0).value;
    v[k] = saved - h;
    const double down = nce::nce_loss_from_logits(d, n, 8.0).value;
    v[k] = saved;
    const double analytic = i < d.size() ? loss.data_grad[k] : loss.noise_grad[k];
    EXPECT_LT(relative_error(analytic, (up - down) / (2 * h)), 1e-4) << i;
  }
}

TEST(NceLoss, ParameterGradientMatchesFiniteDifferences) {
  Rng rng(7);
  nn::Network net = small_net(3, rng);
  const Matrix data = random_matrix(5, 3, rng), noise = random_matrix(15, 3, rng, 1.5);
  const Matrix logits = net.forward(vstack(data, noise));
  const std::span<const double> all = logits.storage();
  const nce::NceLoss loss = nce::nce_loss_from_logits(all.first(5), all.subspan(5), 3.0);
  Matrix up(20, 1);
  for (std::size_t r = 0; r < 5; ++r) up(r, 0) = loss.data_grad[r];
  for (std::size_t r = 5; r < 20; ++r) up(r, 0) = loss.noise_grad[r - 5];
  const nn::Backprop bp = net.backward(up);
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const double err = testing::worst_fd_error(*params[p], bp.grads[p], [&] {
      return loss_oracle(net, data, noise, 3.0);
    });
    EXPECT_LT(err, 1e-4) << "parameter " << p;
  }
}

TEST(NoiseModel, IdentityScalingReproducesCovariance) {
  Rng rng(11);
  const stats::GaussianModel base = random_gaussian(4, rng);
  const nce::NoiseModel noise(base, 8.0);
  for (double k : noise.scales()) EXPECT_EQ(k, 1.0);
  Rng draw(12);
  const Matrix s = nce::sample_noise(noise, 100000, draw);
  const Matrix cov = covariance(s);
  const Vector mean = column_means(s);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(mean[i], base.mean()[i], 0.02 * std::sqrt(base.cov()(i, i)));
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(cov(i, j), base.cov()(i, j), 0.02 * std::sqrt(base.cov()(i, i) * base.cov()(j, j)));
    }
  }
}

TEST(NoiseModel, ZeroPsiScalesStdByOnePlusLn2) {
  Rng rng(13);
  const stats::GaussianModel base = random_gaussian(3, rng);
  const nce::NoiseModel noise(base, 8.0, Vector(3, 0.0));
  for (double k : noise.scales()) EXPECT_NEAR(k, 1.0 + kLn2, 1e-15);
  Rng draw(14);
  const Matrix s = nce::sample_noise(noise, 100000, draw);
  const Matrix cov = covariance(s);
  const Vector mean = column_means(s);
  for (std::size_t j = 0; j < 3; ++j) {
    const double sd = std::sqrt(base.cov()(j, j));
    EXPECT_NEAR(std::sqrt(cov(j, j)) / sd, 1.6931, 0.02 * 1.6931);
    EXPECT_NEAR(mean[j], base.mean()[j], 0.02 * 1.6931 * sd);
  }
}

TEST(NoiseModel, SampleMeanIndependentOfPsi) {
  Rng rng(15);
  const stats::GaussianModel base = random_gaussian(2, rng);
  const nce::NoiseModel noise(base, 8.0, Vector{2.5, -1.0});
  Rng draw(16);
  const Vector mean = column_means(nce::sample_noise(noise, 100000, draw));
  const Vector k = noise.scales();
  for (std::size_t j = 0; j < 2; ++j)
    EXPECT_NEAR(mean[j], base.mean()[j], 0.02 * k[j] * std::sqrt(base.cov()(j, j)));
}

TEST(NoiseModel, LogpdfIsScaledGaussian) {
  Rng rng(17);
  const stats::GaussianModel base = random_gaussian(3, rng);
  const nce::NoiseModel noise(base, 8.0, Vector{0.3, -2.0, 1.1});
  const Vector k = noise.scales();
  Matrix scaled = base.cov();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) scaled(i, j) *= k[i] * k[j];
  const stats::GaussianModel oracle(base.mean(), scaled);
  for (int t = 0; t < 10; ++t) {
    Vector u(3);
    for (double& v : u) v = 2.0 * rng.normal();
    EXPECT_NEAR(noise.logpdf(u), oracle.logpdf(u), 1e-10);
  }
  const Matrix x = random_matrix(6, 3, rng);
  EXPECT_LT(max_abs_diff(noise.inverse_transform(noise.transform(x)), x), 1e-12);
}

TEST(NoiseModel, RejectsBadInput) {
  Rng rng(19);
  const stats::GaussianModel base = random_gaussian(2, rng);
  EXPECT_THROW(nce::NoiseModel(base, 0.0), ConfigError);
  EXPECT_THROW(nce::NoiseModel(base, 8.0, Vector{1.0}), ShapeError);
  const nce::NoiseModel noise(base, 8.0);
  EXPECT_THROW(noise.logpdf(Vector{1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(noise.transform(Matrix(2, 3)), ShapeError);
}

Matrix lognormal_composite(std::size_t n, std::size_t latent, Rng& rng) {
  Matrix z(n, latent + 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < latent; ++j) z(r, j) = rng.normal();
    z(r, latent) = std::exp(-2.0 + 0.5 * rng.normal());
    z(r, latent + 1) = 0.1 * std::exp(0.5 * rng.normal());
  }
  return z;
}

TEST(Augment, ForcedArtificialKeepsLatentsAndRespectsSupport) {
  Rng rng(21);
  const Matrix z = lognormal_composite(500, 3, rng);
  const nce::AugmentationParams p = nce::fit_augmentation(z);
  const auto out = nce::augment_batch(z, p, rng, nce::MixPolicy::artificial);
  EXPECT_EQ(out.artificial_rows, 500u);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(out.features(r, j), z(r, j));
    EXPECT_GE(out.features(r, 3), 0.0);
    EXPECT_LE(out.features(r, 3), p.error.mode);
    EXPECT_GE(out.features(r, 4), 0.0);
    EXPECT_LE(out.features(r, 4), p.cosine.mode);
  }
}

TEST(Augment, ForcedOriginalIsIdentity) {
  Rng rng(23);
  const Matrix z = lognormal_composite(50, 2, rng);
  const auto out = nce::augment_batch(z, nce::fit_augmentation(z), rng, nce::MixPolicy::original);
  EXPECT_EQ(out.features, z);
  EXPECT_EQ(out.artificial_rows, 0u);
}

TEST(Augment, MixtureFractionIsHalf) {
  Rng rng(25);
  const Matrix z = lognormal_composite(100000, 1, rng);
  const auto out = nce::augment_batch(z, nce::fit_augmentation(z), rng);
  EXPECT_NEAR(static_cast<double>(out.artificial_rows) / 1e5, 0.5, 0.01);
  std::size_t changed = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) changed += out.features(r, 1) != z(r, 1);
  EXPECT_EQ(changed, out.artificial_rows);
}

TEST(Augment, Errors) {
  Rng rng(27);
  const Matrix z = lognormal_composite(10, 1, rng);
  EXPECT_THROW(nce::augment_batch(z, nce::AugmentationParams{}, rng), StateError);
  EXPECT_THROW(nce::fit_augmentation(Matrix(5, 1, 1.0)), ShapeError);
}

// A(psi) evaluated from scratch with the inner points frozen.
double objective_oracle(const nn::Network& net, const Vector& mu, const Vector& psi, double nu,
                        const Matrix& inner, const Matrix& base) {
  Vector k(psi.size());
  for (std::size_t j = 0; j < psi.size(); ++j) k[j] = 1.0 + std::log1p(std::exp(psi[j]));
  auto move = [&](const Matrix& x) {
    Matrix y = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols(); ++j) y(r, j) = k[j] * (x(r, j) - mu[j]) + mu[j];
    return y;
  };
  const Matrix td = net.predict(move(inner)), tn = net.predict(move(base));
  double a = 0.0, b = 0.0;
  for (double t : td.storage()) a += std::log(1.0 / (1.0 + std::exp(-t)));
  for (double t : tn.storage()) b += std::log(1.0 / (1.0 + std::exp(t)));
  return a / static_cast<double>(inner.rows()) + nu * b / static_cast<double>(base.rows());
}

TEST(AdaptNoise, PsiGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    Rng rng(seed);
    const stats::GaussianModel base = random_gaussian(4, rng);
    nce::NoiseModel noise(base, 8.0, Vector{-1.0, 0.5, 0.0, 1.5});
    const nn::Network net = small_net(4, rng);
    const Matrix data = base.sample(6, rng);
    const Matrix draws = base.sample(48, rng);
    const Matrix inner = noise.inverse_transform(data);
    const nce::NoiseObjective obj = nce::noise_objective(net, noise, inner, draws);
    EXPECT_NEAR(obj.value, objective_oracle(net, base.mean(), noise.psi(), 8.0, inner, draws), 1e-12);
    Matrix psi = Matrix::row_vector(noise.psi());
    const double err = testing::worst_fd_error(psi, Matrix::row_vector(obj.psi_grad), [&] {
      return objective_oracle(net, base.mean(), Vector(psi.storage().begin(), psi.storage().end()),
                              8.0, inner, draws);
    });
    EXPECT_LT(err, 1e-4) << "seed " << seed;
  }
}

TEST(AdaptNoise, LeavesEstimatorUntouchedAndKeepsScalesAboveOne) {
  Rng rng(35);
  const stats::GaussianModel base = random_gaussian(3, rng);
  nce::NoiseModel noise(base, 8.0, Vector(3, -3.0));
  const nn::Network net = small_net(3, rng);
  const nn::Network before = net;
  nn::AdamWState state(nn::AdamWConfig{.lr = 0.5, .weight_decay = 0.0});
  const Vector psi0 = noise.psi();
  for (int step = 0; step < 200; ++step) {
    nce::adapt_noise(net, noise, base.sample(8, rng), base.sample(64, rng), state);
    for (double k : noise.scales()) ASSERT_GE(k, 1.0);
  }
  EXPECT_NE(noise.psi(), psi0);
  const auto a = net.parameters(), b = before.parameters();
  for (std::size_t p = 0; p < a.size(); ++p) EXPECT_EQ(*a[p], *b[p]);
}

// Gaussian data N(0,1) against fixed noise N(0,4), nu = 8: the optimal
// log-odds is ln N(u;0,1) - ln(8 N(u;0,4)).
struct GaussianRecovery {
  nce::EstimatorFit fit;

  static nce::EstimatorConfig config() {
    nce::EstimatorConfig c;
    c.augmentation = false;
    c.adaptation = false;
    c.lr = 3e-3;
    c.epochs = 20;
    c.batch_size = 256;
    return c;
  }

  static Matrix draw(std::size_t n, Rng rng, double shift = 0.0) {
    Matrix x(n, 1);
    for (double& v : x.data()) v = rng.normal() + shift;
    return x;
  }

  explicit GaussianRecovery(double shift = 0.0, std::size_t n = 20000)
      : fit(nce::train_estimator(draw(n, Rng(41), shift), draw(n / 4, Rng(42), shift), config(),
                                 Rng(43), stats::GaussianModel({shift}, Matrix{{4.0}}))) {}
};

double log_pd(double u) { return stats::normal_logpdf(u, 0.0, 1.0); }

TEST(TrainEstimator, RecoversGaussianLogOdds) {
  const GaussianRecovery run;
  const auto& model = run.fit.model;
  const double t0 = model.net.predict(Matrix{{0.0}})(0, 0);
  EXPECT_NEAR(t0, std::log(0.25), 0.1);
  EXPECT_NEAR(nce::anomaly_score(model, Vector{0.0}), 0.5 * std::log(2.0 * std::numbers::pi), 0.1);
  double mean_err = 0.0;
  for (int i = 0; i <= 40; ++i) {
    const double u = -2.0 + 0.1 * i;
    mean_err += std::abs(nce::anomaly_score(model, Vector{u}) + log_pd(u)) / 41.0;
  }
  EXPECT_LT(mean_err, 0.1);
  EXPECT_EQ(run.fit.report.psi_steps, 0u);
  EXPECT_FALSE(run.fit.report.diverged);
  EXPECT_EQ(run.fit.report.val_loss.size(), 20u);
  EXPECT_EQ(run.fit.report.best_val,
            *std::min_element(run.fit.report.val_loss.begin(), run.fit.report.val_loss.end()));
}

TEST(TrainEstimator, ScoresAreTranslationEquivariant) {
  const GaussianRecovery a(0.0, 5000), b(3.0, 5000);
  for (int i = 0; i <= 8; ++i) {
    const double u = -2.0 + 0.5 * i;
    EXPECT_NEAR(nce::anomaly_score(a.fit.model, Vector{u}),
                nce::anomaly_score(b.fit.model, Vector{u + 3.0}), 0.1) << u;
  }
}

TEST(TrainEstimator, DisabledAdaptationKeepsIdentityNoise) {
  Rng rng(45);
  const Matrix z = lognormal_composite(400, 2, rng), v = lognormal_composite(100, 2, rng);
  nce::EstimatorConfig c;
  c.epochs = 3;
  c.hidden = {8};
  c.adaptation = false;
  const auto fit = nce::train_estimator(z, v, c, Rng(1));
  for (double k : fit.model.noise.scales()) EXPECT_EQ(k, 1.0);
  EXPECT_EQ(fit.report.psi_steps, 0u);
  ASSERT_TRUE(fit.report.augmentation.has_value());
}

TEST(TrainEstimator, AdaptationStartsAfterWarmupAndWidensNoise) {
  Rng rng(47);
  const Matrix z = lognormal_composite(640, 2, rng), v = lognormal_composite(160, 2, rng);
  nce::EstimatorConfig c;
  c.epochs = 10;
  c.hidden = {16};
  c.batch_size = 64;
  c.lr = 1e-2;
  const auto fit = nce::train_estimator(z, v, c, Rng(2));
  EXPECT_EQ(fit.report.psi_steps, 9u * 10u);  // epoch 1 is warmup
  for (double k : fit.model.noise.scales()) EXPECT_GE(k, 1.0);
}

TEST(TrainEstimator, AugmentationLowersScoresOfLowErrorPoints) {
  Rng rng(49);
  const Matrix z = lognormal_composite(4000, 2, rng), v = lognormal_composite(1000, 2, rng);
  nce::EstimatorConfig c;
  c.epochs = 15;
  c.lr = 3e-3;
  c.batch_size = 128;
  const auto fit = nce::train_estimator(z, v, c, Rng(3));
  ASSERT_TRUE(fit.report.error_check && fit.report.error_check->passed);
  ASSERT_TRUE(fit.report.cosine_check && fit.report.cosine_check->passed);
  // same latents: artificial low-error features vs. the top 5% by z_e
  const Vector ze = z.col(2);
  Vector sorted = ze;
  std::sort(sorted.begin(), sorted.end());
  const double q95 = sorted[static_cast<std::size_t>(0.95 * static_cast<double>(sorted.size()))];
  std::vector<std::size_t> high;
  for (std::size_t r = 0; r < z.rows(); ++r)
    if (ze[r] > q95) high.push_back(r);
  const Matrix high_rows = select_rows(z, high);
  const auto art = nce::augment_batch(high_rows, *fit.report.augmentation, rng,
                                      nce::MixPolicy::artificial);
  const Vector s_high = fit.model.scores(high_rows), s_art = fit.model.scores(art.features);
  double m_high = 0.0, m_art = 0.0;
  for (double s : s_high) m_high += s / static_cast<double>(s_high.size());
  for (double s : s_art) m_art += s / static_cast<double>(s_art.size());
  EXPECT_LE(m_art, m_high);
}

TEST(TrainEstimator, DeterministicAndSerializable) {
  Rng rng(51);
  const Matrix z = lognormal_composite(300, 2, rng), v = lognormal_composite(80, 2, rng);
  nce::EstimatorConfig c;
  c.epochs = 4;
  c.hidden = {8, 8};
  const auto a = nce::train_estimator(z, v, c, Rng(9));
  const auto b = nce::train_estimator(z, v, c, Rng(9));
  EXPECT_EQ(a.model.scores(v), b.model.scores(v));
  EXPECT_EQ(a.model.scores(v), a.model.scores(v));

  nn::ModelContainer box;
  a.model.save(box);
  const auto loaded = nce::EstimatorModel::load(nn::ModelContainer::deserialize(box.serialize()));
  EXPECT_EQ(loaded.scores(v), a.model.scores(v));
  EXPECT_EQ(loaded.noise.psi(), a.model.noise.psi());

  nce::EstimatorModel initial = a.model;
  initial.score_noise = nce::ScoreNoise::initial;
  EXPECT_NE(initial.scores(v), a.model.scores(v));
  EXPECT_THROW(a.model.scores(Matrix(2, 3)), ShapeError);
}

TEST(TrainEstimator, Errors) {
  Rng rng(53);
  const Matrix z = lognormal_composite(50, 1, rng);
  nce::EstimatorConfig c;
  c.epochs = 1;
  EXPECT_THROW(nce::train_estimator(z, Matrix(3, 2), c, Rng(1)), ShapeError);
  EXPECT_THROW(nce::train_estimator(z, Matrix(0, 3), c, Rng(1)), Error);
  Matrix bad = z;
  bad(3, 0) = std::numeric_limits<double>::quiet_NaN();
  c.augmentation = false;
  EXPECT_THROW(nce::train_estimator(z, bad, c, Rng(1)), NumericError);
  c.nu = -1.0;
  EXPECT_THROW(nce::train_estimator(z, z, c, Rng(1)), ConfigError);
}

}  // namespace
}  // namespace cance
