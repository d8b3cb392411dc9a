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
#include <cstring>

#include <Eigen/Dense>

#include "gtest/gtest.h"

#include "cance/compress/autoencoder.hpp"
#include "cance/compress/covariance_loss.hpp"
#include "cance/compress/features.hpp"
#include "cance/compress/pca.hpp"
#include "test_util.hpp"

namespace cance::compress {
namespace {

using cance::testing::random_matrix;
using cance::testing::worst_fd_error;

TEST(CompositeFeature, PerfectReconstruction) {
  const Vector x{0.3, -1.0, 2.0};
  const CompositeFeature f = make_composite(Vector{0.1, 0.2}, x, x);
  EXPECT_EQ(f.error, 0.0);
  EXPECT_NEAR(f.cosine, 0.0, 1e-16);
}

TEST(CompositeFeature, OrthogonalReconstruction) {
  const CompositeFeature f = make_composite(Vector{}, Vector{1.0, 0.0}, Vector{0.0, 1.0});
  EXPECT_DOUBLE_EQ(f.cosine, 0.5);
  EXPECT_DOUBLE_EQ(f.error, 1.0);
}

TEST(CompositeFeature, AntipodalReconstruction) {
  const Vector x{1.0, -2.0, 0.5};
  const Vector neg{-1.0, 2.0, -0.5};
  EXPECT_DOUBLE_EQ(make_composite(Vector{}, x, neg).cosine, 1.0);
}

TEST(CompositeFeature, ZeroNormIsDegenerateMidpoint) {
  const auto r = reconstruction_features(Vector{0.0, 0.0}, Vector{1.0, 1.0});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.cosine, 0.5);
  EXPECT_DOUBLE_EQ(r.error, 1.0);
  const auto batch = make_composite_batch(Matrix(2, 1), Matrix{{0.0, 0.0}, {1.0, 2.0}},
                                          Matrix{{1.0, 1.0}, {1.0, 2.0}});
  EXPECT_EQ(batch.degenerate_rows, 1u);
}

TEST(CompositeFeature, PackingOrderAndBounds) {
  Rng rng(1);
  const Matrix latent = random_matrix(50, 3, rng);
  const Matrix x = random_matrix(50, 6, rng);
  const Matrix x_rec = random_matrix(50, 6, rng);
  const CompositeBatch b = make_composite_batch(latent, x, x_rec);
  ASSERT_EQ(b.features.cols(), 5u);
  for (std::size_t r = 0; r < 50; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(b.features(r, c), latent(r, c));
    const auto f = reconstruction_features(x.row(r), x_rec.row(r));
    EXPECT_EQ(b.features(r, 3), f.error);
    EXPECT_EQ(b.features(r, 4), f.cosine);
    EXPECT_GE(f.error, 0.0);
    EXPECT_GE(f.cosine, 0.0);
    EXPECT_LE(f.cosine, 1.0);
  }
}

TEST(CovarianceLoss, DiagonalCovarianceIsZero) {
  // Columns (1,-1,1,-1) and (1,1,-1,-1) are centered and orthogonal.
  const Matrix z{{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  EXPECT_NEAR(covariance_loss(z), 0.0, 1e-30);
}

TEST(CovarianceLoss, TwoDimensionalClosedForm) {
  // Rows (a, a), (-a, -a): covariance entries all a^2, so c = a^2, loss = c^2.
  const double a = 1.7;
  const Matrix z{{a, a}, {-a, -a}};
  const double c = a * a;
  EXPECT_NEAR(covariance_loss(z), c * c, 1e-12);
}

TEST(CovarianceLoss, MatchesBruteForceOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.index(30), d = 2 + rng.index(6);
    const Matrix z = random_matrix(n, d, rng);
    double oracle = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (i == j) continue;
        double mi = 0, mj = 0;
        for (std::size_t r = 0; r < n; ++r) {
          mi += z(r, i) / n;
          mj += z(r, j) / n;
        }
        double s = 0;
        for (std::size_t r = 0; r < n; ++r) s += (z(r, i) - mi) * (z(r, j) - mj);
        s /= n;
        oracle += s * s;
      }
    oracle /= static_cast<double>(d * (d - 1));
    EXPECT_NEAR(covariance_loss(z), oracle, 1e-12);
  }
}

TEST(CovarianceLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix z = random_matrix(3 + rng.index(10), 2 + rng.index(4), rng);
    const CovarianceLoss l = covariance_loss_with_grad(z);
    EXPECT_LT(worst_fd_error(z, l.grad, [&] { return covariance_loss(z); }), 1e-4);
  }
}

TEST(CovarianceLoss, InvariantToConstantShift) {
  Rng rng(4);
  const Matrix z = random_matrix(20, 4, rng);
  Matrix shifted = z;
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 4; ++c) shifted(r, c) += 3.0 * c - 5.0;
  EXPECT_NEAR(covariance_loss(z), covariance_loss(shifted), 1e-12);
}

TEST(CovarianceLoss, RejectsSingleLatent) {
  EXPECT_THROW(covariance_loss(Matrix(5, 1)), ShapeError);
}

// Points on a 2-D linear subspace of R^5.
Matrix subspace_data(std::size_t n, Rng& rng) {
  const Matrix basis{{1.0, 0.5, -0.3, 0.2, 0.0}, {0.0, 0.4, 0.8, -0.5, 1.0}};
  Matrix coords = random_matrix(n, 2, rng);
  for (std::size_t r = 0; r < n; ++r) coords(r, 1) += 0.6 * coords(r, 0);
  return matmul(coords, basis);
}

TEST(Autoencoder, LinearRecoversSubspace) {
  Rng rng(5);
  const Matrix train = subspace_data(400, rng);
  const Matrix val = subspace_data(100, rng);
  AutoencoderConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {};
  cfg.activation = nn::Activation::identity;
  cfg.lambda = 0.0;
  cfg.epochs = 300;
  cfg.batch_size = 64;
  cfg.lr = 1e-2;
  cfg.weight_decay = 0.0;
  const AutoencoderFit fit = train_autoencoder(train, val, cfg, Rng(6));
  EXPECT_LT(fit.report.best_stage2_val, 1e-3);
}

TEST(Autoencoder, LargeLambdaDecorrelatesLatent) {
  Rng rng(7);
  const Matrix train = subspace_data(400, rng);
  const Matrix val = subspace_data(100, rng);
  AutoencoderConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {16};
  cfg.activation = nn::Activation::tanh;
  cfg.lambda = 10.0;
  cfg.epochs = 60;
  cfg.batch_size = 50;
  cfg.lr = 5e-3;
  const AutoencoderFit fit = train_autoencoder(train, val, cfg, Rng(8));
  const Matrix cov = covariance(fit.model.encode(train));
  // Mean square of the two off-diagonal entries.
  EXPECT_LT(cov(0, 1) * cov(0, 1), 1e-3);
  EXPECT_FALSE(fit.report.warning.has_value());
}

bool same_bits(const nn::Network& a, const nn::Network& b) {
  auto pa = a.parameters(), pb = b.parameters();
  auto ba = a.buffers(), bb = b.buffers();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (std::memcmp(pa[i]->data().data(), pb[i]->data().data(), 8 * pa[i]->size()) != 0) return false;
  for (std::size_t i = 0; i < ba.size(); ++i)
    if (std::memcmp(ba[i]->data().data(), bb[i]->data().data(), 8 * ba[i]->size()) != 0) return false;
  return pa.size() == pb.size() && ba.size() == bb.size();
}

TEST(Autoencoder, StageTwoNeverTouchesEncoder) {
  Rng rng(9);
  const Matrix train = subspace_data(200, rng);
  const Matrix val = subspace_data(50, rng);
  AutoencoderConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {8};
  cfg.lambda = 0.5;
  cfg.batch_size = 32;
  cfg.lr = 1e-3;
  // Stage-1 epochs are 4 in both runs; only stage 2 differs.
  cfg.epochs = 4;
  cfg.stage1_fraction = 1.0;
  const AutoencoderFit stage1_only = train_autoencoder(train, val, cfg, Rng(10));
  cfg.epochs = 12;
  cfg.stage1_fraction = 1.0 / 3.0;
  ASSERT_EQ(cfg.stage1_epochs(), 4u);
  const AutoencoderFit both = train_autoencoder(train, val, cfg, Rng(10));
  EXPECT_TRUE(same_bits(stage1_only.model.encoder, both.model.encoder));
  EXPECT_FALSE(same_bits(stage1_only.model.decoder, both.model.decoder));
  // Encoder outputs for a fixed probe are therefore unchanged.
  EXPECT_EQ(stage1_only.model.encode(val), both.model.encode(val));
}

TEST(Autoencoder, TrainingIsDeterministicGivenSeed) {
  Rng rng(11);
  const Matrix train = subspace_data(120, rng);
  const Matrix val = subspace_data(30, rng);
  AutoencoderConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {6};
  cfg.epochs = 4;
  cfg.batch_size = 16;
  const auto a = train_autoencoder(train, val, cfg, Rng(12));
  const auto b = train_autoencoder(train, val, cfg, Rng(12));
  EXPECT_TRUE(same_bits(a.model.encoder, b.model.encoder));
  EXPECT_TRUE(same_bits(a.model.decoder, b.model.decoder));
}

TEST(Autoencoder, ErrorsAndSerialization) {
  AutoencoderConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {4};
  cfg.epochs = 2;
  EXPECT_THROW(train_autoencoder(Matrix(0, 3), Matrix(2, 3), cfg, Rng(1)), Error);
  cfg.lambda = -1.0;
  EXPECT_THROW(train_autoencoder(Matrix(4, 3, 1.0), Matrix(2, 3), cfg, Rng(1)), ConfigError);
  cfg.lambda = 0.1;
  Rng rng(13);
  const auto fit = train_autoencoder(random_matrix(20, 3, rng), random_matrix(5, 3, rng), cfg, Rng(2));
  nn::ModelContainer c;
  fit.model.save(c);
  const auto loaded = AutoencoderModel::load(nn::ModelContainer::deserialize(c.serialize()));
  EXPECT_TRUE(same_bits(loaded.encoder, fit.model.encoder));
  EXPECT_TRUE(same_bits(loaded.decoder, fit.model.decoder));
  const Matrix probe = random_matrix(3, 3, rng);
  EXPECT_EQ(loaded.composite(probe).features, fit.model.composite(probe).features);
}

TEST(Autoencoder, CompositeFeatureOfSingleRowMatchesBatch) {
  Rng rng(14);
  AutoencoderConfig cfg;
  cfg.latent_dim = 3;
  cfg.hidden = {5};
  Rng init(15);
  const AutoencoderModel m = AutoencoderModel::create(4, cfg, init);
  const Matrix x = random_matrix(3, 4, rng);
  const CompositeBatch batch = m.composite(x);
  const CompositeFeature f = composite_feature(m, x.row(1));
  EXPECT_EQ(f.packed(), Vector(batch.features.row(1).begin(), batch.features.row(1).end()));
}

TEST(Pca, LineDataHasZeroError) {
  Matrix data(30, 2);
  for (std::size_t r = 0; r < 30; ++r) {
    data(r, 0) = 0.1 * r - 1.0;
    data(r, 1) = 2.0 * data(r, 0) + 0.5;
  }
  const PcaModel m = fit_pca(data, 1);
  const CompositeBatch b = m.composite(data);
  for (std::size_t r = 0; r < 30; ++r) EXPECT_NEAR(b.features(r, 1), 0.0, 1e-20);
}

TEST(Pca, OrthogonalResidualProjectsToZero) {
  Rng rng(16);
  const Matrix data = random_matrix(200, 4, rng);
  const PcaModel m = fit_pca(data, 2);
  // v orthogonal to both components: take the third and fourth principal
  // directions from an independent eigensolver.
  Eigen::MatrixXd x(200, 4);
  for (std::size_t r = 0; r < 200; ++r)
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = data(r, c);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered / 200.0);
  Vector point(m.mean);
  Vector v(4);
  for (std::size_t c = 0; c < 4; ++c) {
    v[c] = 0.7 * es.eigenvectors()(c, 0) - 1.1 * es.eigenvectors()(c, 1);
    point[c] += v[c];
  }
  const CompositeFeature f = pca_composite(m, point);
  EXPECT_NEAR(f.latent[0], 0.0, 1e-10);
  EXPECT_NEAR(f.latent[1], 0.0, 1e-10);
  EXPECT_NEAR(f.error, squared_norm(v) / 4.0, 1e-10);
}

TEST(Pca, ReconstructionErrorsMatchEigenOracle) {
  Rng rng(17);
  Matrix data = random_matrix(300, 6, rng);
  for (std::size_t r = 0; r < 300; ++r) {
    data(r, 1) += 2.0 * data(r, 0);
    data(r, 4) -= data(r, 2);
  }
  Eigen::MatrixXd x(300, 6);
  for (std::size_t r = 0; r < 300; ++r)
    for (std::size_t c = 0; c < 6; ++c) x(r, c) = data(r, c);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered / 300.0);
  for (std::size_t d = 1; d <= 5; ++d) {
    const PcaModel m = fit_pca(data, d);
    // Eigen sorts ascending: the top-d directions are the last d columns.
    const Eigen::MatrixXd top = es.eigenvectors().rightCols(static_cast<Eigen::Index>(d));
    const Eigen::MatrixXd rec = (centered * top * top.transpose()).rowwise() + mean;
    const CompositeBatch b = m.composite(data);
    for (std::size_t r = 0; r < 300; ++r) {
      const double oracle = (x.row(r) - rec.row(r)).squaredNorm() / 6.0;
      EXPECT_NEAR(b.features(r, d), oracle, 1e-10) << "d=" << d;
    }
    EXPECT_LT(max_abs_diff(matmul_nt(m.components, m.components), Matrix::identity(d)), 1e-10);
  }
}

TEST(Pca, ErrorNonIncreasingInDimension) {
  Rng rng(18);
  const Matrix data = random_matrix(100, 5, rng);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t d = 1; d <= 5; ++d) {
    const CompositeBatch b = fit_pca(data, d).composite(data);
    const Vector means = column_means(b.features);
    EXPECT_LE(means[d], previous + 1e-15);
    previous = means[d];
  }
}

TEST(Pca, RankDeficiencyIsNamed) {
  Matrix data(10, 3);
  for (std::size_t r = 0; r < 10; ++r) {
    data(r, 0) = static_cast<double>(r);
    data(r, 1) = 2.0 * r;
    data(r, 2) = -1.0 * r;
  }
  try {
    fit_pca(data, 2);
    FAIL() << "expected rank error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("rank 1"), std::string::npos) << e.what();
  }
}

TEST(Pca, SerializationRoundTrip) {
  Rng rng(19);
  const PcaModel m = fit_pca(random_matrix(40, 5, rng), 3);
  nn::ModelContainer c;
  m.save(c);
  const PcaModel loaded = PcaModel::load(nn::ModelContainer::deserialize(c.serialize()));
  EXPECT_EQ(loaded.components, m.components);
  EXPECT_EQ(loaded.mean, m.mean);
}

}  // namespace
}  // namespace cance::compress
