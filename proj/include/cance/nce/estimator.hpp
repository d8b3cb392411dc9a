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
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cance/compress/autoencoder.hpp"
#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/nce/augment.hpp"
#include "cance/nce/noise.hpp"
#include "cance/nn/adamw.hpp"
#include "cance/nn/network.hpp"
#include "cance/nn/serialize.hpp"
#include "cance/stats/gaussian.hpp"
#include "cance/stats/moments.hpp"
#include "cance/stats/proposition.hpp"

namespace cance::nce {

// Batch NCE loss on precomputed logits, with its gradient per logit:
//   -(1/M) sum ln s(t_i) - (nu/N) sum ln(1 - s(t'_j))
struct NceLoss {
  double value = 0.0;
  Vector data_grad;
  Vector noise_grad;
};

inline NceLoss nce_loss_from_logits(std::span<const double> data_logits,
                                    std::span<const double> noise_logits, double nu) {
  if (data_logits.empty() || noise_logits.empty()) throw Error("nce loss: empty batch");
  if (!(nu > 0.0)) throw ConfigError("noise-sample ratio nu must be positive");
  const double m = static_cast<double>(data_logits.size());
  const double w = nu / static_cast<double>(noise_logits.size());
  NceLoss out;
  out.data_grad.resize(data_logits.size());
  out.noise_grad.resize(noise_logits.size());
  for (std::size_t i = 0; i < data_logits.size(); ++i) {
    const double t = data_logits[i];
    out.value -= log_sigmoid(t) / m;
    out.data_grad[i] = -nn::sigmoid(-t) / m;
  }
  for (std::size_t j = 0; j < noise_logits.size(); ++j) {
    const double t = noise_logits[j];
    out.value -= w * log_one_minus_sigmoid(t);
    out.noise_grad[j] = w * nn::sigmoid(t);
  }
  return out;
}

// Noise rows are passed already transformed (i.e. L_K(v)).
inline double nce_loss(const nn::Network& net, const Matrix& data, const Matrix& noise, double nu) {
  const Matrix td = net.predict(data);
  const Matrix tn = net.predict(noise);
  return nce_loss_from_logits(td.storage(), tn.storage(), nu).value;
}

// The noise objective minimized over psi:
//   A = (1/M) sum ln s(T(L_K(w_i))) + (nu/N) sum ln(1 - s(T(L_K(v_j))))
// with w_i = L_K^{-1}(z_i) computed beforehand and held fixed, so only the
// outer L_K carries gradient.
struct NoiseObjective {
  double value = 0.0;
  Vector psi_grad;
};

inline NoiseObjective noise_objective(const nn::Network& net, const NoiseModel& noise,
                                      const Matrix& inner_data, const Matrix& base_noise) {
  if (inner_data.rows() == 0 || base_noise.rows() == 0) throw Error("noise objective: empty batch");
  const std::size_t m = inner_data.rows(), n = base_noise.rows(), dim = noise.dim();
  const Matrix stacked = vstack(inner_data, base_noise);
  const Matrix moved = noise.transform(stacked);

  nn::Network scratch = net;  // caches live on the copy; net is never touched
  const Matrix logits = scratch.forward(moved, nn::Mode::train);
  const double wd = 1.0 / static_cast<double>(m);
  const double wn = noise.nu() / static_cast<double>(n);
  NoiseObjective out;
  Matrix upstream(m + n, 1);
  for (std::size_t r = 0; r < m + n; ++r) {
    const double t = logits(r, 0);
    if (r < m) {
      out.value += wd * log_sigmoid(t);
      upstream(r, 0) = wd * nn::sigmoid(-t);
    } else {
      out.value += wn * log_one_minus_sigmoid(t);
      upstream(r, 0) = -wn * nn::sigmoid(t);
    }
  }
  if (!std::isfinite(out.value)) throw NumericError("noise objective is non-finite");

  // d L_K(x)_j / d K_jj = x_j - mu_j;  d K_jj / d psi_j = sigmoid(psi_j)
  const Matrix input_grad = scratch.backward(upstream).input_grad;
  const Vector& mu = noise.mean();
  out.psi_grad.assign(dim, 0.0);
  for (std::size_t r = 0; r < m + n; ++r)
    for (std::size_t j = 0; j < dim; ++j) out.psi_grad[j] += input_grad(r, j) * (stacked(r, j) - mu[j]);
  for (std::size_t j = 0; j < dim; ++j) out.psi_grad[j] *= nn::sigmoid(noise.psi()[j]);
  return out;
}

// One AdamW step on psi against a data batch and untransformed base noise
// draws. The estimator is read only.
inline NoiseObjective adapt_noise(const nn::Network& net, NoiseModel& noise, const Matrix& data,
                                  const Matrix& base_noise, nn::AdamWState& psi_state) {
  const Matrix inner = noise.inverse_transform(data);
  NoiseObjective obj = noise_objective(net, noise, inner, base_noise);
  Matrix psi = Matrix::row_vector(noise.psi());
  Matrix grad = Matrix::row_vector(obj.psi_grad);
  Matrix* params[] = {&psi};
  const Matrix grads[] = {grad};
  nn::adamw_step(psi_state, params, grads);
  noise.psi().assign(psi.storage().begin(), psi.storage().end());
  return obj;
}

enum class ScoreNoise { adapted, initial };

inline std::string to_string(ScoreNoise s) { return s == ScoreNoise::adapted ? "adapted" : "initial"; }
inline ScoreNoise parse_score_noise(const std::string& s) {
  if (s == "adapted") return ScoreNoise::adapted;
  if (s == "initial") return ScoreNoise::initial;
  throw ConfigError("unknown score noise '" + s + "' (expected adapted or initial)");
}

// T_theta plus the noise it was trained against.
struct EstimatorModel {
  nn::Network net;
  NoiseModel noise;
  ScoreNoise score_noise = ScoreNoise::adapted;

  std::size_t dim() const { return net.input_dim(); }

  NoiseModel scoring_noise() const {
    return score_noise == ScoreNoise::adapted ? noise : noise.without_scaling();
  }

  // S_C(z) = -(T(z) + ln nu + ln p_n(z)); higher is more anomalous.
  Vector scores(const Matrix& z) const {
    if (z.cols() != dim()) {
      throw ShapeError("score: features have " + std::to_string(z.cols()) + " columns, model expects " +
                       std::to_string(dim()));
    }
    const NoiseModel pn = scoring_noise();
    const Matrix t = net.predict(z);
    const double log_nu = std::log(pn.nu());
    Vector out(z.rows());
    for (std::size_t r = 0; r < z.rows(); ++r) out[r] = -(t(r, 0) + log_nu + pn.logpdf(z.row(r)));
    return out;
  }

  double score(std::span<const double> z) const {
    return scores(Matrix(1, z.size(), Vector(z.begin(), z.end())))[0];
  }

  void save(nn::ModelContainer& c) const {
    c.header["estimator"] = {{"dim", dim()},
                             {"nu", noise.nu()},
                             {"score_noise", to_string(score_noise)},
                             {"noise_jittered", noise.base().jittered()}};
    c.put_network("estimator_net", net);
    c.put_vector("noise_mean", noise.mean());
    c.put_matrix("noise_cov", noise.base().cov());
    c.put_vector("noise_psi", noise.psi());
  }

  static EstimatorModel load(const nn::ModelContainer& c) {
    const auto& h = c.header.at("estimator");
    EstimatorModel m;
    m.net = c.get_network("estimator_net");
    m.noise = NoiseModel(stats::GaussianModel(c.get_vector("noise_mean"), c.get_matrix("noise_cov")),
                         h.at("nu").get<double>(), c.get_vector("noise_psi"));
    m.score_noise = parse_score_noise(h.at("score_noise").get<std::string>());
    if (h.at("dim").get<std::size_t>() != m.dim() || m.noise.dim() != m.dim() ||
        m.net.output_dim() != 1) {
      throw ShapeError("estimator header dimensions do not match stored parameters");
    }
    return m;
  }
};

inline double anomaly_score(const EstimatorModel& model, std::span<const double> z) {
  return model.score(z);
}
inline Vector anomaly_scores(const EstimatorModel& model, const Matrix& z) { return model.scores(z); }

struct EstimatorConfig {
  double nu = 8.0;
  std::vector<std::size_t> hidden = {64, 64};
  nn::Activation activation = nn::Activation::tanh;
  bool augmentation = true;
  bool adaptation = true;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double psi_lr = -1.0;  // negative: same as lr
  double psi_weight_decay = 0.0;
  double psi_init = -3.0;
  double warmup_fraction = 0.1;
  bool augmented_validation = false;
  ScoreNoise score_noise = ScoreNoise::adapted;

  std::size_t warmup_epochs() const {
    return static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(epochs)));
  }
};

struct EstimatorReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::size_t psi_steps = 0;
  bool diverged = false;
  std::string divergence;
  std::optional<AugmentationParams> augmentation;
  std::optional<stats::AugmentationCheck> error_check;
  std::optional<stats::AugmentationCheck> cosine_check;
  std::vector<std::string> warnings;
};

struct EstimatorFit {
  EstimatorModel model;
  EstimatorReport report;
};

// Gaussian base over training features, accumulated in chunks.
inline stats::GaussianModel fit_noise_base(const Matrix& features, std::size_t chunk = 1024) {
  if (features.rows() < 2) throw Error("noise fit needs at least two rows");
  stats::StreamingMoments moments(features.cols());
  for (std::size_t start = 0; start < features.rows(); start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t r = start; r < std::min(features.rows(), start + chunk); ++r) idx.push_back(r);
    moments = stats::update_moments(std::move(moments), select_rows(features, idx));
  }
  return stats::GaussianModel(moments.mean, moments.cov);
}

namespace detail {

// Fixed first layer of T mapping each feature to (z - mu) / sd under the
// noise base. It is never updated, which makes the parameterization
// equivariant to translating and rescaling the features.
inline nn::DenseLayer standardizer(const stats::GaussianModel& base) {
  const std::size_t dim = base.dim();
  nn::DenseLayer layer{Matrix(dim, dim), Matrix(1, dim), nn::Activation::identity};
  for (std::size_t j = 0; j < dim; ++j) {
    const double var = base.cov()(j, j);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    layer.weights(j, j) = inv;
    layer.bias(0, j) = -base.mean()[j] * inv;
  }
  return layer;
}

inline constexpr std::size_t kFrozenParams = 2;  // standardizer weights and bias

inline std::size_t noise_count(double nu, std::size_t m) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nu * static_cast<double>(m))));
}

inline void check_augmentation(const Matrix& train, const AugmentationParams& aug,
                               const NoiseModel& noise, EstimatorReport& report) {
  const std::size_t e = train.cols() - 2, c = train.cols() - 1;
  const Matrix& cov = noise.base().cov();
  const Vector k = noise.scales();
  const Vector ze = train.col(e), zc = train.col(c);
  report.error_check = stats::verify_proposition1(
      ze, aug.error, {noise.mean()[e], k[e] * std::sqrt(cov(e, e))});
  report.cosine_check = stats::verify_proposition1(
      zc, aug.cosine, {noise.mean()[c], k[c] * std::sqrt(cov(c, c))});
  if (!report.error_check->passed) {
    report.warnings.push_back("augmentation check failed for the reconstruction-error feature");
  }
  if (!report.cosine_check->passed) {
    report.warnings.push_back("augmentation check failed for the cosine feature");
  }
}

}  // namespace detail

// Alternates theta-steps on the batch NCE loss (data from the augmented
// mixture when enabled) with psi-steps on the noise objective. Keeps the
// lowest-validation-loss checkpoint; on a non-finite loss training stops
// and that checkpoint is returned with report.diverged set.
inline EstimatorFit train_estimator(const Matrix& train, const Matrix& val,
                                    const EstimatorConfig& config, const Rng& rng,
                                    std::optional<stats::GaussianModel> noise_base = std::nullopt) {
  if (train.rows() < 2) throw Error("train_estimator: need at least two training rows");
  if (val.rows() == 0) throw Error("train_estimator: empty validation set");
  if (val.cols() != train.cols()) throw ShapeError("train_estimator: train/validation widths differ");
  if (config.batch_size == 0) throw ConfigError("estimator batch size must be positive");
  if (config.augmentation && train.cols() < 2) {
    throw ConfigError("augmentation needs the two reconstruction feature columns");
  }

  const std::size_t dim = train.cols();
  stats::GaussianModel base = noise_base ? std::move(*noise_base) : fit_noise_base(train);
  if (base.dim() != dim) throw ShapeError("train_estimator: noise base dimension differs from features");

  EstimatorFit fit;
  EstimatorReport& report = fit.report;
  EstimatorModel& model = fit.model;
  Rng init_rng = rng.substream("nce/init");
  nn::Network body =
      nn::Network::mlp(dim, config.hidden, 1, config.activation, nn::Activation::identity, init_rng);
  model.net.add(detail::standardizer(base));
  for (auto& layer : body.layers()) model.net.add(std::move(layer));
  model.noise = config.adaptation ? NoiseModel(base, config.nu, Vector(dim, config.psi_init))
                                  : NoiseModel(base, config.nu);
  model.score_noise = config.score_noise;
  if (base.jittered()) report.warnings.push_back("feature covariance was jittered to factorize");

  AugmentationParams aug;
  if (config.augmentation) {
    aug = fit_augmentation(train);
    report.augmentation = aug;
    detail::check_augmentation(train, aug, model.noise, report);
  }

  nn::AdamWState theta_state(nn::AdamWConfig{.lr = config.lr, .weight_decay = config.weight_decay});
  nn::AdamWState psi_state(nn::AdamWConfig{.lr = config.psi_lr < 0.0 ? config.lr : config.psi_lr,
                                           .weight_decay = config.psi_weight_decay});

  Rng shuffle_rng = rng.substream("nce/shuffle");
  Rng augment_rng = rng.substream("nce/augment");
  Rng noise_rng = rng.substream("nce/noise");
  Rng val_rng = rng.substream("nce/val-noise");
  const Matrix val_base = model.noise.sample_base(detail::noise_count(config.nu, val.rows()), val_rng);
  const Matrix val_data =
      config.augmented_validation ? augment_batch(val, aug, val_rng).features : val;

  auto validation_loss = [&](const EstimatorModel& m) {
    return nce_loss(m.net, val_data, m.noise.transform(val_base), config.nu);
  };

  EstimatorModel best = model;
  bool have_best = false;
  report.best_val = std::numeric_limits<double>::infinity();
  const std::size_t warmup = config.warmup_epochs();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    try {
      double sum = 0.0;
      std::size_t rows = 0;
      for (const auto& idx : compress::detail::minibatches(train.rows(), config.batch_size, shuffle_rng)) {
        Matrix data = select_rows(train, idx);
        if (config.augmentation) data = augment_batch(data, aug, augment_rng).features;
        const std::size_t m = data.rows();
        const Matrix base_noise = model.noise.sample_base(detail::noise_count(config.nu, m), noise_rng);

        const Matrix logits = model.net.forward(vstack(data, model.noise.transform(base_noise)));
        const std::span<const double> all = logits.storage();
        const NceLoss loss = nce_loss_from_logits(all.first(m), all.subspan(m), config.nu);
        if (!std::isfinite(loss.value)) throw NumericError("NCE loss became non-finite");
        Matrix upstream(logits.rows(), 1);
        for (std::size_t r = 0; r < m; ++r) upstream(r, 0) = loss.data_grad[r];
        for (std::size_t r = m; r < logits.rows(); ++r) upstream(r, 0) = loss.noise_grad[r - m];
        const nn::Backprop bp = model.net.backward(upstream);
        const std::vector<Matrix*> params = model.net.parameters();
        nn::adamw_step(theta_state, std::span(params).subspan(detail::kFrozenParams),
                       std::span(bp.grads).subspan(detail::kFrozenParams));
        sum += loss.value * static_cast<double>(m);
        rows += m;

        if (config.adaptation && epoch > warmup) {
          adapt_noise(model.net, model.noise, data, base_noise, psi_state);
          ++report.psi_steps;
        }
      }
      model.net.clear_cache();
      report.train_loss.push_back(sum / static_cast<double>(rows));
      const double v = validation_loss(model);
      if (!std::isfinite(v)) throw NumericError("validation NCE loss became non-finite");
      report.val_loss.push_back(v);
      if (v < report.best_val) {
        report.best_val = v;
        report.best_epoch = epoch;
        best = model;
        have_best = true;
      }
    } catch (const NumericError& e) {
      std::ostringstream msg;
      msg << "estimator diverged at epoch " << epoch << ": " << e.what();
      if (!have_best) throw NumericError(msg.str());
      report.diverged = true;
      report.divergence = msg.str();
      report.warnings.push_back(msg.str());
      break;
    }
  }
  if (!have_best) throw Error("train_estimator: no epochs were run");
  model = std::move(best);
  model.net.clear_cache();
  return fit;
}

}  // namespace cance::nce
