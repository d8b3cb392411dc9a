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
#include <sstream>
#include <string>
#include <vector>

#include "cance/compress/covariance_loss.hpp"
#include "cance/compress/features.hpp"
#include "cance/core/error.hpp"
#include "cance/core/linalg.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/nn/adamw.hpp"
#include "cance/nn/network.hpp"
#include "cance/nn/serialize.hpp"

namespace cance::compress {

// Latent condition number above which training reports a warning suggesting
// a larger covariance-loss weight.
inline constexpr double kLatentConditionLimit = 1e6;

enum class CheckpointLoss { full, error_only };

struct AutoencoderConfig {
  std::size_t latent_dim = 6;
  std::vector<std::size_t> hidden = {128, 64};
  nn::Activation activation = nn::Activation::relu;
  double lambda = 0.3;
  std::size_t epochs = 20;        // split between the two stages
  double stage1_fraction = 0.5;
  std::size_t batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 0.01;
  CheckpointLoss checkpoint = CheckpointLoss::full;

  std::size_t stage1_epochs() const {
    return static_cast<std::size_t>(std::ceil(stage1_fraction * static_cast<double>(epochs)));
  }
  std::size_t stage2_epochs() const { return epochs - std::min(epochs, stage1_epochs()); }
};

// Encoder ends in a batch-norm layer of width latent_dim; the decoder maps
// latent_dim back to the input dimension.
struct AutoencoderModel {
  nn::Network encoder;
  nn::Network decoder;
  double lambda = 0.0;

  std::size_t input_dim() const { return encoder.input_dim(); }
  std::size_t latent_dim() const { return encoder.output_dim(); }

  static AutoencoderModel create(std::size_t input_dim, const AutoencoderConfig& config, Rng& rng) {
    if (config.latent_dim == 0) throw ConfigError("latent dimension must be positive");
    AutoencoderModel m;
    m.lambda = config.lambda;
    m.encoder = nn::Network::mlp(input_dim, config.hidden, config.latent_dim, config.activation,
                                 nn::Activation::identity, rng);
    m.encoder.add(nn::BatchNormLayer(config.latent_dim));
    std::vector<std::size_t> mirrored(config.hidden.rbegin(), config.hidden.rend());
    m.decoder = nn::Network::mlp(config.latent_dim, mirrored, input_dim, config.activation,
                                 nn::Activation::identity, rng);
    return m;
  }

  Matrix encode(const Matrix& x) const { return encoder.predict(x); }
  Matrix reconstruct(const Matrix& x) const { return decoder.predict(encoder.predict(x)); }

  CompositeBatch composite(const Matrix& x) const {
    const Matrix latent = encoder.predict(x);
    return make_composite_batch(latent, x, decoder.predict(latent));
  }

  void save(nn::ModelContainer& c) const {
    c.header["compressor"] = "autoencoder";
    c.header["autoencoder"] = {{"input_dim", input_dim()},
                               {"latent_dim", latent_dim()},
                               {"lambda", lambda}};
    c.put_network("encoder", encoder);
    c.put_network("decoder", decoder);
  }

  static AutoencoderModel load(const nn::ModelContainer& c) {
    AutoencoderModel m;
    m.encoder = c.get_network("encoder");
    m.decoder = c.get_network("decoder");
    m.lambda = c.header.at("autoencoder").at("lambda").get<double>();
    const auto& h = c.header.at("autoencoder");
    if (h.at("input_dim").get<std::size_t>() != m.input_dim() ||
        h.at("latent_dim").get<std::size_t>() != m.latent_dim() ||
        m.decoder.input_dim() != m.latent_dim() || m.decoder.output_dim() != m.input_dim()) {
      throw ShapeError("autoencoder header dimensions do not match stored networks");
    }
    return m;
  }
};

inline CompositeFeature composite_feature(const AutoencoderModel& m, std::span<const double> x) {
  const Matrix batch = Matrix::row_vector(x);
  const CompositeBatch b = m.composite(batch);
  return CompositeFeature::unpack(b.features.row(0));
}

struct AutoencoderReport {
  std::vector<double> stage1_train_loss;
  std::vector<double> stage1_val_loss;
  std::vector<double> stage2_train_loss;
  std::vector<double> stage2_val_loss;
  std::size_t stage1_best_epoch = 0;  // 0 = initialization
  std::size_t stage2_best_epoch = 0;
  double best_stage1_val = 0.0;
  double best_stage2_val = 0.0;       // validation reconstruction error
  double latent_condition = 0.0;
  std::optional<std::string> warning;
};

struct AutoencoderFit {
  AutoencoderModel model;
  AutoencoderReport report;
};

namespace detail {

inline double reconstruction_loss(const Matrix& x, const Matrix& x_rec, Matrix* grad) {
  const double n = static_cast<double>(x.rows());
  double loss = 0.0;
  if (grad) *grad = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x_rec.data()[i] - x.data()[i];
    loss += d * d;
    if (grad) grad->data()[i] = 2.0 * d / n;
  }
  return loss / n;
}

inline std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch,
                                                         Rng& rng) {
  std::vector<std::size_t> order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing single row cannot be batch-normalized in train mode.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

inline void require_finite(double loss, const char* stage, std::size_t epoch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "autoencoder " << stage << " loss became non-finite at epoch " << epoch;
    throw NumericError(msg.str());
  }
}

}  // namespace detail

// Decoupled two-stage training. Stage 1 fits encoder and decoder on
// L_error + lambda * L_cov; stage 2 restores the best stage-1 checkpoint,
// freezes the encoder (batch norm on running statistics) and fits the
// decoder on L_error alone. Each stage keeps its lowest-validation-loss
// checkpoint.
inline AutoencoderFit train_autoencoder(const Matrix& train, const Matrix& val,
                                        const AutoencoderConfig& config, const Rng& rng) {
  if (train.rows() < 2) throw Error("train_autoencoder: need at least two training rows");
  if (val.rows() == 0) throw Error("train_autoencoder: empty validation set");
  if (val.cols() != train.cols()) throw ShapeError("train_autoencoder: train/validation widths differ");
  if (config.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (config.batch_size < 2) throw ConfigError("autoencoder batch size must be at least 2");
  const bool use_cov = config.lambda > 0.0;
  if (use_cov && config.latent_dim < 2) {
    throw ConfigError("covariance loss needs latent_dim >= 2 (or lambda = 0)");
  }

  Rng init_rng = rng.substream("ae/init");
  AutoencoderFit fit{AutoencoderModel::create(train.cols(), config, init_rng), {}};
  AutoencoderModel& model = fit.model;
  AutoencoderReport& report = fit.report;

  auto stage1_val = [&](const AutoencoderModel& m) {
    const Matrix latent = m.encoder.predict(val);
    double loss = detail::reconstruction_loss(val, m.decoder.predict(latent), nullptr);
    if (use_cov && config.checkpoint == CheckpointLoss::full && val.rows() >= 2) {
      loss += config.lambda * covariance_loss(latent);
    }
    return loss;
  };
  auto stage2_val = [&](const AutoencoderModel& m) {
    return detail::reconstruction_loss(val, m.reconstruct(val), nullptr);
  };

  // Stage 1.
  nn::AdamWConfig opt{.lr = config.lr, .weight_decay = config.weight_decay};
  nn::AdamWState enc_state(opt), dec_state(opt);
  AutoencoderModel best = model;
  report.best_stage1_val = stage1_val(model);
  Rng shuffle1 = rng.substream("ae/stage1/shuffle");
  for (std::size_t epoch = 1; epoch <= config.stage1_epochs(); ++epoch) {
    double total = 0.0;
    for (const auto& idx : detail::minibatches(train.rows(), config.batch_size, shuffle1)) {
      const Matrix x = select_rows(train, idx);
      const Matrix latent = model.encoder.forward(x, nn::Mode::train);
      const Matrix x_rec = model.decoder.forward(latent, nn::Mode::train);
      Matrix d_rec;
      double loss = detail::reconstruction_loss(x, x_rec, &d_rec);
      const nn::Backprop dec = model.decoder.backward(d_rec);
      Matrix d_latent = dec.input_grad;
      if (use_cov) {
        const CovarianceLoss cov = covariance_loss_with_grad(latent);
        loss += config.lambda * cov.value;
        d_latent += cov.grad * config.lambda;
      }
      detail::require_finite(loss, "stage-1", epoch);
      const nn::Backprop enc = model.encoder.backward(d_latent);
      nn::adamw_step(enc_state, model.encoder.parameters(), enc.grads);
      nn::adamw_step(dec_state, model.decoder.parameters(), dec.grads);
      total += loss * static_cast<double>(idx.size());
    }
    report.stage1_train_loss.push_back(total / static_cast<double>(train.rows()));
    const double v = stage1_val(model);
    detail::require_finite(v, "stage-1 validation", epoch);
    report.stage1_val_loss.push_back(v);
    if (v < report.best_stage1_val) {
      report.best_stage1_val = v;
      report.stage1_best_epoch = epoch;
      best = model;
    }
  }
  model = best;
  model.encoder.clear_cache();
  model.decoder.clear_cache();

  // Stage 2: encoder frozen.
  nn::AdamWState dec2_state(opt);
  report.best_stage2_val = stage2_val(model);
  Rng shuffle2 = rng.substream("ae/stage2/shuffle");
  for (std::size_t epoch = 1; epoch <= config.stage2_epochs(); ++epoch) {
    double total = 0.0;
    for (const auto& idx : detail::minibatches(train.rows(), config.batch_size, shuffle2)) {
      const Matrix x = select_rows(train, idx);
      const Matrix latent = model.encoder.predict(x);
      const Matrix x_rec = model.decoder.forward(latent, nn::Mode::train);
      Matrix d_rec;
      const double loss = detail::reconstruction_loss(x, x_rec, &d_rec);
      detail::require_finite(loss, "stage-2", epoch);
      const nn::Backprop dec = model.decoder.backward(d_rec);
      nn::adamw_step(dec2_state, model.decoder.parameters(), dec.grads);
      total += loss * static_cast<double>(idx.size());
    }
    report.stage2_train_loss.push_back(total / static_cast<double>(train.rows()));
    const double v = stage2_val(model);
    detail::require_finite(v, "stage-2 validation", epoch);
    report.stage2_val_loss.push_back(v);
    if (v < report.best_stage2_val) {
      report.best_stage2_val = v;
      report.stage2_best_epoch = epoch;
      best.decoder = model.decoder;
    }
  }
  model = best;
  model.decoder.clear_cache();

  if (val.rows() >= 2) {
    report.latent_condition = condition_number(covariance(model.encode(val)));
    if (!(report.latent_condition < kLatentConditionLimit)) {
      std::ostringstream msg;
      msg << "latent covariance condition number " << report.latent_condition
          << " exceeds " << kLatentConditionLimit << "; consider raising lambda";
      report.warning = msg.str();
    }
  }
  return fit;
}

}  // namespace cance::compress
