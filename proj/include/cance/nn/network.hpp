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
#include <string>
#include <variant>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/nn/layers.hpp"

namespace cance::nn {

struct Backprop {
  Matrix input_grad;
  // One entry per tensor in Network::parameters(), same order and shapes.
  std::vector<Matrix> grads;
};

// Sequential stack of dense and batch-norm layers with reverse-mode
// gradients. forward() caches what backward() needs; predict() is a
// read-only eval-mode pass and is safe to call concurrently.
class Network {
 public:
  Network() = default;

  // Dense stack in -> hidden... -> out. Hidden layers use `hidden_act`, the
  // output layer `out_act`.
  static Network mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                     Activation hidden_act, Activation out_act, Rng& rng) {
    Network net;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
      net.add(DenseLayer::glorot(prev, h, hidden_act, rng));
      prev = h;
    }
    net.add(DenseLayer::glorot(prev, out, out_act, rng));
    return net;
  }

  void add(Layer layer) {
    const std::size_t in = layer_in(layer);
    if (!layers_.empty() && in != output_dim()) {
      throw ShapeError("layer input " + std::to_string(in) + " does not match network output " +
                       std::to_string(output_dim()));
    }
    layers_.push_back(std::move(layer));
    caches_.clear();
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layer_in(layers_.front()); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layer_out(layers_.back()); }

  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : layers_) {
      if (auto* d = std::get_if<DenseLayer>(&l)) {
        out.push_back(&d->weights);
        out.push_back(&d->bias);
      } else {
        auto& bn = std::get<BatchNormLayer>(l);
        out.push_back(&bn.gamma);
        out.push_back(&bn.beta);
      }
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
    return out;
  }

  // Non-trainable state (batch-norm running statistics).
  std::vector<const Matrix*> buffers() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers_) {
      if (const auto* bn = std::get_if<BatchNormLayer>(&l)) {
        out.push_back(&bn->running_mean);
        out.push_back(&bn->running_var);
      }
    }
    return out;
  }

  Matrix forward(const Matrix& batch, Mode mode = Mode::train) {
    check_input(batch);
    caches_.assign(layers_.size(), Cache{});
    Matrix x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Cache& cache = caches_[i];
      cache.input = x;
      if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
        x = d->apply(x);
      } else {
        x = batchnorm_forward(std::get<BatchNormLayer>(layers_[i]), x, mode, cache);
      }
      cache.output = x;
    }
    if (!x.all_finite()) throw NumericError("network forward produced a non-finite value");
    return x;
  }

  Matrix predict(const Matrix& batch) const {
    check_input(batch);
    Matrix x = batch;
    for (const auto& l : layers_) {
      if (const auto* d = std::get_if<DenseLayer>(&l)) {
        x = d->apply(x);
      } else {
        x = std::get<BatchNormLayer>(l).apply_eval(x);
      }
    }
    if (!x.all_finite()) throw NumericError("network predict produced a non-finite value");
    return x;
  }

  Backprop backward(const Matrix& upstream) const {
    if (caches_.size() != layers_.size() || layers_.empty()) {
      throw StateError("backward called without a cached forward pass");
    }
    const Matrix& out = caches_.back().output;
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
      throw ShapeError("upstream gradient " + upstream.shape_string() +
                       " does not match forward output " + out.shape_string());
    }
    Backprop result;
    std::vector<std::vector<Matrix>> per_layer(layers_.size());
    Matrix g = upstream;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Cache& cache = caches_[i];
      if (const auto* d = std::get_if<DenseLayer>(&layers_[i])) {
        Matrix dz = g;
        for (std::size_t k = 0; k < dz.size(); ++k)
          dz.data()[k] *= activation_slope(d->activation, cache.output.data()[k]);
        Matrix dw = matmul_tn(dz, cache.input);
        Matrix db(1, dz.cols());
        for (std::size_t r = 0; r < dz.rows(); ++r)
          for (std::size_t c = 0; c < dz.cols(); ++c) db(0, c) += dz(r, c);
        g = matmul(dz, d->weights);
        per_layer[i] = {std::move(dw), std::move(db)};
      } else {
        const auto& bn = std::get<BatchNormLayer>(layers_[i]);
        per_layer[i] = batchnorm_backward(bn, cache, g);
      }
    }
    for (auto& grads : per_layer)
      for (auto& m : grads) result.grads.push_back(std::move(m));
    result.input_grad = std::move(g);
    return result;
  }

  bool has_cache() const { return caches_.size() == layers_.size() && !layers_.empty(); }
  void clear_cache() { caches_.clear(); }

 private:
  struct Cache {
    Matrix input;
    Matrix output;
    Matrix x_hat;
    Vector inv_std;
    bool train = true;
  };

  static std::size_t layer_in(const Layer& l) {
    if (const auto* d = std::get_if<DenseLayer>(&l)) return d->in_dim();
    return std::get<BatchNormLayer>(l).dim();
  }
  static std::size_t layer_out(const Layer& l) {
    if (const auto* d = std::get_if<DenseLayer>(&l)) return d->out_dim();
    return std::get<BatchNormLayer>(l).dim();
  }

  void check_input(const Matrix& batch) const {
    if (layers_.empty()) throw StateError("network has no layers");
    if (batch.cols() != input_dim()) {
      throw ShapeError("batch has " + std::to_string(batch.cols()) +
                       " columns, network expects " + std::to_string(input_dim()));
    }
  }

  static Matrix batchnorm_forward(BatchNormLayer& bn, const Matrix& x, Mode mode, Cache& cache) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    cache.x_hat = Matrix(n, d);
    cache.inv_std.assign(d, 0.0);
    Matrix y(n, d);
    if (mode == Mode::train) {
      if (n < 2) throw ShapeError("batch norm in train mode needs at least two rows");
      for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + bn.epsilon);
        cache.inv_std[c] = inv;
        for (std::size_t r = 0; r < n; ++r) {
          const double xh = (x(r, c) - mean) * inv;
          cache.x_hat(r, c) = xh;
          y(r, c) = bn.gamma(0, c) * xh + bn.beta(0, c);
        }
        // Running variance tracks the unbiased estimate.
        const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
        bn.running_mean(0, c) = (1.0 - bn.momentum) * bn.running_mean(0, c) + bn.momentum * mean;
        bn.running_var(0, c) = (1.0 - bn.momentum) * bn.running_var(0, c) + bn.momentum * unbiased;
      }
    } else {
      for (std::size_t c = 0; c < d; ++c) {
        const double inv = 1.0 / std::sqrt(bn.running_var(0, c) + bn.epsilon);
        cache.inv_std[c] = inv;
        for (std::size_t r = 0; r < n; ++r) {
          const double xh = (x(r, c) - bn.running_mean(0, c)) * inv;
          cache.x_hat(r, c) = xh;
          y(r, c) = bn.gamma(0, c) * xh + bn.beta(0, c);
        }
      }
    }
    cache.train = mode == Mode::train;
    return y;
  }

  static std::vector<Matrix> batchnorm_backward(const BatchNormLayer& bn, const Cache& cache,
                                                Matrix& g) {
    const std::size_t n = g.rows();
    const std::size_t d = g.cols();
    Matrix dgamma(1, d), dbeta(1, d);
    Matrix dx(n, d);
    for (std::size_t c = 0; c < d; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        sum_g += g(r, c);
        sum_gx += g(r, c) * cache.x_hat(r, c);
      }
      dgamma(0, c) = sum_gx;
      dbeta(0, c) = sum_g;
      const double scale = bn.gamma(0, c) * cache.inv_std[c];
      if (cache.train) {
        const double nn = static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
          dx(r, c) = scale * (g(r, c) - sum_g / nn - cache.x_hat(r, c) * sum_gx / nn);
      } else {
        for (std::size_t r = 0; r < n; ++r) dx(r, c) = scale * g(r, c);
      }
    }
    g = std::move(dx);
    return {std::move(dgamma), std::move(dbeta)};
  }

  std::vector<Layer> layers_;
  std::vector<Cache> caches_;
};

}  // namespace cance::nn
