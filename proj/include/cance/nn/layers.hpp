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
#include <string_view>
#include <variant>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"

namespace cance::nn {

enum class Activation { identity, relu, tanh, sigmoid };
enum class Mode { train, eval };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity" || s == "linear") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

// Derivative expressed through the activation output y.
inline double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

// y = act(x W^T + b). weights is out x in, bias is 1 x out.
struct DenseLayer {
  Matrix weights;
  Matrix bias;
  Activation activation = Activation::identity;

  DenseLayer() = default;
  DenseLayer(Matrix w, Matrix b, Activation act)
      : weights(std::move(w)), bias(std::move(b)), activation(act) {
    if (bias.rows() != 1 || bias.cols() != weights.rows()) {
      throw ShapeError("dense layer bias " + bias.shape_string() + " does not match weights " +
                       weights.shape_string());
    }
  }

  // Uniform Glorot initialization, zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    return DenseLayer(std::move(w), Matrix(1, out), act);
  }

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  Matrix apply(const Matrix& x) const {
    Matrix z = matmul(x, transpose(weights));
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c)
        row[c] = activate(activation, row[c] + bias(0, c));
    }
    return z;
  }
};

// Per-column batch normalization with learned affine transform.
struct BatchNormLayer {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormLayer() = default;
  explicit BatchNormLayer(std::size_t dim, double momentum_ = 0.1, double epsilon_ = 1e-5)
      : gamma(1, dim, 1.0),
        beta(1, dim, 0.0),
        running_mean(1, dim, 0.0),
        running_var(1, dim, 1.0),
        momentum(momentum_),
        epsilon(epsilon_) {}

  std::size_t dim() const { return gamma.cols(); }

  Matrix apply_eval(const Matrix& x) const {
    Matrix y(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double inv = 1.0 / std::sqrt(running_var(0, c) + epsilon);
      for (std::size_t r = 0; r < x.rows(); ++r)
        y(r, c) = gamma(0, c) * (x(r, c) - running_mean(0, c)) * inv + beta(0, c);
    }
    return y;
  }
};

using Layer = std::variant<DenseLayer, BatchNormLayer>;

}  // namespace cance::nn
