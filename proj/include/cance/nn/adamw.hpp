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
#include <cstdint>
#include <span>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"

namespace cance::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Moment buffers mirror the parameter list handed to adamw_step; they are
// allocated on the first step.
struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first;
  std::vector<Matrix> second;

  AdamWState() = default;
  explicit AdamWState(AdamWConfig c) : config(c) {}
};

// One AdamW update with decoupled weight decay:
//   p <- p - lr*wd*p
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
inline void adamw_step(AdamWState& state, std::span<Matrix* const> params,
                       std::span<const Matrix> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adamw: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.emplace_back(p->rows(), p->cols());
      state.second.emplace_back(p->rows(), p->cols());
    }
  } else if (state.first.size() != params.size()) {
    throw ShapeError("adamw: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        state.first[i].rows() != grads[i].rows() || state.first[i].cols() != grads[i].cols()) {
      throw ShapeError("adamw: gradient " + std::to_string(i) + " has shape " +
                       grads[i].shape_string() + ", parameter " + params[i]->shape_string());
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adamw: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

}  // namespace cance::nn
