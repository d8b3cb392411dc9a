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
#include <utility>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"

namespace cance::compress {

struct CovarianceLoss {
  double value = 0.0;
  Matrix grad;  // d value / d latent, same shape as the batch
};

// Mean squared off-diagonal entry of the biased batch covariance:
//   L = |off(S)|_F^2 / (d (d - 1)),  S = Zc^T Zc / n
// and its gradient dL/dZ = (2/n) Zc G with G_jk = 2 S_jk / (d (d-1)) off the
// diagonal, zero on it. The mean's own dependence on Z drops out because the
// centered rows sum to zero.
inline CovarianceLoss covariance_loss_with_grad(const Matrix& latent) {
  const std::size_t n = latent.rows(), d = latent.cols();
  if (d < 2) throw ShapeError("covariance loss needs latent dimension >= 2, got " + std::to_string(d));
  if (n < 2) throw ShapeError("covariance loss needs at least two rows");
  const Vector mean = column_means(latent);
  Matrix centered = latent;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) -= mean[c];
  Matrix s = matmul_tn(centered, centered);
  s *= 1.0 / static_cast<double>(n);
  const double norm = 1.0 / static_cast<double>(d * (d - 1));
  CovarianceLoss out;
  Matrix g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (i == j) continue;
      out.value += s(i, j) * s(i, j) * norm;
      g(i, j) = 2.0 * s(i, j) * norm;
    }
  out.grad = matmul(centered, g);
  out.grad *= 2.0 / static_cast<double>(n);
  return out;
}

inline double covariance_loss(const Matrix& latent) { return covariance_loss_with_grad(latent).value; }

}  // namespace cance::compress
