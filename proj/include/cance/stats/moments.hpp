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

#include <cstddef>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"

namespace cance::stats {

// Mean and biased (1/n) covariance accumulated batch by batch with the exact
// two-group merge:
//   mean' = (n_t mean_t + n_b mean_b) / (n_t + n_b)
//   cov'  = n_t/(n_t+n_b) cov_t + n_b/(n_t+n_b) cov_b
//           + n_t n_b/(n_t+n_b)^2 (mean_t - mean_b)(mean_t - mean_b)^T
struct StreamingMoments {
  std::size_t n = 0;
  Vector mean;
  Matrix cov;

  StreamingMoments() = default;
  explicit StreamingMoments(std::size_t dim) : mean(dim, 0.0), cov(dim, dim) {}

  std::size_t dim() const { return mean.size(); }

  static StreamingMoments of_batch(const Matrix& batch) {
    StreamingMoments m;
    m.n = batch.rows();
    m.mean = column_means(batch);
    m.cov = covariance(batch, m.mean);
    return m;
  }

  void update(const Matrix& batch) {
    if (batch.rows() == 0) throw ShapeError("update_moments: empty batch");
    if (n == 0 && mean.empty()) {
      *this = of_batch(batch);
      return;
    }
    if (batch.cols() != dim()) {
      throw ShapeError("update_moments: batch has " + std::to_string(batch.cols()) +
                       " columns, state has " + std::to_string(dim()));
    }
    merge(of_batch(batch));
  }

  void merge(const StreamingMoments& b) {
    if (b.n == 0) return;
    if (n == 0) {
      if (!mean.empty() && b.dim() != dim()) throw ShapeError("merge: dimension mismatch");
      *this = b;
      return;
    }
    if (b.dim() != dim()) throw ShapeError("merge: dimension mismatch");
    const double nt = static_cast<double>(n), nb = static_cast<double>(b.n);
    const double total = nt + nb;
    const double wt = nt / total, wb = nb / total, wx = nt * nb / (total * total);
    Vector delta(dim());
    for (std::size_t i = 0; i < dim(); ++i) delta[i] = mean[i] - b.mean[i];
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = 0; j < dim(); ++j)
        cov(i, j) = wt * cov(i, j) + wb * b.cov(i, j) + wx * delta[i] * delta[j];
    for (std::size_t i = 0; i < dim(); ++i) mean[i] = (nt * mean[i] + nb * b.mean[i]) / total;
    n += b.n;
  }
};

inline StreamingMoments update_moments(StreamingMoments state, const Matrix& batch) {
  state.update(batch);
  return state;
}

}  // namespace cance::stats
