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

#include <string>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/stats/proposition.hpp"
#include "cance/stats/univariate.hpp"

namespace cance::nce {

// Truncated-normal replacements for the two reconstruction features, the
// last two columns of a composite batch.
struct AugmentationParams {
  stats::TruncatedNormal error;
  stats::TruncatedNormal cosine;
  bool fitted = false;
};

inline AugmentationParams fit_augmentation(const Matrix& composite) {
  if (composite.cols() < 2) throw ShapeError("augmentation needs the two reconstruction columns");
  if (composite.rows() < 2) throw Error("augmentation needs at least two training rows");
  AugmentationParams p;
  p.error = stats::fit_truncated_normal(composite.col(composite.cols() - 2));
  p.cosine = stats::fit_truncated_normal(composite.col(composite.cols() - 1));
  p.fitted = true;
  return p;
}

enum class MixPolicy { random, original, artificial };

struct AugmentedBatch {
  Matrix features;
  std::size_t artificial_rows = 0;
};

// Draws from the equal mixture p_m: each row independently keeps its
// original reconstruction features (A = 1) or has them replaced by
// independent truncated-normal draws (A = 0). Latent columns are never
// touched.
inline AugmentedBatch augment_batch(const Matrix& batch, const AugmentationParams& params, Rng& rng,
                                    MixPolicy policy = MixPolicy::random) {
  if (!params.fitted) throw StateError("augment_batch: augmentation parameters not fitted");
  if (batch.cols() < 2) throw ShapeError("augment_batch: batch lacks reconstruction columns");
  AugmentedBatch out{batch, 0};
  const std::size_t e = batch.cols() - 2, c = batch.cols() - 1;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    bool artificial = policy == MixPolicy::artificial;
    if (policy == MixPolicy::random) artificial = rng.bernoulli(0.5);
    if (!artificial) continue;
    out.features(r, e) = params.error.sample(rng);
    out.features(r, c) = params.cosine.sample(rng);
    ++out.artificial_rows;
  }
  return out;
}

}  // namespace cance::nce
