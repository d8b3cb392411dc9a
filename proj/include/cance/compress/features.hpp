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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"

namespace cance::compress {

// Cosine dissimilarity assigned when x or its reconstruction has zero norm.
inline constexpr double kDegenerateCosine = 0.5;

struct ReconstructionFeatures {
  double error = 0.0;   // |x - x'|^2 / D
  double cosine = 0.0;  // (1 - cos(x, x')) / 2, in [0, 1]
  bool degenerate = false;
};

inline ReconstructionFeatures reconstruction_features(std::span<const double> x,
                                                      std::span<const double> x_rec) {
  if (x.size() != x_rec.size() || x.empty()) {
    throw ShapeError("reconstruction features: input of length " + std::to_string(x.size()) +
                     ", reconstruction of length " + std::to_string(x_rec.size()));
  }
  ReconstructionFeatures f;
  double diff = 0.0, xx = 0.0, rr = 0.0, xr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - x_rec[i];
    diff += d * d;
    xx += x[i] * x[i];
    rr += x_rec[i] * x_rec[i];
    xr += x[i] * x_rec[i];
  }
  f.error = diff / static_cast<double>(x.size());
  if (xx == 0.0 || rr == 0.0) {
    f.cosine = kDegenerateCosine;
    f.degenerate = true;
  } else {
    const double cos = xr / (std::sqrt(xx) * std::sqrt(rr));
    f.cosine = std::clamp(0.5 * (1.0 - cos), 0.0, 1.0);
  }
  return f;
}

// z = (z_l, z_e, z_c); packed() lays it out as indices 0..d-1 latent,
// d error, d+1 cosine.
struct CompositeFeature {
  Vector latent;
  double error = 0.0;
  double cosine = 0.0;

  std::size_t dim() const { return latent.size() + 2; }

  Vector packed() const {
    Vector v(latent);
    v.push_back(error);
    v.push_back(cosine);
    return v;
  }

  static CompositeFeature unpack(std::span<const double> v) {
    if (v.size() < 2) throw ShapeError("composite feature needs at least two entries");
    CompositeFeature f;
    f.latent.assign(v.begin(), v.end() - 2);
    f.error = v[v.size() - 2];
    f.cosine = v[v.size() - 1];
    return f;
  }
};

inline CompositeFeature make_composite(std::span<const double> latent, std::span<const double> x,
                                       std::span<const double> x_rec) {
  const ReconstructionFeatures r = reconstruction_features(x, x_rec);
  return CompositeFeature{Vector(latent.begin(), latent.end()), r.error, r.cosine};
}

struct CompositeBatch {
  Matrix features;  // n x (d + 2)
  std::size_t degenerate_rows = 0;

  std::size_t latent_dim() const { return features.cols() - 2; }
  std::size_t error_column() const { return features.cols() - 2; }
  std::size_t cosine_column() const { return features.cols() - 1; }
};

inline CompositeBatch make_composite_batch(const Matrix& latent, const Matrix& x,
                                           const Matrix& x_rec) {
  if (latent.rows() != x.rows() || x.rows() != x_rec.rows() || x.cols() != x_rec.cols()) {
    throw ShapeError("composite batch: latent " + latent.shape_string() + ", input " +
                     x.shape_string() + ", reconstruction " + x_rec.shape_string());
  }
  const std::size_t d = latent.cols();
  CompositeBatch out{Matrix(x.rows(), d + 2), 0};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const ReconstructionFeatures f = reconstruction_features(x.row(r), x_rec.row(r));
    auto row = out.features.row(r);
    std::copy(latent.row(r).begin(), latent.row(r).end(), row.begin());
    row[d] = f.error;
    row[d + 1] = f.cosine;
    if (f.degenerate) ++out.degenerate_rows;
  }
  return out;
}

}  // namespace cance::compress
