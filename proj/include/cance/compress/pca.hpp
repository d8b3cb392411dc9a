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
#include <string>

#include "cance/compress/features.hpp"
#include "cance/core/error.hpp"
#include "cance/core/linalg.hpp"
#include "cance/core/matrix.hpp"
#include "cance/nn/serialize.hpp"

namespace cance::compress {

// Eigenvalues at or below this fraction of the largest count as zero when
// estimating the rank of the data.
inline constexpr double kPcaRankTolerance = 1e-10;

struct PcaModel {
  Vector mean;        // D
  Matrix components;  // d x D, orthonormal rows, descending variance
  Vector explained_variance;

  std::size_t input_dim() const { return components.cols(); }
  std::size_t latent_dim() const { return components.rows(); }

  Matrix encode(const Matrix& x) const {
    check(x);
    Matrix centered = x;
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) centered(r, c) -= mean[c];
    return matmul_nt(centered, components);
  }

  Matrix decode(const Matrix& latent) const {
    Matrix out = matmul(latent, components);
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += mean[c];
    return out;
  }

  Matrix reconstruct(const Matrix& x) const { return decode(encode(x)); }

  CompositeBatch composite(const Matrix& x) const {
    const Matrix latent = encode(x);
    return make_composite_batch(latent, x, decode(latent));
  }

  void save(nn::ModelContainer& c) const {
    c.header["compressor"] = "pca";
    c.header["pca"] = {{"input_dim", input_dim()}, {"latent_dim", latent_dim()}};
    c.put_vector("pca_mean", mean);
    c.put_matrix("pca_components", components);
    c.put_vector("pca_explained_variance", explained_variance);
  }

  static PcaModel load(const nn::ModelContainer& c) {
    PcaModel m{c.get_vector("pca_mean"), c.get_matrix("pca_components"),
               c.get_vector("pca_explained_variance")};
    const auto& h = c.header.at("pca");
    if (m.mean.size() != m.input_dim() || h.at("input_dim").get<std::size_t>() != m.input_dim() ||
        h.at("latent_dim").get<std::size_t>() != m.latent_dim()) {
      throw ShapeError("pca header dimensions do not match stored tensors");
    }
    return m;
  }

 private:
  void check(const Matrix& x) const {
    if (x.cols() != input_dim()) {
      throw ShapeError("pca: input has " + std::to_string(x.cols()) + " columns, model expects " +
                       std::to_string(input_dim()));
    }
  }
};

inline PcaModel fit_pca(const Matrix& data, std::size_t d) {
  const std::size_t dim = data.cols();
  if (d == 0) throw ConfigError("pca: latent dimension must be positive");
  if (d > dim) {
    throw ConfigError("pca: latent dimension " + std::to_string(d) + " exceeds input dimension " +
                      std::to_string(dim));
  }
  if (data.rows() <= d) {
    throw Error("pca: need more than " + std::to_string(d) + " rows, got " +
                std::to_string(data.rows()));
  }
  PcaModel m;
  m.mean = column_means(data);
  const SymmetricEigen eig = symmetric_eigen(covariance(data, m.mean));
  const double top = std::max(eig.values.front(), 0.0);
  std::size_t rank = 0;
  for (double v : eig.values)
    if (v > kPcaRankTolerance * top && v > 0.0) ++rank;
  if (d > rank) {
    throw Error("pca: requested " + std::to_string(d) + " components but the data has rank " +
                std::to_string(rank));
  }
  m.components = Matrix(d, dim);
  m.explained_variance.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(d));
  for (std::size_t j = 0; j < d; ++j) {
    // Sign convention: the largest-magnitude entry of each component is positive.
    std::size_t arg = 0;
    for (std::size_t k = 1; k < dim; ++k)
      if (std::abs(eig.vectors(k, j)) > std::abs(eig.vectors(arg, j))) arg = k;
    const double sign = eig.vectors(arg, j) < 0 ? -1.0 : 1.0;
    for (std::size_t k = 0; k < dim; ++k) m.components(j, k) = sign * eig.vectors(k, j);
  }
  return m;
}

inline CompositeFeature pca_composite(const PcaModel& m, std::span<const double> x) {
  return CompositeFeature::unpack(m.composite(Matrix::row_vector(x)).features.row(0));
}

}  // namespace cance::compress
