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
#include <numbers>
#include <string>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"
#include "cance/data/dataset.hpp"

namespace cance::data {

// Synthetic benchmark sets. Normal points live in a low-dimensional native
// space (2-D for ring and two-moons, `latent_dim` for subspace, `dim` for
// gaussian-mixture) placed in R^dim through a fixed random orthonormal
// frame. Anomalies are uniform in [-box, box]^dim ("uniform-box") or a
// normal draw pushed off the native plane by `offset` ("off-subspace").
struct SynthSpec {
  std::string kind = "ring";  // gaussian-mixture | ring | two-moons | subspace
  std::string anomalies = "uniform-box";  // uniform-box | off-subspace | none
  std::size_t n_normal = 2000;
  std::size_t n_anomaly = 500;
  std::size_t dim = 2;
  std::size_t latent_dim = 2;   // subspace
  std::size_t components = 3;   // gaussian-mixture
  double radius = 1.0;          // ring
  double noise = 0.05;          // ring / two-moons / subspace isotropic noise
  double component_sd = 0.5;    // gaussian-mixture
  double spread = 4.0;          // gaussian-mixture centers in [-spread, spread]
  double box = 2.0;
  double offset = 1.0;
};

namespace detail {

inline std::size_t native_dim(const SynthSpec& s) {
  if (s.kind == "ring" || s.kind == "two-moons") return 2;
  if (s.kind == "subspace") return s.latent_dim;
  if (s.kind == "gaussian-mixture") return s.dim;
  throw ConfigError("unknown synthetic kind '" + s.kind + "'");
}

// dim x k with orthonormal columns; the identity when k == dim.
inline Matrix random_frame(std::size_t dim, std::size_t k, Rng& rng) {
  if (k == dim) return Matrix::identity(dim);
  Matrix q(dim, k);
  for (std::size_t c = 0; c < k; ++c) {
    Vector v(dim);
    for (;;) {
      for (double& x : v) x = rng.normal();
      for (std::size_t p = 0; p < c; ++p) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d += v[i] * q(i, p);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= d * q(i, p);
      }
      const double n = std::sqrt(squared_norm(v));
      if (n > 1e-6) {
        for (std::size_t i = 0; i < dim; ++i) q(i, c) = v[i] / n;
        break;
      }
    }
  }
  return q;
}

inline Vector native_point(const SynthSpec& s, const Matrix& centers, Rng& rng, int& cls) {
  cls = 0;
  if (s.kind == "ring") {
    const double t = 2.0 * std::numbers::pi * rng.uniform();
    const double r = s.radius + s.noise * rng.normal();
    return {r * std::cos(t), r * std::sin(t)};
  }
  if (s.kind == "two-moons") {
    const double t = std::numbers::pi * rng.uniform();
    const bool lower = rng.bernoulli(0.5);
    cls = lower ? 1 : 0;
    Vector p = lower ? Vector{1.0 - std::cos(t), 0.5 - std::sin(t)} : Vector{std::cos(t), std::sin(t)};
    for (double& x : p) x += s.noise * rng.normal();
    return p;
  }
  if (s.kind == "subspace") {
    Vector p(s.latent_dim);
    for (double& x : p) x = rng.normal();
    return p;
  }
  const std::size_t k = rng.index(s.components);
  cls = static_cast<int>(k);
  Vector p(s.dim);
  for (std::size_t j = 0; j < s.dim; ++j) p[j] = centers(k, j) + s.component_sd * rng.normal();
  return p;
}

}  // namespace detail

inline Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  const std::size_t k = detail::native_dim(spec);
  if (spec.dim < k) throw ConfigError("synthetic dim is smaller than the native dimension");
  if (spec.kind == "gaussian-mixture" && spec.components == 0) throw ConfigError("mixture needs components");
  if (spec.anomalies != "uniform-box" && spec.anomalies != "off-subspace" && spec.anomalies != "none") {
    throw ConfigError("unknown anomaly kind '" + spec.anomalies + "'");
  }
  if (spec.anomalies == "off-subspace" && k == spec.dim) {
    throw ConfigError("off-subspace anomalies need dim larger than the native dimension");
  }
  const Rng root(seed);
  Rng frame_rng = root.substream("synth/frame");
  Rng normal_rng = root.substream("synth/normal");
  Rng anomaly_rng = root.substream("synth/anomaly");
  const Matrix frame = detail::random_frame(spec.dim, k, frame_rng);
  Matrix centers(spec.components, spec.dim);
  for (double& c : centers.data()) c = frame_rng.uniform(-spec.spread, spec.spread);

  const bool with_anomalies = spec.anomalies != "none";
  const std::size_t n = spec.n_normal + (with_anomalies ? spec.n_anomaly : 0);
  Dataset d;
  d.name = "synth:" + spec.kind;
  d.features = Matrix(n, spec.dim);
  d.labels = std::vector<int>(n, 0);
  d.class_ids = std::vector<int>(n, 0);
  const int anomaly_class = spec.kind == "gaussian-mixture" ? static_cast<int>(spec.components)
                            : spec.kind == "two-moons"      ? 2
                                                            : 1;

  auto place = [&](std::size_t r, const Vector& native) {
    for (std::size_t i = 0; i < spec.dim; ++i) {
      double v = 0.0;
      for (std::size_t c = 0; c < k; ++c) v += frame(i, c) * native[c];
      d.features(r, i) = v;
    }
  };
  for (std::size_t r = 0; r < spec.n_normal; ++r) {
    int cls = 0;
    place(r, detail::native_point(spec, centers, normal_rng, cls));
    if (spec.kind == "subspace")
      for (std::size_t i = 0; i < spec.dim; ++i) d.features(r, i) += spec.noise * normal_rng.normal();
    (*d.class_ids)[r] = cls;
  }
  for (std::size_t r = spec.n_normal; r < n; ++r) {
    (*d.labels)[r] = 1;
    (*d.class_ids)[r] = anomaly_class;
    if (spec.anomalies == "uniform-box") {
      for (std::size_t i = 0; i < spec.dim; ++i) d.features(r, i) = anomaly_rng.uniform(-spec.box, spec.box);
      continue;
    }
    int cls = 0;
    place(r, detail::native_point(spec, centers, anomaly_rng, cls));
    // unit direction orthogonal to the frame
    Vector u(spec.dim);
    for (;;) {
      for (double& x : u) x = anomaly_rng.normal();
      for (std::size_t c = 0; c < k; ++c) {
        double dd = 0.0;
        for (std::size_t i = 0; i < spec.dim; ++i) dd += u[i] * frame(i, c);
        for (std::size_t i = 0; i < spec.dim; ++i) u[i] -= dd * frame(i, c);
      }
      const double norm = std::sqrt(squared_norm(u));
      if (norm > 1e-6) {
        for (double& x : u) x /= norm;
        break;
      }
    }
    for (std::size_t i = 0; i < spec.dim; ++i) {
      d.features(r, i) += spec.offset * u[i];
      if (spec.kind == "subspace") d.features(r, i) += spec.noise * anomaly_rng.normal();
    }
  }
  return d;
}

}  // namespace cance::data
