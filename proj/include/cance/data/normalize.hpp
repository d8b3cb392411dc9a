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

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/data/dataset.hpp"

namespace cance::data {

enum class Scaling { none, zscore, minmax };

inline std::string to_string(Scaling s) {
  switch (s) {
    case Scaling::none: return "none";
    case Scaling::zscore: return "zscore";
    case Scaling::minmax: return "minmax";
  }
  return "?";
}

inline Scaling parse_scaling(const std::string& s) {
  if (s == "none") return Scaling::none;
  if (s == "zscore") return Scaling::zscore;
  if (s == "minmax") return Scaling::minmax;
  throw ConfigError("unknown normalization '" + s + "' (expected none, zscore or minmax)");
}

// Per-column (x - shift) / scale with statistics fitted on training rows
// only. Columns without spread keep scale 1, so they are only centered.
struct Normalizer {
  Scaling kind = Scaling::none;
  Vector shift;
  Vector scale;

  static Normalizer fit(const Matrix& train, Scaling kind) {
    Normalizer n{kind, Vector(train.cols(), 0.0), Vector(train.cols(), 1.0)};
    if (kind == Scaling::none) return n;
    if (train.rows() == 0) throw Error("cannot fit normalization on an empty set");
    for (std::size_t j = 0; j < train.cols(); ++j) {
      const Vector col = train.col(j);
      if (kind == Scaling::zscore) {
        double mean = 0.0, var = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(col.size());
        for (double v : col) var += (v - mean) * (v - mean);
        var /= static_cast<double>(col.size());
        n.shift[j] = mean;
        if (var > 0.0) n.scale[j] = std::sqrt(var);
      } else {
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        n.shift[j] = *lo;
        if (*hi > *lo) n.scale[j] = *hi - *lo;
      }
    }
    return n;
  }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != shift.size()) {
      throw ShapeError("normalizer fitted on " + std::to_string(shift.size()) + " columns, got " +
                       std::to_string(x.cols()));
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols(); ++j) out(r, j) = (x(r, j) - shift[j]) / scale[j];
    return out;
  }

  Dataset apply(Dataset d) const {
    d.features = apply(d.features);
    return d;
  }
};

inline Dataset normalize(const Dataset& d, const Normalizer& fitted) { return fitted.apply(d); }

}  // namespace cance::data
