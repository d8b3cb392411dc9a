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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cance/core/error.hpp"

namespace cance::eval {

// Scores (higher = more anomalous) with labels (1 = anomaly).
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const {
    if (scores.size() != labels.size()) {
      throw ShapeError("scored set: " + std::to_string(scores.size()) + " scores, " +
                       std::to_string(labels.size()) + " labels");
    }
    for (int l : labels)
      if (l != 0 && l != 1) throw Error("scored set: labels must be 0 or 1");
    for (double s : scores)
      if (std::isnan(s)) throw NumericError("scored set: NaN score");
  }
};

// Mann-Whitney statistic from midranks: P(anomaly > normal) + P(tie) / 2.
inline double auroc(const ScoredSet& set) {
  set.validate();
  const std::size_t n = set.scores.size();
  const auto n_anom = static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
  const std::size_t n_norm = n - n_anom;
  if (n_anom == 0 || n_norm == 0) throw Error("auroc needs both normal and anomalous rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (set.labels[order[k]] == 1) rank_sum += midrank;
    i = j;
  }
  const double a = static_cast<double>(n_anom);
  return (rank_sum - a * (a + 1.0) / 2.0) / (a * static_cast<double>(n_norm));
}

// Linear-interpolation percentile, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Rows scoring strictly above the (1 - rate) quantile are predicted
// anomalous; returns the F1 of those predictions (0 when nothing is hit).
inline double f1_at_contamination(const ScoredSet& set, double rate) {
  set.validate();
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("contamination rate must lie in (0, 1)");
  if (set.scores.empty()) throw Error("f1 of an empty set");
  const double threshold = quantile(set.scores, 1.0 - rate);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    const bool predicted = set.scores[i] > threshold;
    const bool actual = set.labels[i] == 1;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline double anomaly_fraction(const ScoredSet& set) {
  if (set.labels.empty()) throw Error("anomaly fraction of an empty set");
  return static_cast<double>(std::count(set.labels.begin(), set.labels.end(), 1)) /
         static_cast<double>(set.labels.size());
}

}  // namespace cance::eval
