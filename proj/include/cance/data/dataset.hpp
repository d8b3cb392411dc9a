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
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cance/core/error.hpp"
#include "cance/core/matrix.hpp"
#include "cance/core/rng.hpp"

namespace cance::data {

// Feature rows with optional anomaly labels (1 = anomaly) and class ids.
struct Dataset {
  Matrix features;
  std::optional<std::vector<int>> labels;
  std::optional<std::vector<int>> class_ids;
  std::vector<std::string> feature_names;
  std::string name;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const {
    if (labels && labels->size() != size()) {
      throw ShapeError(name + ": " + std::to_string(labels->size()) + " labels for " +
                       std::to_string(size()) + " rows");
    }
    if (class_ids && class_ids->size() != size()) {
      throw ShapeError(name + ": " + std::to_string(class_ids->size()) + " class ids for " +
                       std::to_string(size()) + " rows");
    }
    if (!feature_names.empty() && feature_names.size() != dim()) {
      throw ShapeError(name + ": feature name count differs from width");
    }
    if (!features.all_finite()) throw NumericError(name + ": non-finite feature value");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features = select_rows(features, rows);
    auto pick = [&](const std::optional<std::vector<int>>& v) -> std::optional<std::vector<int>> {
      if (!v) return std::nullopt;
      std::vector<int> o;
      o.reserve(rows.size());
      for (std::size_t r : rows) o.push_back((*v)[r]);
      return o;
    };
    out.labels = pick(labels);
    out.class_ids = pick(class_ids);
    out.feature_names = feature_names;
    out.name = name;
    return out;
  }
};

struct Split {
  Dataset train;
  Dataset val;
};

// Deterministic shuffled holdout; the validation part gets
// round(val_fraction * n) rows, at least one and leaving at least one.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, const Rng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (n < 2) throw Error("cannot split fewer than two rows");
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Rng shuffle = rng.substream("split");
  std::vector<std::size_t> order = shuffle.permutation(n);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(val)};
}

inline Split split_train_val(const Dataset& d, double val_fraction, const Rng& rng) {
  const auto [train, val] = split_indices(d.size(), val_fraction, rng);
  return {d.subset(train), d.subset(val)};
}

struct Benchmark {
  Dataset train;  // normal rows only, unlabeled use
  Dataset test;   // labeled: 1 = anomaly
  std::vector<std::string> warnings;
};

struct BenchmarkSpec {
  std::vector<int> normal_classes;
  std::vector<int> anomaly_classes;  // empty: every non-normal class
  double train_fraction = 0.5;       // share of normal rows used for training (single source)
};

namespace detail {

inline void check_spec(const Dataset& d, const BenchmarkSpec& spec) {
  if (!d.class_ids) throw Error(d.name + ": benchmark construction needs class ids");
  if (spec.normal_classes.empty()) throw ConfigError("normal class set is empty");
  const std::set<int> normal(spec.normal_classes.begin(), spec.normal_classes.end());
  for (int a : spec.anomaly_classes) {
    if (normal.count(a)) throw ConfigError("class " + std::to_string(a) + " is both normal and anomalous");
  }
}

enum class Role { normal, anomaly, dropped };

inline Role role_of(int cls, const BenchmarkSpec& spec) {
  if (std::find(spec.normal_classes.begin(), spec.normal_classes.end(), cls) != spec.normal_classes.end())
    return Role::normal;
  if (spec.anomaly_classes.empty() ||
      std::find(spec.anomaly_classes.begin(), spec.anomaly_classes.end(), cls) != spec.anomaly_classes.end())
    return Role::anomaly;
  return Role::dropped;
}

inline Dataset labeled_test(const Dataset& src, const std::vector<std::size_t>& rows,
                            const BenchmarkSpec& spec) {
  Dataset t = src.subset(rows);
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t r : rows) labels.push_back(role_of((*src.class_ids)[r], spec) == Role::anomaly);
  t.labels = std::move(labels);
  return t;
}

inline void finish(Benchmark& b, const BenchmarkSpec& spec) {
  if (b.train.size() == 0) {
    std::string cls;
    for (int c : spec.normal_classes) cls += (cls.empty() ? "" : ",") + std::to_string(c);
    throw Error("normal class set {" + cls + "} has no training rows");
  }
  const auto& l = *b.test.labels;
  if (std::find(l.begin(), l.end(), 1) == l.end()) {
    b.warnings.push_back("test split contains no anomalies");
  }
  if (std::find(l.begin(), l.end(), 0) == l.end()) {
    b.warnings.push_back("test split contains no normal rows");
  }
}

}  // namespace detail

// Separate train and test sources (e.g. the two MNIST files): train keeps
// the normal rows of the train source, test is the whole test source
// (minus classes outside both sets) labeled by class membership.
inline Benchmark make_benchmark(const Dataset& train_source, const Dataset& test_source,
                                const BenchmarkSpec& spec) {
  detail::check_spec(train_source, spec);
  detail::check_spec(test_source, spec);
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t r = 0; r < train_source.size(); ++r)
    if (detail::role_of((*train_source.class_ids)[r], spec) == detail::Role::normal) train_rows.push_back(r);
  for (std::size_t r = 0; r < test_source.size(); ++r)
    if (detail::role_of((*test_source.class_ids)[r], spec) != detail::Role::dropped) test_rows.push_back(r);
  Benchmark b{train_source.subset(train_rows), detail::labeled_test(test_source, test_rows, spec), {}};
  b.train.labels = std::vector<int>(b.train.size(), 0);
  detail::finish(b, spec);
  return b;
}

// Single source: a train_fraction share of the normal rows trains, the
// remaining normal rows and every anomaly row form the test set.
inline Benchmark make_benchmark(const Dataset& source, const BenchmarkSpec& spec, const Rng& rng) {
  detail::check_spec(source, spec);
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> normal, test_rows;
  for (std::size_t r = 0; r < source.size(); ++r) {
    const auto role = detail::role_of((*source.class_ids)[r], spec);
    if (role == detail::Role::normal) normal.push_back(r);
    if (role == detail::Role::anomaly) test_rows.push_back(r);
  }
  Rng shuffle = rng.substream("benchmark");
  shuffle.shuffle(normal);
  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(normal.size())));
  std::vector<std::size_t> train_rows(normal.begin(), normal.begin() + static_cast<std::ptrdiff_t>(n_train));
  test_rows.insert(test_rows.end(), normal.begin() + static_cast<std::ptrdiff_t>(n_train), normal.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  Benchmark b{source.subset(train_rows), detail::labeled_test(source, test_rows, spec), {}};
  b.train.labels = std::vector<int>(b.train.size(), 0);
  detail::finish(b, spec);
  return b;
}

inline Benchmark make_unimodal(const Dataset& train_source, const Dataset& test_source, int normal_class) {
  return make_benchmark(train_source, test_source, {{normal_class}, {}, 0.5});
}
inline Benchmark make_multimodal(const Dataset& train_source, const Dataset& test_source,
                                 std::vector<int> normal_classes) {
  return make_benchmark(train_source, test_source, {std::move(normal_classes), {}, 0.5});
}
inline Benchmark make_unimodal(const Dataset& source, int normal_class, double train_fraction,
                               const Rng& rng) {
  return make_benchmark(source, {{normal_class}, {}, train_fraction}, rng);
}
inline Benchmark make_multimodal(const Dataset& source, std::vector<int> normal_classes,
                                 double train_fraction, const Rng& rng) {
  return make_benchmark(source, {std::move(normal_classes), {}, train_fraction}, rng);
}

}  // namespace cance::data
