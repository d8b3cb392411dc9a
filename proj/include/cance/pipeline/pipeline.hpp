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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cance/compress/autoencoder.hpp"
#include "cance/compress/pca.hpp"
#include "cance/data/dataset.hpp"
#include "cance/data/io.hpp"
#include "cance/data/normalize.hpp"
#include "cance/data/synth.hpp"
#include "cance/eval/metrics.hpp"
#include "cance/nce/estimator.hpp"
#include "cance/nn/serialize.hpp"
#include "cance/pipeline/config.hpp"

namespace cance::pipeline {

// Which columns of the composite feature feed the density estimator.
enum class FeatureSet { error, latent, composite };

inline std::string to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::error: return "error";
    case FeatureSet::latent: return "latent";
    case FeatureSet::composite: return "composite";
  }
  return "?";
}

inline FeatureSet parse_feature_set(const std::string& s) {
  if (s == "error") return FeatureSet::error;
  if (s == "latent") return FeatureSet::latent;
  if (s == "composite") return FeatureSet::composite;
  throw FormatError("unknown feature set '" + s + "'");
}

inline Matrix select_features(const Matrix& composite, FeatureSet f) {
  const std::size_t d = composite.cols() - 2;
  std::vector<std::size_t> cols;
  if (f == FeatureSet::error) cols = {d};
  if (f == FeatureSet::latent)
    for (std::size_t j = 0; j < d; ++j) cols.push_back(j);
  if (f == FeatureSet::composite) return composite;
  return select_cols(composite, cols);
}

// An ablation arm: which features, whether an estimator is trained at all
// (the error-only arm scores by z_e directly) and whether augmentation is on.
struct Variant {
  std::string name = "CANCE";
  FeatureSet features = FeatureSet::composite;
  bool estimator = true;
  std::optional<bool> augmentation;  // unset: follow the config
};

inline std::vector<Variant> ablation_variants() {
  return {{"Error", FeatureSet::error, false, false},
          {"LatNCE", FeatureSet::latent, true, false},
          {"CNCE", FeatureSet::composite, true, false},
          {"CANCE", FeatureSet::composite, true, true}};
}

struct Compressor {
  std::variant<compress::AutoencoderModel, compress::PcaModel> model;

  std::size_t input_dim() const {
    return std::visit([](const auto& m) { return m.input_dim(); }, model);
  }
  std::size_t latent_dim() const {
    return std::visit([](const auto& m) { return m.latent_dim(); }, model);
  }
  compress::CompositeBatch composite(const Matrix& x) const {
    if (x.cols() != input_dim()) {
      throw ShapeError("input has " + std::to_string(x.cols()) + " columns, model expects " +
                       std::to_string(input_dim()));
    }
    if (x.rows() == 0) return {Matrix(0, latent_dim() + 2), 0};
    return std::visit([&](const auto& m) { return m.composite(x); }, model);
  }
  void save(nn::ModelContainer& c) const {
    std::visit([&](const auto& m) { m.save(c); }, model);
  }
  static Compressor load(const nn::ModelContainer& c) {
    const std::string kind = c.header.at("compressor").get<std::string>();
    if (kind == "autoencoder") return {compress::AutoencoderModel::load(c)};
    if (kind == "pca") return {compress::PcaModel::load(c)};
    throw FormatError("unknown compressor '" + kind + "'");
  }
};

struct PreparedData {
  data::Dataset train, val, test;
  Matrix test_raw;  // test features before normalization
  data::Normalizer normalizer;
  std::vector<std::string> warnings;
};

namespace detail {

inline data::Dataset load_source(const DatasetSpec& ds, const std::string& path) {
  if (ds.source == "csv") return data::load_csv(path, ds.csv);
  return data::load_embeddings(path);
}

}  // namespace detail

// Loads the source, builds the benchmark (training rows are normal only),
// holds out a validation share of the training rows and normalizes all
// three parts with statistics of the training part.
inline PreparedData prepare_data(const RunConfig& c, std::uint64_t seed) {
  const auto& ds = c.dataset;
  const Rng rng = Rng(seed).substream("data");
  data::Benchmark bench;
  if (ds.source == "synth") {
    data::Dataset d = data::synth_generate(ds.synth, seed);
    d.class_ids = d.labels;  // 0 normal, 1 anomaly
    bench = data::make_benchmark(d, {{0}, {1}, ds.train_fraction}, rng);
  } else {
    const data::BenchmarkSpec spec{ds.normal_classes, ds.anomaly_classes, ds.train_fraction};
    if (ds.source == "idx") {
      bench = data::make_benchmark(data::load_idx(ds.train_images, ds.train_labels),
                                   data::load_idx(ds.test_images, ds.test_labels), spec);
    } else if (!ds.test_path.empty()) {
      bench = data::make_benchmark(detail::load_source(ds, ds.path), detail::load_source(ds, ds.test_path), spec);
    } else {
      bench = data::make_benchmark(detail::load_source(ds, ds.path), spec, rng);
    }
  }
  bench.train.validate();
  bench.test.validate();
  PreparedData p;
  p.warnings = bench.warnings;
  data::Split split = data::split_train_val(bench.train, ds.val_fraction, rng);
  p.normalizer = data::Normalizer::fit(split.train.features, ds.normalization);
  p.train = p.normalizer.apply(std::move(split.train));
  p.val = p.normalizer.apply(std::move(split.val));
  p.test_raw = bench.test.features;
  p.test = p.normalizer.apply(std::move(bench.test));
  return p;
}

struct CompressorFit {
  Compressor compressor;
  std::optional<compress::AutoencoderReport> report;
};

inline CompressorFit fit_compressor(const RunConfig& c, const PreparedData& p, std::uint64_t seed) {
  if (c.compression.method == "pca") {
    return {Compressor{compress::fit_pca(p.train.features, c.compression.ae.latent_dim)}, std::nullopt};
  }
  auto fit = compress::train_autoencoder(p.train.features, p.val.features, c.compression.ae,
                                         Rng(seed).substream("compress"));
  return {Compressor{std::move(fit.model)}, std::move(fit.report)};
}

// The persisted scoring chain: normalize, compress, select features, score.
struct ScoringModel {
  std::string config_hash;
  std::string variant = "CANCE";
  data::Normalizer normalizer;
  Compressor compressor;
  FeatureSet features = FeatureSet::composite;
  std::optional<nce::EstimatorModel> estimator;
  json info = json::object();  // fitted augmentation, noise summary

  struct Scored {
    Matrix composite;
    Vector scores;
  };

  Scored score(const Matrix& raw) const {
    Scored out;
    out.composite = compressor.composite(normalizer.apply(raw)).features;
    if (raw.rows() == 0) return out;
    const Matrix f = select_features(out.composite, features);
    if (estimator) {
      out.scores = estimator->scores(f);
    } else {
      out.scores = f.col(0);
    }
    return out;
  }

  nn::ModelContainer to_container() const {
    nn::ModelContainer c;
    c.header["config_hash"] = config_hash;
    c.header["variant"] = variant;
    c.header["features"] = to_string(features);
    c.header["normalization"] = data::to_string(normalizer.kind);
    c.header["info"] = info;
    c.put_vector("normalizer_shift", normalizer.shift);
    c.put_vector("normalizer_scale", normalizer.scale);
    compressor.save(c);
    if (estimator) estimator->save(c);
    return c;
  }

  static ScoringModel from_container(const nn::ModelContainer& c) {
    ScoringModel m;
    m.config_hash = c.header.at("config_hash").get<std::string>();
    m.variant = c.header.at("variant").get<std::string>();
    m.features = parse_feature_set(c.header.at("features").get<std::string>());
    m.normalizer.kind = data::parse_scaling(c.header.at("normalization").get<std::string>());
    m.normalizer.shift = c.get_vector("normalizer_shift");
    m.normalizer.scale = c.get_vector("normalizer_scale");
    m.info = c.header.value("info", json::object());
    m.compressor = Compressor::load(c);
    if (c.header.contains("estimator")) m.estimator = nce::EstimatorModel::load(c);
    if (m.normalizer.shift.size() != m.compressor.input_dim()) {
      throw ShapeError("normalizer width does not match the compressor input");
    }
    return m;
  }

  void save(const std::string& path) const { to_container().save(path); }
  static ScoringModel load(const std::string& path) { return from_container(nn::ModelContainer::load(path)); }
};

struct Metrics {
  double auroc = 0.0;
  double f1 = 0.0;
  double contamination = 0.0;

  double get(const std::string& name) const { return name == "f1" ? f1 : auroc; }
};

inline Metrics evaluate_scores(const Vector& scores, const std::vector<int>& labels, const EvalSpec& spec) {
  const eval::ScoredSet set{scores, labels};
  Metrics m;
  m.contamination = spec.contamination ? *spec.contamination : eval::anomaly_fraction(set);
  m.auroc = eval::auroc(set);
  m.f1 = eval::f1_at_contamination(set, m.contamination);
  return m;
}

// id,z_e,z_c,score[,label]
inline void write_scores_csv(const std::string& path, const ScoringModel::Scored& s,
                             const std::vector<int>* labels = nullptr) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "id,z_e,z_c,score" << (labels ? ",label" : "") << "\n";
  char buf[96];
  const std::size_t e = s.composite.cols() - 2;
  for (std::size_t r = 0; r < s.scores.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g", r, s.composite(r, e), s.composite(r, e + 1), s.scores[r]);
    out << buf;
    if (labels) out << "," << (*labels)[r];
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

inline json ae_report_json(const compress::AutoencoderReport& r) {
  json j = {{"stage1_best_epoch", r.stage1_best_epoch}, {"stage2_best_epoch", r.stage2_best_epoch},
            {"best_stage1_val", r.best_stage1_val},     {"best_stage2_val", r.best_stage2_val},
            {"latent_condition", r.latent_condition},   {"stage1_val_loss", r.stage1_val_loss},
            {"stage2_val_loss", r.stage2_val_loss}};
  if (r.warning) j["warning"] = *r.warning;
  return j;
}

inline json estimator_report_json(const nce::EstimatorFit& fit) {
  const auto& r = fit.report;
  json j = {{"best_epoch", r.best_epoch},
            {"best_val", r.best_val},
            {"val_loss", r.val_loss},
            {"train_loss", r.train_loss},
            {"psi_steps", r.psi_steps},
            {"diverged", r.diverged},
            {"noise_scales", fit.model.noise.scales()},
            {"warnings", r.warnings}};
  if (r.augmentation) {
    j["augmentation"] = {{"error_mode", r.augmentation->error.mode},
                         {"error_sigma", r.augmentation->error.sigma},
                         {"cosine_mode", r.augmentation->cosine.mode},
                         {"cosine_sigma", r.augmentation->cosine.sigma}};
  }
  auto check = [](const stats::AugmentationCheck& c) {
    return json{{"passed", c.passed}, {"degenerate", c.degenerate}, {"worst_margin", c.worst_margin},
                {"negative_points", c.negative_points}};
  };
  if (r.error_check) j["error_check"] = check(*r.error_check);
  if (r.cosine_check) j["cosine_check"] = check(*r.cosine_check);
  return j;
}

struct Features {
  compress::CompositeBatch train, val, test;
};

inline Features extract_features(const Compressor& comp, const PreparedData& p) {
  return {comp.composite(p.train.features), comp.composite(p.val.features), comp.composite(p.test.features)};
}

// Trains one variant on precomputed composite features.
inline ScoringModel fit_variant(const RunConfig& c, std::uint64_t seed, const PreparedData& p,
                                const Compressor& comp, const Features& f, const Variant& v, json& report) {
  ScoringModel m;
  m.config_hash = config_hash(c);
  m.variant = v.name;
  m.normalizer = p.normalizer;
  m.compressor = comp;
  m.features = v.features;
  if (!v.estimator) return m;
  nce::EstimatorConfig ec = c.nce;
  if (v.augmentation) ec.augmentation = *v.augmentation;
  if (v.features != FeatureSet::composite) ec.augmentation = false;
  auto fit = nce::train_estimator(select_features(f.train.features, v.features),
                                  select_features(f.val.features, v.features), ec, Rng(seed).substream("nce"));
  report["estimator"] = estimator_report_json(fit);
  m.info["noise_scales"] = fit.model.noise.scales();
  if (fit.report.augmentation) m.info["augmentation"] = report["estimator"]["augmentation"];
  m.estimator = std::move(fit.model);
  return m;
}

struct RunResult {
  ScoringModel model;
  ScoringModel::Scored test;
  std::vector<int> test_labels;
  Metrics metrics;
  json report;
};

// One full training + test evaluation for a seed.
inline RunResult run_once(const RunConfig& c, std::uint64_t seed, const Variant& v = {}) {
  RunResult r;
  const PreparedData p = prepare_data(c, seed);
  const CompressorFit comp = fit_compressor(c, p, seed);
  const Features f = extract_features(comp.compressor, p);
  r.report = {{"seed", seed},
              {"config_hash", config_hash(c)},
              {"variant", v.name},
              {"rows", {{"train", p.train.size()}, {"val", p.val.size()}, {"test", p.test.size()}}},
              {"warnings", p.warnings}};
  if (comp.report) r.report["autoencoder"] = ae_report_json(*comp.report);
  const std::size_t degenerate = f.train.degenerate_rows + f.val.degenerate_rows + f.test.degenerate_rows;
  if (degenerate) r.report["degenerate_cosine_rows"] = degenerate;
  r.model = fit_variant(c, seed, p, comp.compressor, f, v, r.report);
  const Matrix test_features = select_features(f.test.features, v.features);
  r.test.composite = f.test.features;
  r.test.scores = r.model.estimator ? r.model.estimator->scores(test_features) : test_features.col(0);
  r.test_labels = *p.test.labels;
  r.metrics = evaluate_scores(r.test.scores, r.test_labels, c.eval);
  r.report["metrics"] = {{"auroc", r.metrics.auroc}, {"f1", r.metrics.f1}, {"contamination", r.metrics.contamination}};
  return r;
}

}  // namespace cance::pipeline
