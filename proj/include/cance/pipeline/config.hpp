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

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cance/compress/autoencoder.hpp"
#include "cance/core/error.hpp"
#include "cance/core/rng.hpp"
#include "cance/data/io.hpp"
#include "cance/data/normalize.hpp"
#include "cance/data/synth.hpp"
#include "cance/nce/estimator.hpp"

namespace cance::pipeline {

using json = nlohmann::json;

struct DatasetSpec {
  std::string source = "synth";  // synth | csv | idx | embeddings
  data::SynthSpec synth;
  std::string path;              // csv / embeddings (single source)
  std::string test_path;         // embeddings with a separate test file
  std::string train_images, train_labels, test_images, test_labels;  // idx
  data::CsvSchema csv;
  std::vector<int> normal_classes = {0};
  std::vector<int> anomaly_classes;
  double train_fraction = 0.5;
  double val_fraction = 0.2;
  data::Scaling normalization = data::Scaling::zscore;
};

struct CompressionSpec {
  std::string method = "ae";  // ae | pca
  compress::AutoencoderConfig ae;
};

struct EvalSpec {
  std::size_t repeats = 5;
  std::string metric = "auroc";  // auroc | f1
  std::optional<double> contamination;  // default: anomaly share of the test split
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string output_dir;
  DatasetSpec dataset;
  CompressionSpec compression;
  nce::EstimatorConfig nce;
  EvalSpec eval;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

template <class T>
void read_optional(const json& obj, const char* key, std::optional<T>& out, const std::string& section) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T v{};
  read(obj, key, v, section);
  out = v;
}

}  // namespace detail

inline data::SynthSpec synth_from_json(const json& j) {
  detail::check_keys(j, "dataset.synth",
                     {"kind", "anomalies", "n_normal", "n_anomaly", "dim", "latent_dim", "components",
                      "radius", "noise", "component_sd", "spread", "box", "offset"});
  data::SynthSpec s;
  const std::string sec = "dataset.synth";
  detail::read(j, "kind", s.kind, sec);
  detail::read(j, "anomalies", s.anomalies, sec);
  detail::read(j, "n_normal", s.n_normal, sec);
  detail::read(j, "n_anomaly", s.n_anomaly, sec);
  detail::read(j, "dim", s.dim, sec);
  detail::read(j, "latent_dim", s.latent_dim, sec);
  detail::read(j, "components", s.components, sec);
  detail::read(j, "radius", s.radius, sec);
  detail::read(j, "noise", s.noise, sec);
  detail::read(j, "component_sd", s.component_sd, sec);
  detail::read(j, "spread", s.spread, sec);
  detail::read(j, "box", s.box, sec);
  detail::read(j, "offset", s.offset, sec);
  return s;
}

inline json synth_to_json(const data::SynthSpec& s) {
  return {{"kind", s.kind},           {"anomalies", s.anomalies}, {"n_normal", s.n_normal},
          {"n_anomaly", s.n_anomaly}, {"dim", s.dim},             {"latent_dim", s.latent_dim},
          {"components", s.components}, {"radius", s.radius},     {"noise", s.noise},
          {"component_sd", s.component_sd}, {"spread", s.spread}, {"box", s.box},
          {"offset", s.offset}};
}

inline RunConfig config_from_json(const json& j) {
  detail::check_keys(j, "", {"name", "seed", "output_dir", "dataset", "compression", "nce", "eval"});
  RunConfig c;
  detail::read(j, "name", c.name, "");
  detail::read(j, "seed", c.seed, "");
  detail::read(j, "output_dir", c.output_dir, "");

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const std::string sec = "dataset";
    detail::check_keys(d, sec,
                       {"source", "synth", "path", "test_path", "train_images", "train_labels", "test_images",
                        "test_labels", "csv", "normal_classes", "anomaly_classes", "train_fraction",
                        "val_fraction", "normalization"});
    auto& ds = c.dataset;
    detail::read(d, "source", ds.source, sec);
    if (d.contains("synth")) ds.synth = synth_from_json(d.at("synth"));
    detail::read(d, "path", ds.path, sec);
    detail::read(d, "test_path", ds.test_path, sec);
    detail::read(d, "train_images", ds.train_images, sec);
    detail::read(d, "train_labels", ds.train_labels, sec);
    detail::read(d, "test_images", ds.test_images, sec);
    detail::read(d, "test_labels", ds.test_labels, sec);
    detail::read(d, "normal_classes", ds.normal_classes, sec);
    detail::read(d, "anomaly_classes", ds.anomaly_classes, sec);
    detail::read(d, "train_fraction", ds.train_fraction, sec);
    detail::read(d, "val_fraction", ds.val_fraction, sec);
    std::string norm = data::to_string(ds.normalization);
    detail::read(d, "normalization", norm, sec);
    ds.normalization = data::parse_scaling(norm);
    if (d.contains("csv")) {
      const json& cj = d.at("csv");
      const std::string cs = "dataset.csv";
      detail::check_keys(cj, cs, {"header", "delimiter", "label_column", "class_column", "categorical", "ignore"});
      detail::read(cj, "header", ds.csv.header, cs);
      std::string delim(1, ds.csv.delimiter);
      detail::read(cj, "delimiter", delim, cs);
      if (delim.size() != 1) throw ConfigError("dataset.csv.delimiter must be one character");
      ds.csv.delimiter = delim[0];
      detail::read_optional(cj, "label_column", ds.csv.label_column, cs);
      detail::read_optional(cj, "class_column", ds.csv.class_column, cs);
      detail::read(cj, "categorical", ds.csv.categorical, cs);
      detail::read(cj, "ignore", ds.csv.ignore, cs);
    }
  }

  if (j.contains("compression")) {
    const json& m = j.at("compression");
    const std::string sec = "compression";
    detail::check_keys(m, sec,
                       {"method", "latent_dim", "lambda", "hidden", "activation", "epochs", "stage1_fraction",
                        "batch_size", "lr", "weight_decay", "checkpoint"});
    auto& ae = c.compression.ae;
    detail::read(m, "method", c.compression.method, sec);
    detail::read(m, "latent_dim", ae.latent_dim, sec);
    detail::read(m, "lambda", ae.lambda, sec);
    detail::read(m, "hidden", ae.hidden, sec);
    std::string act(nn::to_string(ae.activation));
    detail::read(m, "activation", act, sec);
    ae.activation = nn::parse_activation(act);
    detail::read(m, "epochs", ae.epochs, sec);
    detail::read(m, "stage1_fraction", ae.stage1_fraction, sec);
    detail::read(m, "batch_size", ae.batch_size, sec);
    detail::read(m, "lr", ae.lr, sec);
    detail::read(m, "weight_decay", ae.weight_decay, sec);
    std::string ckpt = ae.checkpoint == compress::CheckpointLoss::full ? "full" : "error_only";
    detail::read(m, "checkpoint", ckpt, sec);
    if (ckpt != "full" && ckpt != "error_only") throw ConfigError("compression.checkpoint must be full or error_only");
    ae.checkpoint = ckpt == "full" ? compress::CheckpointLoss::full : compress::CheckpointLoss::error_only;
  }

  if (j.contains("nce")) {
    const json& n = j.at("nce");
    const std::string sec = "nce";
    detail::check_keys(n, sec,
                       {"nu", "hidden", "activation", "augmentation", "adaptation", "epochs", "batch_size", "lr",
                        "weight_decay", "psi_lr", "psi_weight_decay", "psi_init", "warmup_fraction",
                        "augmented_validation", "score_noise"});
    auto& e = c.nce;
    detail::read(n, "nu", e.nu, sec);
    detail::read(n, "hidden", e.hidden, sec);
    std::string act(nn::to_string(e.activation));
    detail::read(n, "activation", act, sec);
    e.activation = nn::parse_activation(act);
    detail::read(n, "augmentation", e.augmentation, sec);
    detail::read(n, "adaptation", e.adaptation, sec);
    detail::read(n, "epochs", e.epochs, sec);
    detail::read(n, "batch_size", e.batch_size, sec);
    detail::read(n, "lr", e.lr, sec);
    detail::read(n, "weight_decay", e.weight_decay, sec);
    if (n.contains("psi_lr") && !n.at("psi_lr").is_null()) detail::read(n, "psi_lr", e.psi_lr, sec);
    detail::read(n, "psi_weight_decay", e.psi_weight_decay, sec);
    detail::read(n, "psi_init", e.psi_init, sec);
    detail::read(n, "warmup_fraction", e.warmup_fraction, sec);
    detail::read(n, "augmented_validation", e.augmented_validation, sec);
    std::string sn = nce::to_string(e.score_noise);
    detail::read(n, "score_noise", sn, sec);
    e.score_noise = nce::parse_score_noise(sn);
  }

  if (j.contains("eval")) {
    const json& v = j.at("eval");
    const std::string sec = "eval";
    detail::check_keys(v, sec, {"repeats", "metric", "contamination"});
    detail::read(v, "repeats", c.eval.repeats, sec);
    detail::read(v, "metric", c.eval.metric, sec);
    detail::read_optional(v, "contamination", c.eval.contamination, sec);
  }
  return c;
}

inline json config_to_json(const RunConfig& c) {
  const auto& ds = c.dataset;
  json csv = {{"header", ds.csv.header},
              {"delimiter", std::string(1, ds.csv.delimiter)},
              {"label_column", ds.csv.label_column ? json(*ds.csv.label_column) : json(nullptr)},
              {"class_column", ds.csv.class_column ? json(*ds.csv.class_column) : json(nullptr)},
              {"categorical", ds.csv.categorical},
              {"ignore", ds.csv.ignore}};
  const auto& ae = c.compression.ae;
  const auto& e = c.nce;
  return {
      {"name", c.name},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"dataset",
       {{"source", ds.source}, {"synth", synth_to_json(ds.synth)}, {"path", ds.path}, {"test_path", ds.test_path},
        {"train_images", ds.train_images}, {"train_labels", ds.train_labels}, {"test_images", ds.test_images},
        {"test_labels", ds.test_labels}, {"csv", csv}, {"normal_classes", ds.normal_classes},
        {"anomaly_classes", ds.anomaly_classes}, {"train_fraction", ds.train_fraction},
        {"val_fraction", ds.val_fraction}, {"normalization", data::to_string(ds.normalization)}}},
      {"compression",
       {{"method", c.compression.method}, {"latent_dim", ae.latent_dim}, {"lambda", ae.lambda},
        {"hidden", ae.hidden}, {"activation", std::string(nn::to_string(ae.activation))}, {"epochs", ae.epochs},
        {"stage1_fraction", ae.stage1_fraction}, {"batch_size", ae.batch_size}, {"lr", ae.lr},
        {"weight_decay", ae.weight_decay},
        {"checkpoint", ae.checkpoint == compress::CheckpointLoss::full ? "full" : "error_only"}}},
      {"nce",
       {{"nu", e.nu}, {"hidden", e.hidden}, {"activation", std::string(nn::to_string(e.activation))},
        {"augmentation", e.augmentation}, {"adaptation", e.adaptation}, {"epochs", e.epochs},
        {"batch_size", e.batch_size}, {"lr", e.lr}, {"weight_decay", e.weight_decay},
        {"psi_lr", e.psi_lr < 0.0 ? json(nullptr) : json(e.psi_lr)}, {"psi_weight_decay", e.psi_weight_decay},
        {"psi_init", e.psi_init}, {"warmup_fraction", e.warmup_fraction},
        {"augmented_validation", e.augmented_validation}, {"score_noise", nce::to_string(e.score_noise)}}},
      {"eval",
       {{"repeats", c.eval.repeats}, {"metric", c.eval.metric},
        {"contamination", c.eval.contamination ? json(*c.eval.contamination) : json(nullptr)}}}};
}

// All checks run before any compute.
inline void validate(const RunConfig& c) {
  const auto& ds = c.dataset;
  const std::set<std::string> sources = {"synth", "csv", "idx", "embeddings"};
  if (!sources.count(ds.source)) throw ConfigError("dataset.source must be synth, csv, idx or embeddings");
  if (ds.source == "csv" && ds.path.empty()) throw ConfigError("dataset.path is required for csv");
  if (ds.source == "embeddings" && ds.path.empty()) throw ConfigError("dataset.path is required for embeddings");
  if (ds.source == "idx" && (ds.train_images.empty() || ds.train_labels.empty() || ds.test_images.empty() ||
                             ds.test_labels.empty())) {
    throw ConfigError("idx source needs train_images, train_labels, test_images and test_labels");
  }
  if ((ds.source == "csv" || ds.source == "idx" || ds.source == "embeddings") && ds.normal_classes.empty()) {
    throw ConfigError("dataset.normal_classes must not be empty");
  }
  if (ds.source == "csv" && !ds.csv.class_column) throw ConfigError("dataset.csv.class_column is required");
  if (!(ds.train_fraction > 0.0 && ds.train_fraction < 1.0)) throw ConfigError("dataset.train_fraction must lie in (0, 1)");
  if (!(ds.val_fraction > 0.0 && ds.val_fraction < 1.0)) throw ConfigError("dataset.val_fraction must lie in (0, 1)");
  if (ds.source == "synth") {
    data::SynthSpec probe = ds.synth;
    probe.n_normal = probe.n_anomaly = 0;
    (void)data::synth_generate(probe, 0);  // throws on an unknown kind or bad geometry
    if (ds.synth.n_normal < 4) throw ConfigError("dataset.synth.n_normal is too small");
  }

  const auto& m = c.compression;
  if (m.method != "ae" && m.method != "pca") throw ConfigError("compression.method must be ae or pca");
  if (m.ae.latent_dim == 0) throw ConfigError("compression.latent_dim must be positive");
  if (m.ae.lambda < 0.0) throw ConfigError("compression.lambda must be non-negative");
  if (m.method == "ae") {
    if (m.ae.epochs == 0) throw ConfigError("compression.epochs must be positive");
    if (m.ae.batch_size < 2) throw ConfigError("compression.batch_size must be at least 2");
    if (!(m.ae.lr > 0.0)) throw ConfigError("compression.lr must be positive");
    if (m.ae.weight_decay < 0.0) throw ConfigError("compression.weight_decay must be non-negative");
    if (!(m.ae.stage1_fraction > 0.0 && m.ae.stage1_fraction <= 1.0)) {
      throw ConfigError("compression.stage1_fraction must lie in (0, 1]");
    }
    if (m.ae.lambda > 0.0 && m.ae.latent_dim < 2) throw ConfigError("compression.lambda > 0 needs latent_dim >= 2");
  }

  const auto& e = c.nce;
  if (!(e.nu > 0.0)) throw ConfigError("nce.nu must be positive");
  if (e.epochs == 0) throw ConfigError("nce.epochs must be positive");
  if (e.batch_size == 0) throw ConfigError("nce.batch_size must be positive");
  if (!(e.lr > 0.0)) throw ConfigError("nce.lr must be positive");
  if (e.weight_decay < 0.0 || e.psi_weight_decay < 0.0) throw ConfigError("nce weight decay must be non-negative");
  if (!(e.warmup_fraction >= 0.0 && e.warmup_fraction < 1.0)) throw ConfigError("nce.warmup_fraction must lie in [0, 1)");
  if (!std::isfinite(e.psi_init)) throw ConfigError("nce.psi_init must be finite");

  if (c.eval.repeats == 0) throw ConfigError("eval.repeats must be positive");
  if (c.eval.metric != "auroc" && c.eval.metric != "f1") throw ConfigError("eval.metric must be auroc or f1");
  if (c.eval.contamination && !(*c.eval.contamination > 0.0 && *c.eval.contamination < 1.0)) {
    throw ConfigError("eval.contamination must lie in (0, 1)");
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig c = config_from_json(j);
  validate(c);
  return c;
}

// `section.key=value`; the value is parsed as JSON, falling back to a string.
inline RunConfig apply_override(const RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json j = config_to_json(c);
  json* node = &j;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i])) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[path[i]];
  }
  if (!node->is_object() || !node->contains(path.back())) throw ConfigError("unknown config key '" + key + "'");
  (*node)[path.back()] = value;
  RunConfig out = config_from_json(j);
  validate(out);
  return out;
}

// Hash of everything that defines the trained model; output_dir and the
// eval section are excluded.
inline std::string config_hash(const RunConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("eval");
  const std::string text = j.dump();
  const std::uint64_t h = cance::detail::fnv1a64(text);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cance::pipeline
