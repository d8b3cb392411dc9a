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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cance/pipeline/pipeline.hpp"

namespace cance::eval {

using pipeline::json;

struct RunRecord {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  pipeline::Metrics metrics;
  json report = json::object();
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population (ddof 0)
  std::size_t count = 0;
};

inline Summary summarize(const std::vector<RunRecord>& runs, const std::string& metric) {
  Summary s;
  for (const auto& r : runs)
    if (r.ok) {
      s.mean += r.metrics.get(metric);
      ++s.count;
    }
  if (s.count == 0) return {std::nan(""), std::nan(""), 0};
  s.mean /= static_cast<double>(s.count);
  for (const auto& r : runs)
    if (r.ok) s.std += (r.metrics.get(metric) - s.mean) * (r.metrics.get(metric) - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(s.count));
  return s;
}

inline json runs_json(const std::vector<RunRecord>& runs) {
  json out = json::array();
  for (const auto& r : runs) {
    json j = {{"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      j["auroc"] = r.metrics.auroc;
      j["f1"] = r.metrics.f1;
      j["contamination"] = r.metrics.contamination;
    } else {
      j["error"] = r.error;
    }
    out.push_back(j);
  }
  return out;
}

struct ExperimentReport {
  std::string name;
  std::string config_hash;
  std::string metric;
  std::string variant;
  std::vector<RunRecord> runs;
  Summary auroc, f1;
  bool partial = false;

  const Summary& primary() const { return metric == "f1" ? f1 : auroc; }

  json to_json() const {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : runs) seeds.push_back(r.seed);
    return {{"name", name},
            {"config_hash", config_hash},
            {"metric", metric},
            {"variant", variant},
            {"seeds", seeds},
            {"runs", runs_json(runs)},
            {"auroc", {{"mean", auroc.mean}, {"std", auroc.std}}},
            {"f1", {{"mean", f1.mean}, {"std", f1.std}}},
            {"partial", partial}};
  }

  std::string table() const {
    std::ostringstream o;
    char buf[160];
    o << name << " [" << variant << "] config " << config_hash << "\n";
    o << "  seed      auroc      f1\n";
    for (const auto& r : runs) {
      if (r.ok) {
        std::snprintf(buf, sizeof buf, "  %-8llu %7.4f %7.4f\n", static_cast<unsigned long long>(r.seed),
                      r.metrics.auroc, r.metrics.f1);
      } else {
        std::snprintf(buf, sizeof buf, "  %-8llu failed: %s\n", static_cast<unsigned long long>(r.seed),
                      r.error.c_str());
      }
      o << buf;
    }
    std::snprintf(buf, sizeof buf, "  mean     %7.4f %7.4f\n  std      %7.4f %7.4f\n", auroc.mean, f1.mean,
                  auroc.std, f1.std);
    o << buf;
    if (partial) o << "  (partial: some runs failed)\n";
    return o.str();
  }
};

namespace detail {

inline std::string run_dir(const std::string& root, std::uint64_t seed) {
  return (std::filesystem::path(root) / ("run-" + std::to_string(seed))).string();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

}  // namespace detail

// Runs the pipeline for seeds seed+0 .. seed+repeats-1. A failing run is
// recorded and marks the report partial. Per-run artifacts go under
// out_dir/run-<seed>/ when out_dir is non-empty.
inline ExperimentReport run_experiment(const pipeline::RunConfig& c, std::size_t repeats,
                                       const std::string& out_dir = "",
                                       const pipeline::Variant& variant = {}) {
  pipeline::validate(c);
  if (repeats == 0) throw ConfigError("repeats must be positive");
  ExperimentReport rep{c.name, pipeline::config_hash(c), c.eval.metric, variant.name, {}, {}, {}, false};
  for (std::size_t i = 0; i < repeats; ++i) {
    RunRecord rec;
    rec.seed = c.seed + i;
    try {
      pipeline::RunResult r = pipeline::run_once(c, rec.seed, variant);
      rec.ok = true;
      rec.metrics = r.metrics;
      rec.report = r.report;
      if (!out_dir.empty()) {
        const std::string dir = detail::run_dir(out_dir, rec.seed);
        std::filesystem::create_directories(dir);
        pipeline::write_scores_csv(dir + "/scores.csv", r.test, &r.test_labels);
        r.model.save(dir + "/model.cance");
        detail::write_text(dir + "/report.json", r.report.dump(2) + "\n");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
      rep.partial = true;
    }
    rep.runs.push_back(std::move(rec));
  }
  rep.auroc = summarize(rep.runs, "auroc");
  rep.f1 = summarize(rep.runs, "f1");
  return rep;
}

struct AblationReport {
  std::string name;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> compressor_checksums;  // one per seed, shared by all variants
  std::vector<std::string> variants;
  std::vector<std::vector<RunRecord>> runs;        // [variant][seed]
  bool partial = false;

  json to_json() const {
    json vs = json::array();
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const Summary a = summarize(runs[v], "auroc"), f = summarize(runs[v], "f1");
      vs.push_back({{"variant", variants[v]},
                    {"runs", runs_json(runs[v])},
                    {"auroc", {{"mean", a.mean}, {"std", a.std}}},
                    {"f1", {{"mean", f.mean}, {"std", f.std}}}});
    }
    return {{"name", name},   {"config_hash", config_hash}, {"seeds", seeds},
            {"compressor_checksums", compressor_checksums}, {"variants", vs}, {"partial", partial}};
  }

  std::string table() const {
    std::ostringstream o;
    char buf[160];
    o << name << " ablation, config " << config_hash << "\n";
    o << "  variant   auroc mean  auroc std   f1 mean   f1 std\n";
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const Summary a = summarize(runs[v], "auroc"), f = summarize(runs[v], "f1");
      std::snprintf(buf, sizeof buf, "  %-8s  %10.4f  %9.4f  %8.4f  %7.4f\n", variants[v].c_str(), a.mean, a.std,
                    f.mean, f.std);
      o << buf;
    }
    if (partial) o << "  (partial: some runs failed)\n";
    return o.str();
  }
};

inline std::string checksum_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(cance::detail::fnv1a64(bytes)));
  return buf;
}

// Error, LatNCE, CNCE and CANCE on identical splits and one compressor per
// seed; only the estimator's feature set and augmentation differ.
inline AblationReport run_ablation(const pipeline::RunConfig& c, std::size_t repeats, const std::string& out_dir = "") {
  pipeline::validate(c);
  if (repeats == 0) throw ConfigError("repeats must be positive");
  const auto variants = pipeline::ablation_variants();
  AblationReport rep;
  rep.name = c.name;
  rep.config_hash = pipeline::config_hash(c);
  for (const auto& v : variants) rep.variants.push_back(v.name);
  rep.runs.resize(variants.size());
  for (std::size_t i = 0; i < repeats; ++i) {
    const std::uint64_t seed = c.seed + i;
    rep.seeds.push_back(seed);
    std::string checksum;
    try {
      const pipeline::PreparedData p = pipeline::prepare_data(c, seed);
      const pipeline::CompressorFit comp = pipeline::fit_compressor(c, p, seed);
      nn::ModelContainer box;
      comp.compressor.save(box);
      checksum = checksum_hex(box.serialize());
      const pipeline::Features f = pipeline::extract_features(comp.compressor, p);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        RunRecord rec;
        rec.seed = seed;
        try {
          rec.report = {{"seed", seed}, {"variant", variants[v].name}, {"compressor_checksum", checksum}};
          const pipeline::ScoringModel m = pipeline::fit_variant(c, seed, p, comp.compressor, f, variants[v], rec.report);
          pipeline::ScoringModel::Scored test;
          test.composite = f.test.features;
          const Matrix sel = pipeline::select_features(f.test.features, variants[v].features);
          test.scores = m.estimator ? m.estimator->scores(sel) : sel.col(0);
          rec.metrics = pipeline::evaluate_scores(test.scores, *p.test.labels, c.eval);
          rec.ok = true;
          if (!out_dir.empty()) {
            const std::string dir = detail::run_dir(out_dir, seed) + "/" + variants[v].name;
            std::filesystem::create_directories(dir);
            pipeline::write_scores_csv(dir + "/scores.csv", test, &*p.test.labels);
          }
        } catch (const std::exception& e) {
          rec.error = e.what();
          rep.partial = true;
        }
        rep.runs[v].push_back(std::move(rec));
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      rep.partial = true;
      for (std::size_t v = 0; v < variants.size(); ++v) rep.runs[v].push_back({seed, false, e.what(), {}, {}});
    }
    rep.compressor_checksums.push_back(checksum);
  }
  return rep;
}

}  // namespace cance::eval
