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

// Command-line front end: train, score, eval, ablate, synth, inspect.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure,
// 3 partial report (some repeats failed).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cance/eval/experiment.hpp"
#include "cance/pipeline/config.hpp"
#include "cance/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cance;
using pipeline::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitPartial = 3;

constexpr const char* kOutputRootEnv = "CANCE_OUTPUT_ROOT";

struct Failure {
  int code;
  std::string stage;
  std::string message;
};

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a, bool with_out = true) {
  cmd->add_option("-c,--config", a.path, "run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "override a config value, e.g. --set nce.epochs=10");
  cmd->add_option("--seed", a.seed, "override the base seed");
  if (with_out) cmd->add_option("-o,--out", a.out, "output directory");
}

pipeline::RunConfig resolve_config(const ConfigArgs& a) {
  pipeline::RunConfig c = pipeline::load_config(a.path);
  for (const auto& o : a.overrides) c = pipeline::apply_override(c, o);
  if (a.seed) c.seed = *a.seed;
  if (!a.out.empty()) c.output_dir = a.out;
  pipeline::validate(c);
  return c;
}

// --out, else the config's output_dir, else $CANCE_OUTPUT_ROOT/<name>
// (default root "runs"). A relative config output_dir is taken under the
// root when the variable is set.
std::string output_dir(const pipeline::RunConfig& c, const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv(kOutputRootEnv);
  const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
  if (c.output_dir.empty()) return (root / c.name).string();
  const fs::path p(c.output_dir);
  return (p.is_absolute() || !(env && *env)) ? p.string() : (root / p).string();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  out << text;
}

fs::path model_file(const std::string& path) {
  const fs::path p(path);
  return fs::is_directory(p) ? p / "model.cance" : p;
}

int cmd_train(const ConfigArgs& a) {
  const pipeline::RunConfig c = resolve_config(a);
  const fs::path dir = output_dir(c, a.out);
  fs::create_directories(dir);
  pipeline::RunResult r;
  try {
    r = pipeline::run_once(c, c.seed);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw Failure{kExitRuntime, "train", e.what()};
  }
  r.model.save((dir / "model.cance").string());
  write_text(dir / "config.json", pipeline::config_to_json(c).dump(2) + "\n");
  write_text(dir / "report.json", r.report.dump(2) + "\n");
  pipeline::write_scores_csv((dir / "test_scores.csv").string(), r.test, &r.test_labels);
  std::cout << "trained " << c.name << " (config " << pipeline::config_hash(c) << ", seed " << c.seed << ")\n";
  if (r.report.contains("autoencoder")) {
    std::cout << "  autoencoder best val reconstruction error "
              << r.report["autoencoder"]["best_stage2_val"].get<double>() << "\n";
  }
  if (r.report.contains("estimator")) {
    std::cout << "  estimator best val NCE loss " << r.report["estimator"]["best_val"].get<double>() << " (epoch "
              << r.report["estimator"]["best_epoch"].get<std::size_t>() << ")\n";
  }
  std::cout << "  test auroc " << r.metrics.auroc << ", f1 " << r.metrics.f1 << "\n";
  std::cout << "  artifacts in " << dir.string() << "\n";
  return kExitOk;
}

struct ScoreArgs {
  std::string model;
  std::string input;
  std::string output;
  std::optional<std::string> label_column, class_column;
  std::vector<std::string> categorical, ignore;
  bool no_header = false;
};

int cmd_score(const ScoreArgs& a) {
  const pipeline::ScoringModel model = pipeline::ScoringModel::load(model_file(a.model).string());
  data::Dataset input;
  if (fs::path(a.input).extension() == ".emb") {
    input = data::load_embeddings(a.input);
  } else {
    data::CsvSchema s;
    s.header = !a.no_header;
    s.label_column = a.label_column;
    s.class_column = a.class_column;
    s.categorical = a.categorical;
    s.ignore = a.ignore;
    input = data::load_csv(a.input, s);
  }
  pipeline::ScoringModel::Scored scored;
  if (input.size() == 0) {
    scored.composite = Matrix(0, model.compressor.latent_dim() + 2);
  } else {
    try {
      scored = model.score(input.features);
    } catch (const ShapeError& e) {
      throw Failure{kExitRuntime, "score", e.what()};
    }
  }
  pipeline::write_scores_csv(a.output, scored);
  std::cout << "scored " << scored.scores.size() << " rows -> " << a.output << "\n";
  return kExitOk;
}

std::vector<int> parse_classes(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad class list '" + text + "'");
    }
  }
  return out;
}

struct EvalArgs {
  ConfigArgs config;
  std::optional<std::size_t> repeats;
  std::string model;
  std::string per_class;
};

int report_code(bool partial, bool any_ok) {
  if (!any_ok) return kExitRuntime;
  return partial ? kExitPartial : kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  pipeline::RunConfig c = resolve_config(a.config);
  if (!a.model.empty()) {
    // Evaluate a stored model on the test split this config defines.
    const pipeline::ScoringModel m = pipeline::ScoringModel::load(model_file(a.model).string());
    if (m.config_hash != pipeline::config_hash(c)) {
      throw ConfigError("model was trained with config " + m.config_hash + ", this config hashes to " +
                        pipeline::config_hash(c));
    }
    const pipeline::PreparedData p = pipeline::prepare_data(c, c.seed);
    const auto scored = m.score(p.test_raw);
    const auto metrics = pipeline::evaluate_scores(scored.scores, *p.test.labels, c.eval);
    std::cout << json{{"config_hash", m.config_hash}, {"seed", c.seed}, {"auroc", metrics.auroc},
                      {"f1", metrics.f1}, {"contamination", metrics.contamination}}.dump(2)
              << "\n";
    return kExitOk;
  }
  const std::size_t repeats = a.repeats ? *a.repeats : c.eval.repeats;
  const fs::path dir = output_dir(c, a.config.out);
  fs::create_directories(dir);
  std::vector<std::vector<int>> groups;
  if (a.per_class.empty()) {
    groups.push_back(c.dataset.normal_classes);
  } else {
    for (int cls : parse_classes(a.per_class)) groups.push_back({cls});
  }
  json all = json::array();
  bool partial = false, any_ok = false;
  for (const auto& g : groups) {
    pipeline::RunConfig run = c;
    run.dataset.normal_classes = g;
    std::string sub = dir.string();
    if (!a.per_class.empty()) {
      run.name = c.name + "-class" + std::to_string(g.front());
      sub = (dir / ("class-" + std::to_string(g.front()))).string();
    }
    const eval::ExperimentReport rep = eval::run_experiment(run, repeats, sub);
    std::cout << rep.table();
    json j = rep.to_json();
    if (!a.per_class.empty()) j["normal_class"] = g.front();
    all.push_back(j);
    partial = partial || rep.partial;
    any_ok = any_ok || rep.auroc.count > 0;
  }
  const json out = a.per_class.empty() ? all[0] : json{{"per_class", all}};
  write_text(dir / "experiment.json", out.dump(2) + "\n");
  std::cout << "report: " << (dir / "experiment.json").string() << "\n";
  return report_code(partial, any_ok);
}

int cmd_ablate(const ConfigArgs& a, std::optional<std::size_t> repeats_flag) {
  const pipeline::RunConfig c = resolve_config(a);
  const std::size_t repeats = repeats_flag ? *repeats_flag : c.eval.repeats;
  const fs::path dir = output_dir(c, a.out);
  fs::create_directories(dir);
  const eval::AblationReport rep = eval::run_ablation(c, repeats, dir.string());
  std::cout << rep.table();
  write_text(dir / "ablation.json", rep.to_json().dump(2) + "\n");
  bool any_ok = false;
  for (const auto& v : rep.runs)
    for (const auto& r : v) any_ok = any_ok || r.ok;
  return report_code(rep.partial, any_ok);
}

struct SynthArgs {
  data::SynthSpec spec;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_synth(const SynthArgs& a) {
  const data::Dataset d = data::synth_generate(a.spec, a.seed);
  if (fs::path(a.output).extension() == ".emb") {
    data::save_embeddings(a.output, d);
  } else {
    data::write_csv(a.output, d);
  }
  std::cout << "wrote " << d.size() << " rows (" << d.dim() << " features) to " << a.output << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& path) {
  const nn::ModelContainer box = nn::ModelContainer::load(model_file(path).string());
  const pipeline::ScoringModel m = pipeline::ScoringModel::from_container(box);
  json out = {{"config_hash", m.config_hash},
              {"variant", m.variant},
              {"features", pipeline::to_string(m.features)},
              {"compressor", box.header.at("compressor")},
              {"input_dim", m.compressor.input_dim()},
              {"latent_dim", m.compressor.latent_dim()},
              {"normalization", data::to_string(m.normalizer.kind)}};
  if (m.estimator) {
    const auto& noise = m.estimator->noise;
    Vector var(noise.dim());
    for (std::size_t j = 0; j < noise.dim(); ++j) var[j] = noise.base().cov()(j, j);
    out["nu"] = noise.nu();
    out["score_noise"] = nce::to_string(m.estimator->score_noise);
    out["feature_mean"] = noise.mean();
    out["feature_variance"] = var;
    out["feature_covariance_jittered"] = noise.base().jittered();
    out["noise_scale_K"] = noise.scales();
  }
  if (m.info.contains("augmentation")) out["augmentation_modes"] = m.info["augmentation"];
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly detection by noise contrastive estimation over autoencoder composite features"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  auto* train = app.add_subcommand("train", "fit compressor and estimator, save artifacts");
  add_config_args(train, train_args);

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "score rows with a trained model (CSV: id,z_e,z_c,score)");
  score->add_option("-m,--model", score_args.model, "model directory or file")->required();
  score->add_option("-i,--input", score_args.input, "input CSV (or .emb embedding file)")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("-o,--output", score_args.output, "output CSV")->required();
  score->add_option("--label-column", score_args.label_column, "column to skip as a 0/1 label");
  score->add_option("--class-column", score_args.class_column, "column to skip as a class id");
  score->add_option("--categorical", score_args.categorical, "columns to one-hot encode");
  score->add_option("--ignore", score_args.ignore, "columns to drop");
  score->add_flag("--no-header", score_args.no_header, "input has no header row");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "repeated runs with mean/std, or evaluate a stored model");
  add_config_args(ev, eval_args.config);
  ev->add_option("-r,--repeats", eval_args.repeats, "number of seeds (default: config)");
  ev->add_option("-m,--model", eval_args.model, "evaluate this trained model instead of retraining");
  ev->add_option("--per-class", eval_args.per_class, "comma-separated classes, each taken as the normal class");

  ConfigArgs ablate_args;
  std::optional<std::size_t> ablate_repeats;
  auto* ab = app.add_subcommand("ablate", "Error / LatNCE / CNCE / CANCE on shared splits and compressor");
  add_config_args(ab, ablate_args);
  ab->add_option("-r,--repeats", ablate_repeats, "number of seeds (default: config)");

  SynthArgs synth_args;
  auto* sy = app.add_subcommand("synth", "write a synthetic dataset (CSV, or .emb)");
  sy->add_option("--kind", synth_args.spec.kind, "gaussian-mixture | ring | two-moons | subspace");
  sy->add_option("--anomalies", synth_args.spec.anomalies, "uniform-box | off-subspace | none");
  sy->add_option("--n-normal", synth_args.spec.n_normal);
  sy->add_option("--n-anomaly", synth_args.spec.n_anomaly);
  sy->add_option("--dim", synth_args.spec.dim);
  sy->add_option("--latent-dim", synth_args.spec.latent_dim);
  sy->add_option("--components", synth_args.spec.components);
  sy->add_option("--radius", synth_args.spec.radius);
  sy->add_option("--noise", synth_args.spec.noise);
  sy->add_option("--box", synth_args.spec.box);
  sy->add_option("--offset", synth_args.spec.offset);
  sy->add_option("--seed", synth_args.seed);
  sy->add_option("-o,--output", synth_args.output)->required();

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "dump feature moments, K diagonal and augmentation modes");
  in->add_option("model", inspect_path, "model directory or file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*score) return cmd_score(score_args);
    if (*ev) return cmd_eval(eval_args);
    if (*ab) return cmd_ablate(ablate_args, ablate_repeats);
    if (*sy) return cmd_synth(synth_args);
    if (*in) return cmd_inspect(inspect_path);
  } catch (const Failure& f) {
    std::cerr << "error [" << f.stage << "]: " << f.message << "\n";
    return f.code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
