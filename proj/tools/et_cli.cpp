/* Copyright 2026 The et-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "et/errors.hpp"
#include "et/synthdata.hpp"
#include "et/trainer.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw et::DataError("cannot write " + path.string());
  out << text;
}

int run_generate(const et::DatasetSpec& spec, const fs::path& out) {
  const et::GenerateSummary s = et::generate_dataset(spec, out);
  std::cout << "labeled " << s.labeled << ", unlabeled " << s.unlabeled << ", test " << s.test << '\n';
  return 0;
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::optional<std::string>& out, const std::optional<std::string>& resume,
              const std::vector<std::string>& overrides) {
  et::RunConfig cfg = config_path.empty() ? et::RunConfig{} : et::RunConfig::load(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw et::ConfigError("override must be key=value: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  if (out) cfg.out_dir = *out;
  cfg.validate();
  et::TrainOptions opts;
  opts.log = &std::cout;
  if (resume) opts.resume = fs::path(*resume);
  const et::TrainResult r = et::train(cfg, opts);
  if (r.final_eval) {
    std::cout << "final AP50 " << r.final_eval->map50 << ", AP50:95 " << r.final_eval->map50_95 << '\n';
  }
  return 0;
}

int run_evaluate(const fs::path& checkpoint, const fs::path& data, const std::optional<std::string>& out) {
  const et::EvalReport report = et::evaluate_checkpoint(checkpoint, data);
  const std::string text = report.to_json().dump(2) + "\n";
  if (out) write_text(*out, text);
  std::cout << text;
  return 0;
}

int run_analyze(const fs::path& checkpoint, const fs::path& gt, std::optional<double> tau1,
                std::optional<double> tau2, const std::optional<std::string>& log, const fs::path& out) {
  std::optional<et::Thresholds> th;
  if (tau1 || tau2) {
    if (!(tau1 && tau2)) throw et::ConfigError("--tau1 and --tau2 must be given together");
    const et::LoadedModel model = et::load_model(checkpoint);
    th = et::Thresholds::uniform(model.arch.num_classes, *tau1, *tau2);
    th->validate();
  }
  const fs::path log_path = log ? fs::path(*log) : checkpoint.parent_path().parent_path() / "thresholds.jsonl";
  const et::AnalysisReport report = et::analyze_checkpoint(checkpoint, gt, th, log_path);
  fs::create_directories(out);
  write_text(out / "analysis.json", report.to_json().dump(2) + "\n");
  write_text(out / "analysis.csv", report.to_csv());
  std::cout << report.to_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised detector training on synthetic shapes"};
  app.require_subcommand(1);

  et::DatasetSpec spec;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("generate-data", "Render the synthetic dataset");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", spec.seed, "Random seed");
  gen->add_option("--num-images", spec.num_images, "Labeled plus unlabeled images");
  gen->add_option("--num-test", spec.num_test, "Test images");
  gen->add_option("--labeled-fraction", spec.labeled_fraction, "Share of images that keep labels");
  gen->add_option("--image-size", spec.image_size, "Square image side in pixels");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> train_out, resume;
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "Train a detector");
  tr->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--seed", seed, "Override the config seed");
  tr->add_option("--out", train_out, "Override the output directory");
  tr->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  tr->add_option("--set", overrides, "Extra key=value overrides");

  std::string ev_ckpt, ev_data;
  std::optional<std::string> ev_out;
  auto* ev = app.add_subcommand("evaluate", "Compute AP of a checkpoint on an annotated split");
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Annotation file, images resolved from its images/ sibling")->required();
  ev->add_option("--out", ev_out, "Write the report JSON here");

  std::string an_ckpt, an_gt, an_out = "analysis";
  std::optional<double> tau1, tau2;
  std::optional<std::string> an_log;
  auto* an = app.add_subcommand("analyze", "Pseudo-label quality report on the held-back split");
  an->add_option("--checkpoint", an_ckpt, "Checkpoint file")->required();
  an->add_option("--gt", an_gt, "Held-back ground truth (unlabeled_gt.json)")->required();
  an->add_option("--tau1", tau1, "Override the lower threshold for every class");
  an->add_option("--tau2", tau2, "Override the upper threshold for every class");
  an->add_option("--log", an_log, "Threshold log; defaults to thresholds.jsonl next to checkpoints/");
  an->add_option("--out", an_out, "Output directory for analysis.json and analysis.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return run_generate(spec, gen_out);
    if (*tr) return run_train(config_path, seed, train_out, resume, overrides);
    if (*ev) return run_evaluate(ev_ckpt, ev_data, ev_out);
    if (*an) return run_analyze(an_ckpt, an_gt, tau1, tau2, an_log, an_out);
  } catch (const et::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const et::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const et::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
