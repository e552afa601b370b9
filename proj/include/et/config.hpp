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

#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "et/augment.hpp"
#include "et/geometry.hpp"
#include "et/losses.hpp"
#include "et/netcore.hpp"

namespace et {

enum class Mode { kSupervised, kNaiveFilter, kEfficientTeacher, kAlternating };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

enum class Precision { kFloat32, kFloat64 };

/// Flat key = value run configuration. Every key has a default; see
/// `RunConfig::describe()` for the list.
struct RunConfig {
  Mode mode = Mode::kEfficientTeacher;
  std::string data_dir = "data";
  std::string out_dir = "run";
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;

  // Model.
  int image_size = 64;
  int num_classes = 3;
  std::vector<int> widths{16, 32, 48, 48};
  int num_scales = 1;
  int da_hidden = 16;

  // Schedule.
  int epochs = 30;
  int burn_in_epochs = -1;  // -1: 10% of epochs
  int batch_labeled = 8;
  int batch_unlabeled = 8;
  std::int64_t max_steps = -1;  // stop early after this many optimizer steps (-1: no cap)

  // Optimizer.
  double lr = 0.01;
  double momentum = 0.937;
  double weight_decay = 5e-4;
  int warmup_steps = 0;
  double grad_clip = 10.0;  // global gradient-norm cap, 0 disables

  // Objective.
  LossWeights weights;
  double lambda_u = 3.0;
  double lambda_da = 0.1;
  double ema = 0.999;

  // Pseudo labels and thresholds.
  double alpha = 60.0;
  double tau1 = 0.1;  // bootstrap
  double tau2 = 0.6;
  double naive_tau = 0.3;
  double train_score_thresh = 0.01;
  double nms_iou = 0.65;
  int max_pseudo = 300;
  std::size_t reservoir_cap = 50000;

  // Evaluation.
  double test_score_thresh = 0.001;
  int max_det = 100;
  int eval_every = 1;  // epochs; the final epoch is always evaluated
  std::string eval_split = "test";

  // Checkpoints.
  int keep_checkpoints = 0;  // 0 keeps all

  AugmentConfig augment;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int resolved_burn_in() const;

  nlohmann::json to_json() const;

  /// Parses `key = value` lines; '#' starts a comment. Unknown or repeated
  /// keys and unparsable values raise ConfigError with the line number.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies one `key = value` override.
  void set(const std::string& key, const std::string& value);
  /// key=value lines reproducing this config.
  std::string dump() const;
  static std::vector<std::string> keys();
};

}  // namespace et
