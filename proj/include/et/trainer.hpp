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
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "et/augment.hpp"
#include "et/checkpoint.hpp"
#include "et/config.hpp"
#include "et/detector.hpp"
#include "et/epoch_adaptor.hpp"
#include "et/eval.hpp"
#include "et/losses.hpp"
#include "et/pla.hpp"

namespace et {

DetectorArch arch_for(const RunConfig& cfg);

struct TrainData {
  std::vector<LabeledImage> labeled;
  std::vector<LabeledImage> unlabeled;  // labels are never populated
  std::vector<LabeledImage> eval;
};

/// Reads labeled.json, unlabeled.json and the evaluation split from
/// cfg.data_dir. Throws ConfigError when the category count disagrees with
/// cfg.num_classes.
TrainData load_train_data(const RunConfig& cfg);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;  // progress lines, one per epoch
};

struct EpochSummary {
  int epoch = 0;
  std::int64_t step = 0;  // optimizer steps completed after this epoch
  Stage stage = Stage::kBurnIn;
  std::optional<EvalReport> eval;
  Thresholds thresholds;  // in force for the next epoch
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  std::int64_t steps = 0;
  std::optional<EvalReport> final_eval;
  std::filesystem::path last_checkpoint;
};

/// Output layout under cfg.out_dir: config.txt, metrics.csv, eval.csv,
/// thresholds.jsonl, checkpoints/epoch_XXXX.ckpt.
TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {});
TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts = {});

/// Weights used for evaluation: the teacher when the checkpoint has one.
struct LoadedModel {
  DetectorArch arch;
  RunConfig config;
  ParamSet<double> params;
  bool is_teacher = false;
  Thresholds thresholds;
  nlohmann::json header;
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

/// Decode -> NMS -> top-k per image, then AP.
EvalReport evaluate_model(const LoadedModel& model, std::span<const LabeledImage> images);

template <typename Scalar>
std::vector<Detection> detect(const ParamSet<Scalar>& params, const DetectorArch& arch, const Image& image,
                              const NmsConfig& nms_cfg, std::size_t max_det);

/// Evaluates a checkpoint on an annotation file; images are resolved
/// relative to <annotation dir>/images.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& annotations);

struct AnalysisReport {
  PseudoStats stats;
  Thresholds thresholds;
  std::vector<nlohmann::json> trajectory;  // threshold log rows, if available

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Pseudo labels from the checkpoint's model on the held-back unlabeled split,
/// scored against its ground truth. Thresholds default to the checkpoint's.
/// Throws DataError when the ground-truth file is missing.
AnalysisReport analyze_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& gt_annotations,
                                  const std::optional<Thresholds>& override_thresholds = std::nullopt,
                                  const std::optional<std::filesystem::path>& threshold_log = std::nullopt);

/// Formats one metrics row exactly as written to metrics.csv.
std::string metrics_header();

}  // namespace et
