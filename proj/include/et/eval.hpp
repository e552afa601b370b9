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

#include <json.hpp>
#include <span>
#include <vector>

#include "et/detector.hpp"
#include "et/geometry.hpp"

namespace et {

struct EvalImage {
  std::vector<Detection> detections;
  std::vector<GroundTruth> gts;
};

/// One ranked detection after matching: its score and whether it matched.
struct RankedHit {
  double score = 0.0;
  bool tp = false;
};

/// Greedy matching of one class at one IoU threshold: detections in
/// descending score order (stable across images, then detection order) take
/// the unmatched same-class GT of highest IoU when that IoU >= iou_thresh.
std::vector<RankedHit> match_class(std::span<const EvalImage> images, int class_id, double iou_thresh,
                                   std::size_t* num_gt = nullptr);

/// All-point interpolated AP: area under the precision envelope. Returns 0
/// when num_gt == 0.
double average_precision(std::span<const RankedHit> ranked, std::size_t num_gt);

inline constexpr int kNumIouThresholds = 10;  // 0.50, 0.55, ..., 0.95
double iou_threshold(int i);

struct EvalReport {
  std::vector<double> ap50;     // per class
  std::vector<double> ap50_95;  // per class, mean over IoU thresholds
  std::vector<std::size_t> gt_counts;
  std::size_t num_detections = 0;
  double map50 = 0.0;     // mean over classes with at least one GT
  double map50_95 = 0.0;

  nlohmann::json to_json() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate_detections(std::span<const EvalImage> images, int num_classes);

/// Keeps the `max_det` highest-scoring detections.
std::vector<Detection> top_k(std::vector<Detection> dets, std::size_t max_det);

}  // namespace et
