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

#include <cstddef>
#include <json.hpp>
#include <span>
#include <vector>

#include "et/detector.hpp"
#include "et/geometry.hpp"
#include "et/losses.hpp"

namespace et {

enum class PseudoTag { kBackground, kUncertain, kReliable };

const char* tag_name(PseudoTag tag);

struct PseudoLabel {
  Detection det;
  double p_score = 0.0;
  PseudoTag tag = PseudoTag::kBackground;
};

/// Weighted pseudo-label score: objectness times classification score.
inline double combined_score(const Detection& det) { return det.obj_score * det.cls_score; }

/// p <= tau1: background; tau1 < p < tau2: uncertain; p >= tau2: reliable.
PseudoTag tag_for(double p, double tau1, double tau2);

struct PlaConfig {
  NmsConfig nms;
  std::size_t max_labels = 300;  // per image, after NMS
};

/// Tags already-suppressed detections (score-descending) with per-class
/// thresholds, keeping at most `max_labels`.
std::vector<PseudoLabel> tag_detections(std::span<const Detection> post_nms, const Thresholds& th,
                                        std::size_t max_labels = 300);

/// decode -> combined score -> NMS -> tag. Throws ConfigError unless every
/// class has tau1 < tau2.
template <typename Scalar>
std::vector<PseudoLabel> generate_pseudo_labels(const PredictionGrid<Scalar>& teacher_grid,
                                                const AnchorSet& anchors, const Thresholds& th,
                                                const PlaConfig& cfg = {}) {
  th.validate();
  const std::vector<Detection> dets = decode(teacher_grid, anchors);
  const std::vector<Detection> kept = nms(dets, cfg.nms);
  return tag_detections(kept, th, cfg.max_labels);
}

/// Student targets for one unlabeled view. Reliable labels are assigned like
/// ground truth (positive slots); uncertain labels mark their slots soft with
/// the label's objectness as target, plus a box target when that objectness
/// exceeds 0.99. Precedence: reliable > soft > background.
TargetGrid build_unsup_targets(std::span<const PseudoLabel> pseudo, const AnchorSet& anchors,
                               std::span<const GridDims> dims, int num_classes);

struct TagStats {
  std::size_t count = 0;
  std::size_t tp = 0;
  std::size_t loc_fp = 0;
  std::size_t cls_fp = 0;

  double tp_fraction() const { return count ? static_cast<double>(tp) / count : 0.0; }
  double loc_fp_fraction() const { return count ? static_cast<double>(loc_fp) / count : 0.0; }
  double cls_fp_fraction() const { return count ? static_cast<double>(cls_fp) / count : 0.0; }
  void merge(const TagStats& o) {
    count += o.count;
    tp += o.tp;
    loc_fp += o.loc_fp;
    cls_fp += o.cls_fp;
  }
};

/// True positive / localization FP / classification FP breakdown per tag.
struct PseudoStats {
  TagStats reliable;
  TagStats uncertain;
  TagStats background;

  TagStats& of(PseudoTag tag);
  const TagStats& of(PseudoTag tag) const;
  void merge(const PseudoStats& o) {
    reliable.merge(o.reliable);
    uncertain.merge(o.uncertain);
    background.merge(o.background);
  }
};

enum class PseudoOutcome { kTruePositive, kLocFalsePositive, kClsFalsePositive };

/// Best-IoU GT decides: IoU <= 0.5 -> LocFP; else same class -> TP, other -> ClsFP.
PseudoOutcome classify_pseudo_label(const Detection& det, std::span<const GroundTruth> gts);

PseudoStats pseudo_stats(std::span<const PseudoLabel> pseudo, std::span<const GroundTruth> gts);

nlohmann::json to_json(const PseudoStats& stats);

}  // namespace et
