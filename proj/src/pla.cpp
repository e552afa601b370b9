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

#include "et/pla.hpp"

#include <algorithm>

namespace et {

const char* tag_name(PseudoTag tag) {
  switch (tag) {
    case PseudoTag::kReliable:
      return "reliable";
    case PseudoTag::kUncertain:
      return "uncertain";
    case PseudoTag::kBackground:
      return "background";
  }
  return "?";
}

PseudoTag tag_for(double p, double tau1, double tau2) {
  if (p >= tau2) return PseudoTag::kReliable;
  if (p > tau1) return PseudoTag::kUncertain;
  return PseudoTag::kBackground;
}

std::vector<PseudoLabel> tag_detections(std::span<const Detection> post_nms, const Thresholds& th,
                                        std::size_t max_labels) {
  std::vector<PseudoLabel> out;
  out.reserve(std::min(post_nms.size(), max_labels));
  for (const Detection& d : post_nms) {
    if (out.size() >= max_labels) break;
    const double p = combined_score(d);
    out.push_back({d, p, tag_for(p, th.tau1.at(d.class_id), th.tau2.at(d.class_id))});
  }
  return out;
}

namespace {

bool claim_wins(const SlotRef& ref, const PseudoLabel& label, const TargetSlot& slot,
                std::span<const PseudoLabel> pseudo) {
  if (ref.quality != slot.claim_quality) return ref.quality > slot.claim_quality;
  const auto& other = pseudo[slot.source].det;
  return canonical_less(label.det.class_id, label.det.box, other.class_id, other.box);
}

}  // namespace

TargetGrid build_unsup_targets(std::span<const PseudoLabel> pseudo, const AnchorSet& anchors,
                               std::span<const GridDims> dims, int num_classes) {
  TargetGrid t = TargetGrid::background(anchors, dims);
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    const auto& pl = pseudo[i];
    if (pl.det.class_id < 0 || pl.det.class_id >= num_classes) {
      throw DataError("pseudo label " + std::to_string(i) + " has an out-of-range class id");
    }
  }

  // Uncertain labels first, then reliable ones overwrite.
  for (PseudoTag pass : {PseudoTag::kUncertain, PseudoTag::kReliable}) {
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      const auto& pl = pseudo[i];
      if (pl.tag != pass) continue;
      for (const SlotRef& ref : matching_slots(pl.det.box, anchors, dims)) {
        auto& slot = t.scales[ref.scale].at(ref.anchor, ref.y, ref.x);
        const bool occupied_same = (pass == PseudoTag::kUncertain && slot.state == SlotState::kSoft) ||
                                   (pass == PseudoTag::kReliable && slot.state == SlotState::kPositive);
        if (occupied_same && !claim_wins(ref, pl, slot, pseudo)) continue;

        slot = TargetSlot{};
        slot.p_score = pl.p_score;
        slot.pseudo_obj = pl.det.obj_score;
        slot.label_class = pl.det.class_id;
        slot.claim_quality = ref.quality;
        slot.source = static_cast<int>(i);
        if (pass == PseudoTag::kReliable) {
          slot.state = SlotState::kPositive;
          slot.class_id = pl.det.class_id;
          slot.box = pl.det.box;
        } else {
          slot.state = SlotState::kSoft;
          slot.obj_target = pl.det.obj_score;
          if (pl.det.obj_score > 0.99) slot.box = pl.det.box;
        }
      }
    }
  }
  return t;
}

TagStats& PseudoStats::of(PseudoTag tag) {
  switch (tag) {
    case PseudoTag::kReliable:
      return reliable;
    case PseudoTag::kUncertain:
      return uncertain;
    default:
      return background;
  }
}

const TagStats& PseudoStats::of(PseudoTag tag) const {
  return const_cast<PseudoStats*>(this)->of(tag);
}

PseudoOutcome classify_pseudo_label(const Detection& det, std::span<const GroundTruth> gts) {
  double best = 0.0;
  int best_class = -1;
  for (const auto& gt : gts) {
    const double v = iou(det.box, gt.box);
    if (v > best) {
      best = v;
      best_class = gt.class_id;
    }
  }
  if (!(best > 0.5)) return PseudoOutcome::kLocFalsePositive;
  return best_class == det.class_id ? PseudoOutcome::kTruePositive : PseudoOutcome::kClsFalsePositive;
}

PseudoStats pseudo_stats(std::span<const PseudoLabel> pseudo, std::span<const GroundTruth> gts) {
  PseudoStats stats;
  for (const auto& pl : pseudo) {
    TagStats& ts = stats.of(pl.tag);
    ++ts.count;
    switch (classify_pseudo_label(pl.det, gts)) {
      case PseudoOutcome::kTruePositive:
        ++ts.tp;
        break;
      case PseudoOutcome::kLocFalsePositive:
        ++ts.loc_fp;
        break;
      case PseudoOutcome::kClsFalsePositive:
        ++ts.cls_fp;
        break;
    }
  }
  return stats;
}

nlohmann::json to_json(const PseudoStats& stats) {
  nlohmann::json j;
  for (PseudoTag tag : {PseudoTag::kReliable, PseudoTag::kUncertain, PseudoTag::kBackground}) {
    const TagStats& t = stats.of(tag);
    j[tag_name(tag)] = {{"count", t.count},
                        {"tp", t.tp},
                        {"loc_fp", t.loc_fp},
                        {"cls_fp", t.cls_fp},
                        {"tp_fraction", t.tp_fraction()},
                        {"loc_fp_fraction", t.loc_fp_fraction()},
                        {"cls_fp_fraction", t.cls_fp_fraction()}};
  }
  return j;
}

}  // namespace et
