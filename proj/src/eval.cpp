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

#include "et/eval.hpp"

#include <algorithm>
#include <numeric>

namespace et {

std::vector<RankedHit> match_class(std::span<const EvalImage> images, int class_id, double iou_thresh,
                                   std::size_t* num_gt) {
  struct Entry {
    double score;
    std::size_t image, det;
  };
  std::vector<Entry> order;
  std::size_t gts = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t d = 0; d < images[i].detections.size(); ++d) {
      if (images[i].detections[d].class_id == class_id) order.push_back({images[i].detections[d].score(), i, d});
    }
    for (const auto& gt : images[i].gts) gts += gt.class_id == class_id;
  }
  std::stable_sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].gts.size(), false);

  std::vector<RankedHit> out;
  out.reserve(order.size());
  for (const Entry& e : order) {
    const Box& box = images[e.image].detections[e.det].box;
    const auto& gt_list = images[e.image].gts;
    double best = -1.0;
    std::size_t best_j = gt_list.size();
    for (std::size_t j = 0; j < gt_list.size(); ++j) {
      if (gt_list[j].class_id != class_id || taken[e.image][j]) continue;
      const double v = iou(box, gt_list[j].box);
      if (v >= iou_thresh && v > best) {
        best = v;
        best_j = j;
      }
    }
    const bool tp = best_j < gt_list.size();
    if (tp) taken[e.image][best_j] = true;
    out.push_back({e.score, tp});
  }
  if (num_gt) *num_gt = gts;
  return out;
}

double average_precision(std::span<const RankedHit> ranked, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::size_t n = ranked.size();
  std::vector<double> precision(n), recall(n);
  double tp = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += ranked[k].tp;
    precision[k] = tp / static_cast<double>(k + 1);
    recall[k] = tp / static_cast<double>(num_gt);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double iou_threshold(int i) { return 0.5 + 0.05 * i; }

EvalReport evaluate_detections(std::span<const EvalImage> images, int num_classes) {
  EvalReport r;
  r.ap50.assign(num_classes, 0.0);
  r.ap50_95.assign(num_classes, 0.0);
  r.gt_counts.assign(num_classes, 0);
  for (const auto& im : images) r.num_detections += im.detections.size();
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    double sum = 0.0;
    for (int t = 0; t < kNumIouThresholds; ++t) {
      std::size_t gts = 0;
      const auto hits = match_class(images, c, iou_threshold(t), &gts);
      const double ap = average_precision(hits, gts);
      if (t == 0) {
        r.ap50[c] = ap;
        r.gt_counts[c] = gts;
      }
      sum += ap;
    }
    r.ap50_95[c] = sum / kNumIouThresholds;
    if (r.gt_counts[c] > 0) {
      ++present;
      r.map50 += r.ap50[c];
      r.map50_95 += r.ap50_95[c];
    }
  }
  if (present > 0) {
    r.map50 /= present;
    r.map50_95 /= present;
  }
  return r;
}

nlohmann::json EvalReport::to_json() const {
  return {{"ap50", ap50},           {"ap50_95", ap50_95},   {"gt_counts", gt_counts},
          {"num_detections", num_detections}, {"map50", map50}, {"map50_95", map50_95}};
}

std::vector<Detection> top_k(std::vector<Detection> dets, std::size_t max_det) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score() > b.score(); });
  if (dets.size() > max_det) dets.resize(max_det);
  return dets;
}

}  // namespace et
