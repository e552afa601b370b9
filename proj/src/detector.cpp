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

#include "et/detector.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "et/errors.hpp"

namespace et {

void AnchorSet::validate() const {
  if (scales.empty()) throw ConfigError("anchor set has no scales");
  for (const auto& s : scales) {
    if (s.priors.empty()) throw ConfigError("anchor scale without priors");
    if (!(s.stride > 0.0)) throw ConfigError("anchor stride must be positive");
    for (const auto& p : s.priors) {
      if (!(p.x() > 0.0) || !(p.y() > 0.0)) throw ConfigError("anchor priors must be positive");
    }
  }
}

std::vector<GridDims> DetectorArch::grid_dims() const {
  std::vector<GridDims> dims;
  for (std::size_t s = 0; s < heads.size(); ++s) {
    int size = image_size;
    for (int i = 0; i <= head_taps[s]; ++i) size = conv_output_size(size, backbone.layers[i]);
    dims.push_back({size, size});
  }
  return dims;
}

DetectorArch DetectorArch::make(int image_size, int num_classes, std::vector<int> widths,
                                int num_scales) {
  if (num_scales != 1 && num_scales != 3) throw ConfigError("num_scales must be 1 or 3");
  if (widths.size() < 2 || widths.size() > 4) throw ConfigError("backbone needs 2 to 4 conv layers");
  if (num_scales == 3 && widths.size() != 4) throw ConfigError("3-scale mode needs 4 backbone layers");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");

  DetectorArch arch;
  arch.image_size = image_size;
  arch.num_classes = num_classes;
  arch.backbone.name = "backbone";
  int in = 3;
  double stride = 1.0;
  std::vector<double> layer_stride;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const int s = (num_scales == 3 || i < 3) ? 2 : 1;
    arch.backbone.layers.push_back({in, widths[i], 3, s, Activation::kLeakyRelu});
    in = widths[i];
    stride *= s;
    layer_stride.push_back(stride);
  }

  auto square = [](std::initializer_list<double> sizes) {
    std::vector<Eigen::Vector2d> out;
    for (double v : sizes) out.emplace_back(v, v);
    return out;
  };
  if (num_scales == 1) {
    arch.head_taps = {static_cast<int>(widths.size()) - 1};
    arch.anchors.scales.push_back({layer_stride.back(), square({8.0, 14.0, 22.0})});
  } else {
    arch.head_taps = {1, 2, 3};
    arch.anchors.scales.push_back({layer_stride[1], square({5.0, 8.0, 11.0})});
    arch.anchors.scales.push_back({layer_stride[2], square({14.0, 20.0, 26.0})});
    arch.anchors.scales.push_back({layer_stride[3], square({32.0, 44.0, 56.0})});
  }
  for (std::size_t s = 0; s < arch.head_taps.size(); ++s) {
    StackSpec head;
    head.name = "head" + std::to_string(s);
    const int na = static_cast<int>(arch.anchors.scales[s].priors.size());
    head.layers.push_back({widths[arch.head_taps[s]], na * arch.channels_per_anchor(), 1, 1,
                           Activation::kNone});
    arch.heads.push_back(head);
  }
  if (arch.feature_size() < 1) throw ConfigError("image too small for the backbone");
  return arch;
}

bool operator==(const DetectorArch& a, const DetectorArch& b) {
  if (a.image_size != b.image_size || a.num_classes != b.num_classes || !(a.backbone == b.backbone) ||
      a.head_taps != b.head_taps || a.heads != b.heads ||
      a.anchors.scales.size() != b.anchors.scales.size()) {
    return false;
  }
  for (std::size_t s = 0; s < a.anchors.scales.size(); ++s) {
    const auto& x = a.anchors.scales[s];
    const auto& y = b.anchors.scales[s];
    if (x.stride != y.stride || x.priors != y.priors) return false;
  }
  return true;
}

TargetGrid TargetGrid::background(const AnchorSet& anchors, std::span<const GridDims> dims) {
  if (dims.size() != anchors.scales.size()) throw ConfigError("grid dims do not match anchor scales");
  TargetGrid t;
  for (std::size_t s = 0; s < dims.size(); ++s) {
    TargetScale ts;
    ts.anchors = static_cast<int>(anchors.scales[s].priors.size());
    ts.height = dims[s].height;
    ts.width = dims[s].width;
    ts.slots.resize(static_cast<std::size_t>(ts.anchors) * ts.height * ts.width);
    t.scales.push_back(std::move(ts));
  }
  return t;
}

std::size_t TargetGrid::count(SlotState s) const {
  std::size_t n = 0;
  for (const auto& ts : scales)
    for (const auto& slot : ts.slots) n += slot.state == s;
  return n;
}

double anchor_ratio(const Box& box, const Eigen::Vector2d& prior) {
  return std::max({box.w() / prior.x(), prior.x() / box.w(), box.h() / prior.y(), prior.y() / box.h()});
}

double anchor_shape_iou(const Box& box, const Eigen::Vector2d& prior) {
  const double inter = std::min(box.w(), prior.x()) * std::min(box.h(), prior.y());
  return inter / (box.area() + prior.x() * prior.y() - inter);
}

std::vector<SlotRef> matching_slots(const Box& box, const AnchorSet& anchors,
                                    std::span<const GridDims> dims) {
  std::vector<SlotRef> out;
  for (std::size_t s = 0; s < anchors.scales.size(); ++s) {
    const auto& sa = anchors.scales[s];
    const GridDims& d = dims[s];
    const double gx = box.cx() / sa.stride;
    const double gy = box.cy() / sa.stride;
    const int cx = std::clamp(static_cast<int>(std::floor(gx)), 0, d.width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(gy)), 0, d.height - 1);
    const int nx = (gx - cx) < 0.5 ? cx - 1 : cx + 1;
    const int ny = (gy - cy) < 0.5 ? cy - 1 : cy + 1;

    std::vector<std::pair<int, int>> cells{{cx, cy}};
    if (nx >= 0 && nx < d.width) cells.emplace_back(nx, cy);
    if (ny >= 0 && ny < d.height) cells.emplace_back(cx, ny);

    for (int a = 0; a < static_cast<int>(sa.priors.size()); ++a) {
      if (!(anchor_ratio(box, sa.priors[a]) < kAnchorRatioBound)) continue;
      const double q = anchor_shape_iou(box, sa.priors[a]);
      for (auto [x, y] : cells) out.push_back({static_cast<int>(s), a, y, x, q});
    }
  }
  return out;
}

bool canonical_less(int class_a, const Box& a, int class_b, const Box& b) {
  return std::make_tuple(class_a, a.cx(), a.cy(), a.w(), a.h()) <
         std::make_tuple(class_b, b.cx(), b.cy(), b.w(), b.h());
}

TargetGrid assign_labels(std::span<const GroundTruth> gts, const AnchorSet& anchors,
                         std::span<const GridDims> dims, int num_classes) {
  TargetGrid t = TargetGrid::background(anchors, dims);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& gt = gts[i];
    if (gt.class_id < 0 || gt.class_id >= num_classes) {
      throw DataError("ground truth " + std::to_string(i) + " has class id " +
                      std::to_string(gt.class_id) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    for (const SlotRef& ref : matching_slots(gt.box, anchors, dims)) {
      auto& slot = t.scales[ref.scale].at(ref.anchor, ref.y, ref.x);
      if (slot.state == SlotState::kPositive) {
        const bool wins = ref.quality > slot.claim_quality ||
                          (ref.quality == slot.claim_quality &&
                           canonical_less(gt.class_id, gt.box, slot.class_id, *slot.box));
        if (!wins) continue;
      }
      slot.state = SlotState::kPositive;
      slot.class_id = gt.class_id;
      slot.box = gt.box;
      slot.obj_target = 0.0;
      slot.claim_quality = ref.quality;
      slot.source = static_cast<int>(i);
    }
  }
  return t;
}

double objectness_target(const Box& pred, const Box& gt) { return std::max(0.0, ciou(pred, gt)); }

Eigen::Vector4d encode_box(const Box& box, const ScaleAnchors& anchors, int a, int y, int x) {
  auto logit = [](double p) {
    if (!(p > 0.0 && p < 1.0)) throw DataError("box cannot be encoded at this slot");
    return std::log(p / (1.0 - p));
  };
  const double ox = box.cx() / anchors.stride - x;
  const double oy = box.cy() / anchors.stride - y;
  return {logit((ox + 0.5) / 2.0), logit((oy + 0.5) / 2.0),
          logit(std::sqrt(box.w() / anchors.priors[a].x()) / 2.0),
          logit(std::sqrt(box.h() / anchors.priors[a].y()) / 2.0)};
}

}  // namespace et
