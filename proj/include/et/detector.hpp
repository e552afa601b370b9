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

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "et/geometry.hpp"
#include "et/netcore.hpp"
#include "et/tensor.hpp"

namespace et {

/// Anchor priors (w, h in px) of one detection scale together with its stride.
struct ScaleAnchors {
  double stride = 8.0;
  std::vector<Eigen::Vector2d> priors;
};

struct AnchorSet {
  std::vector<ScaleAnchors> scales;

  /// Throws ConfigError on empty scales or nonpositive priors.
  void validate() const;
};

struct GridDims {
  int height = 0;
  int width = 0;
};

/// Backbone + per-scale 1x1 heads. Each head emits anchors * (num_classes + 5)
/// channels: class logits, (tx, ty, tw, th), objectness logit.
struct DetectorArch {
  int image_size = 64;
  int num_classes = 3;
  StackSpec backbone;
  std::vector<int> head_taps;  // backbone layer feeding each scale
  std::vector<StackSpec> heads;
  AnchorSet anchors;

  int channels_per_anchor() const { return num_classes + 5; }
  int num_scales() const { return static_cast<int>(heads.size()); }
  std::vector<GridDims> grid_dims() const;
  int feature_channels() const { return backbone.layers.back().out_channels; }
  int feature_size() const { return backbone.output_size(image_size); }

  /// Desk-scale presets. num_scales == 1: four 3x3 convs (strides 2,2,2,1),
  /// one stride-8 head with three anchors. num_scales == 3: strides 2,2,2,2
  /// with heads tapped at strides 4, 8 and 16.
  static DetectorArch make(int image_size, int num_classes, std::vector<int> widths, int num_scales);

  friend bool operator==(const DetectorArch& a, const DetectorArch& b);
};

/// Raw head outputs of one scale, laid out [anchor][y][x][channel].
template <typename Scalar>
struct ScaleGrid {
  int anchors = 0, height = 0, width = 0, channels = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data;

  ScaleGrid() = default;
  ScaleGrid(int a, int h, int w, int c)
      : anchors(a), height(h), width(w), channels(c),
        data(Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(static_cast<Index>(a) * h * w * c)) {}

  Index offset(int a, int y, int x) const {
    return ((static_cast<Index>(a) * height + y) * width + x) * channels;
  }
  Scalar& at(int a, int y, int x, int k) { return data[offset(a, y, x) + k]; }
  Scalar at(int a, int y, int x, int k) const { return data[offset(a, y, x) + k]; }
  int num_classes() const { return channels - 5; }
  int reg_channel() const { return channels - 5; }
  int obj_channel() const { return channels - 1; }
  Index slots() const { return static_cast<Index>(anchors) * height * width; }
};

template <typename Scalar>
struct PredictionGrid {
  std::vector<ScaleGrid<Scalar>> scales;

  static PredictionGrid zeros_like(const PredictionGrid& g) {
    PredictionGrid out;
    for (const auto& s : g.scales) out.scales.emplace_back(s.anchors, s.height, s.width, s.channels);
    return out;
  }
};

enum class SlotState : std::uint8_t { kBackground, kPositive, kIgnored, kSoft };

struct TargetSlot {
  SlotState state = SlotState::kBackground;
  int class_id = -1;
  std::optional<Box> box;     // regression target
  double obj_target = 0.0;    // objectness target in [0, 1]
  double p_score = 0.0;       // combined score of the claiming pseudo label (0 if none)
  double pseudo_obj = 0.0;    // objectness score of the claiming pseudo label
  int label_class = -1;       // class of the claiming pseudo label (thresholds lookup)
  double claim_quality = 0.0; // anchor-shape IoU used for tie-breaks
  int source = -1;            // index of the claiming GT / pseudo label
};

struct TargetScale {
  int anchors = 0, height = 0, width = 0;
  std::vector<TargetSlot> slots;

  TargetSlot& at(int a, int y, int x) { return slots[(static_cast<std::size_t>(a) * height + y) * width + x]; }
  const TargetSlot& at(int a, int y, int x) const {
    return slots[(static_cast<std::size_t>(a) * height + y) * width + x];
  }
};

struct TargetGrid {
  std::vector<TargetScale> scales;

  static TargetGrid background(const AnchorSet& anchors, std::span<const GridDims> dims);
  std::size_t count(SlotState s) const;
};

struct GroundTruth {
  int class_id = 0;
  Box box;
};

inline constexpr double kAnchorRatioBound = 4.0;

/// Max of w/h ratios between a box and an anchor prior (both directions).
double anchor_ratio(const Box& box, const Eigen::Vector2d& prior);

/// IoU of a box and an anchor prior when both are centered at the origin.
double anchor_shape_iou(const Box& box, const Eigen::Vector2d& prior);

/// A slot (scale, anchor, y, x) that a box claims under the multi-positive rule.
struct SlotRef {
  int scale = 0, anchor = 0, y = 0, x = 0;
  double quality = 0.0;
};

/// Every slot a box is matched to: anchors within the ratio bound, at the
/// box's own cell plus the nearest horizontal and vertical neighbours.
std::vector<SlotRef> matching_slots(const Box& box, const AnchorSet& anchors,
                                    std::span<const GridDims> dims);

/// Lexicographic order on (class, cx, cy, w, h); resolves exact quality ties
/// independently of input order.
bool canonical_less(int class_a, const Box& a, int class_b, const Box& b);

/// Supervised multi-positive assignment. Positive slots carry class and box
/// targets; objectness targets are filled later by fill_objectness_targets.
TargetGrid assign_labels(std::span<const GroundTruth> gts, const AnchorSet& anchors,
                         std::span<const GridDims> dims, int num_classes);

/// max(0, CIoU(pred, gt)).
double objectness_target(const Box& pred, const Box& gt);

/// Decoded box of one slot (YOLOv5 parameterization).
template <typename Scalar>
Box decode_box(const ScaleGrid<Scalar>& g, const ScaleAnchors& anchors, int a, int y, int x) {
  const int r = g.reg_channel();
  const double sx = sigmoid(static_cast<double>(g.at(a, y, x, r)));
  const double sy = sigmoid(static_cast<double>(g.at(a, y, x, r + 1)));
  const double sw = sigmoid(static_cast<double>(g.at(a, y, x, r + 2)));
  const double sh = sigmoid(static_cast<double>(g.at(a, y, x, r + 3)));
  const double cx = (2.0 * sx - 0.5 + x) * anchors.stride;
  const double cy = (2.0 * sy - 0.5 + y) * anchors.stride;
  const double w = std::max(4.0 * sw * sw * anchors.priors[a].x(), 1e-9);
  const double h = std::max(4.0 * sh * sh * anchors.priors[a].y(), 1e-9);
  return Box::from_center(cx, cy, w, h);
}

/// Jacobian of (cx, cy, w, h) w.r.t. (tx, ty, tw, th); it is diagonal.
template <typename Scalar>
Eigen::Vector4d decode_box_jacobian(const ScaleGrid<Scalar>& g, const ScaleAnchors& anchors, int a,
                                    int y, int x) {
  const int r = g.reg_channel();
  Eigen::Vector4d s;
  for (int i = 0; i < 4; ++i) s[i] = sigmoid(static_cast<double>(g.at(a, y, x, r + i)));
  Eigen::Vector4d d;
  d[0] = 2.0 * s[0] * (1.0 - s[0]) * anchors.stride;
  d[1] = 2.0 * s[1] * (1.0 - s[1]) * anchors.stride;
  d[2] = 8.0 * s[2] * s[2] * (1.0 - s[2]) * anchors.priors[a].x();
  d[3] = 8.0 * s[3] * s[3] * (1.0 - s[3]) * anchors.priors[a].y();
  return d;
}

/// Inverse of decode_box for a given slot. Center offsets must lie in
/// (-0.5, 1.5) cells and w/h within 4x the prior, else DataError.
Eigen::Vector4d encode_box(const Box& box, const ScaleAnchors& anchors, int a, int y, int x);

/// One detection per slot: argmax class, sigmoid scores, decoded box.
template <typename Scalar>
std::vector<Detection> decode(const PredictionGrid<Scalar>& grid, const AnchorSet& anchors) {
  std::vector<Detection> out;
  for (std::size_t s = 0; s < grid.scales.size(); ++s) {
    const auto& g = grid.scales[s];
    const int nc = g.num_classes();
    for (int a = 0; a < g.anchors; ++a) {
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          int best = 0;
          for (int c = 1; c < nc; ++c) {
            if (g.at(a, y, x, c) > g.at(a, y, x, best)) best = c;
          }
          Detection d;
          d.box = decode_box(g, anchors.scales[s], a, y, x);
          d.class_id = best;
          d.cls_score = sigmoid(static_cast<double>(g.at(a, y, x, best)));
          d.obj_score = sigmoid(static_cast<double>(g.at(a, y, x, g.obj_channel())));
          out.push_back(d);
        }
      }
    }
  }
  return out;
}

/// Sets obj_target = objectness_target(decoded prediction, target box) on every
/// positive slot (and every slot with a box whose state is positive).
template <typename Scalar>
void fill_objectness_targets(TargetGrid& targets, const PredictionGrid<Scalar>& pred,
                             const AnchorSet& anchors) {
  for (std::size_t s = 0; s < targets.scales.size(); ++s) {
    auto& ts = targets.scales[s];
    for (int a = 0; a < ts.anchors; ++a) {
      for (int y = 0; y < ts.height; ++y) {
        for (int x = 0; x < ts.width; ++x) {
          auto& slot = ts.at(a, y, x);
          if (slot.state != SlotState::kPositive) continue;
          slot.obj_target =
              objectness_target(decode_box(pred.scales[s], anchors.scales[s], a, y, x), *slot.box);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Network

template <typename Scalar>
struct DetectorRecord {
  StackRecord<Scalar> backbone;
  std::vector<StackRecord<Scalar>> heads;
  PredictionGrid<Scalar> grid;

  const Tensor<Scalar>& features() const { return backbone.output(); }
};

template <typename Scalar>
ParamSet<Scalar> init_detector(const DetectorArch& arch, std::mt19937_64& rng) {
  ParamSet<Scalar> p;
  init_params(arch.backbone, p, rng);
  for (const auto& head : arch.heads) {
    init_params(head, p, rng);
    auto& bias = p[head.bias_name(0)];
    const int per = arch.channels_per_anchor();
    for (Index i = 0; i < bias.size(); ++i) {
      const int k = static_cast<int>(i % per);
      if (k < arch.num_classes) bias[i] = Scalar(-1.0);
      if (k == per - 1) bias[i] = Scalar(-4.0);
    }
  }
  return p;
}

template <typename Scalar>
DetectorRecord<Scalar> detector_forward(const ParamSet<Scalar>& params, const DetectorArch& arch,
                                        const Tensor<Scalar>& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != arch.image_size ||
      image.dim(2) != arch.image_size) {
    throw ConfigError("detector input must be [3, " + std::to_string(arch.image_size) + ", " +
                      std::to_string(arch.image_size) + "], got " + shape_string(image.shape()));
  }
  DetectorRecord<Scalar> rec;
  rec.backbone = forward(params, arch.backbone, image);
  const int per = arch.channels_per_anchor();
  for (std::size_t s = 0; s < arch.heads.size(); ++s) {
    rec.heads.push_back(forward(params, arch.heads[s], rec.backbone.layer_output(arch.head_taps[s])));
    const auto& out = rec.heads.back().output();
    const int na = static_cast<int>(arch.anchors.scales[s].priors.size());
    ScaleGrid<Scalar> g(na, static_cast<int>(out.dim(1)), static_cast<int>(out.dim(2)), per);
    for (int a = 0; a < na; ++a)
      for (int k = 0; k < per; ++k)
        for (int y = 0; y < g.height; ++y)
          for (int x = 0; x < g.width; ++x) g.at(a, y, x, k) = out.at(a * per + k, y, x);
    rec.grid.scales.push_back(std::move(g));
  }
  return rec;
}

/// Backpropagates a prediction-grid gradient (and optionally a gradient on the
/// final feature map) and accumulates parameter gradients into `grads`.
template <typename Scalar>
Tensor<Scalar> detector_backward(DetectorRecord<Scalar>& rec, const ParamSet<Scalar>& params,
                                 const DetectorArch& arch, const PredictionGrid<Scalar>& grid_grad,
                                 const Tensor<Scalar>* feature_grad, ParamSet<Scalar>& grads) {
  std::vector<Tensor<Scalar>> taps(arch.backbone.layers.size());
  const int per = arch.channels_per_anchor();
  for (std::size_t s = 0; s < arch.heads.size(); ++s) {
    const auto& g = grid_grad.scales[s];
    Tensor<Scalar> up({static_cast<Index>(g.anchors) * per, g.height, g.width});
    for (int a = 0; a < g.anchors; ++a)
      for (int k = 0; k < per; ++k)
        for (int y = 0; y < g.height; ++y)
          for (int x = 0; x < g.width; ++x) up.at(a * per + k, y, x) = g.at(a, y, x, k);
    std::vector<Tensor<Scalar>> head_up(1);
    head_up[0] = std::move(up);
    Tensor<Scalar> din = backward_accumulate<Scalar>(rec.heads[s], params, arch.heads[s], head_up, grads);
    auto& slot = taps[arch.head_taps[s]];
    if (slot.empty()) {
      slot = std::move(din);
    } else {
      slot.data() += din.data();
    }
  }
  if (feature_grad != nullptr) {
    auto& slot = taps.back();
    if (slot.empty()) {
      slot = *feature_grad;
    } else {
      slot.data() += feature_grad->data();
    }
  }
  return backward_accumulate<Scalar>(rec.backbone, params, arch.backbone, taps, grads);
}

}  // namespace et
