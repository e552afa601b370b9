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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "et/detector.hpp"
#include "et/errors.hpp"
#include "et/geometry.hpp"
#include "et/tensor.hpp"

namespace et {

inline constexpr double kProbEps = 1e-7;

/// A loss accumulated as a sum over contributing slots. The reported value is
/// the per-slot mean, or 0 when nothing contributed.
struct LossTerm {
  double sum = 0.0;
  double count = 0.0;

  double value() const { return count > 0.0 ? sum / count : 0.0; }
};

/// Relative weights of the cls / reg / obj components.
struct LossWeights {
  double cls = 0.5;
  double reg = 0.05;
  double obj = 1.0;
};

struct DetectionLoss {
  LossTerm cls, reg, obj;

  double weighted(const LossWeights& w) const {
    return w.cls * cls.value() + w.reg * reg.value() + w.obj * obj.value();
  }
};

/// One training step's objective. Component fields hold the weighted
/// contributions, so total == ls + lambda_u * lu + lambda_da * l_da exactly.
struct LossReport {
  double ls_cls = 0.0, ls_reg = 0.0, ls_obj = 0.0;
  double lu_cls = 0.0, lu_reg = 0.0, lu_obj = 0.0;
  double l_da = 0.0;
  double lambda_u = 0.0;
  double lambda_da = 0.0;
  double total = 0.0;

  double supervised() const { return ls_cls + ls_reg + ls_obj; }
  double unsupervised() const { return lu_cls + lu_reg + lu_obj; }
};

/// Binary cross-entropy on a logit with the probability clamped to
/// [eps, 1 - eps]. `grad` receives p - target everywhere, so a saturated
/// logit still gets pushed back toward its target.
inline double bce_logit(double logit, double target, double* grad = nullptr) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
  if (grad != nullptr) *grad = p - target;
  return -(target * std::log(pc) + (1.0 - target) * std::log(1.0 - pc));
}

/// Supervised loss plus the weighted unsupervised loss.
inline double total_loss(double ls, double lu, double lambda_u) {
  if (lambda_u < 0.0) throw ConfigError("lambda_u must be nonnegative");
  return ls + lambda_u * lu;
}

/// Warm-up objective: supervised loss plus weighted domain loss.
inline double burn_in_loss(double ls, double lda, double lambda_da) {
  if (lambda_da < 0.0) throw ConfigError("lambda_da must be nonnegative");
  return ls + lambda_da * lda;
}

/// Per-class threshold pair used by the unsupervised losses.
struct Thresholds {
  std::vector<double> tau1;
  std::vector<double> tau2;

  static Thresholds uniform(int num_classes, double t1, double t2) {
    return {std::vector<double>(num_classes, t1), std::vector<double>(num_classes, t2)};
  }
  /// Throws ConfigError unless 0 <= tau1 < tau2 <= 1 for every class.
  void validate() const;
  double mean_tau1() const;
  double mean_tau2() const;
};

enum class ObjBranch { kBackground, kReliable, kSoft };

/// Evaluates the three objectness indicators (p <= tau1, p >= tau2,
/// tau1 < p < tau2) and returns the active one. Throws InvariantError unless
/// exactly one is active.
ObjBranch objectness_branch(double p, double tau1, double tau2);

namespace detail {

template <typename Scalar>
void check_batch(std::span<const PredictionGrid<Scalar>> preds, std::span<const TargetGrid> targets,
                 std::vector<PredictionGrid<Scalar>>* grads) {
  if (preds.size() != targets.size()) throw UsageError("prediction/target batch size mismatch");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].scales.size() != targets[i].scales.size()) throw UsageError("scale count mismatch");
    for (std::size_t s = 0; s < preds[i].scales.size(); ++s) {
      const auto& g = preds[i].scales[s];
      const auto& t = targets[i].scales[s];
      if (g.anchors != t.anchors || g.height != t.height || g.width != t.width) {
        throw UsageError("prediction/target grid shape mismatch");
      }
    }
  }
  if (grads != nullptr && grads->size() != preds.size()) throw UsageError("gradient batch size mismatch");
}

/// Mean-over-classes BCE of one slot against a one-hot class target.
template <typename Scalar>
double class_ce(const ScaleGrid<Scalar>& g, int a, int y, int x, int cls, ScaleGrid<Scalar>* gg,
                double scale) {
  const int nc = g.num_classes();
  double loss = 0.0;
  for (int c = 0; c < nc; ++c) {
    double d = 0.0;
    loss += bce_logit(static_cast<double>(g.at(a, y, x, c)), c == cls ? 1.0 : 0.0, gg ? &d : nullptr);
    if (gg) gg->at(a, y, x, c) += static_cast<Scalar>(scale * d / nc);
  }
  return loss / nc;
}

/// 1 - CIoU between the decoded slot box and `target`.
template <typename Scalar>
double box_loss(const ScaleGrid<Scalar>& g, const ScaleAnchors& anchors, int a, int y, int x,
                const Box& target, ScaleGrid<Scalar>* gg, double scale) {
  const Box pred = decode_box(g, anchors, a, y, x);
  const CiouWithGrad c = ciou_with_grad(pred, target);
  if (gg) {
    const Eigen::Vector4d jac = decode_box_jacobian(g, anchors, a, y, x);
    const int r = g.reg_channel();
    for (int i = 0; i < 4; ++i) gg->at(a, y, x, r + i) += static_cast<Scalar>(-scale * c.d_pred[i] * jac[i]);
  }
  return 1.0 - c.value;
}

template <typename Scalar>
double obj_ce(const ScaleGrid<Scalar>& g, int a, int y, int x, double target, ScaleGrid<Scalar>* gg,
              double scale) {
  double d = 0.0;
  const double l = bce_logit(static_cast<double>(g.at(a, y, x, g.obj_channel())), target, gg ? &d : nullptr);
  if (gg) gg->at(a, y, x, g.obj_channel()) += static_cast<Scalar>(scale * d);
  return l;
}

/// Calls fn(image, scale, a, y, x, slot) for every slot of the batch.
template <typename Fn>
void for_each_slot(std::span<const TargetGrid> targets, Fn&& fn) {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t s = 0; s < targets[i].scales.size(); ++s) {
      const auto& ts = targets[i].scales[s];
      for (int a = 0; a < ts.anchors; ++a)
        for (int y = 0; y < ts.height; ++y)
          for (int x = 0; x < ts.width; ++x) fn(i, s, a, y, x, ts.at(a, y, x));
    }
  }
}

}  // namespace detail

/// Supervised detection loss over a batch: class BCE and (1 - CIoU) on positive
/// slots, objectness BCE on all non-ignored slots. Each component is averaged
/// over its contributing slots. When `grads` is given, d(weighted loss)/d(grid)
/// times `grad_scale` is accumulated into it.
template <typename Scalar>
DetectionLoss supervised_loss(std::span<const PredictionGrid<Scalar>> preds,
                              std::span<const TargetGrid> targets, const AnchorSet& anchors,
                              const LossWeights& w = {},
                              std::vector<PredictionGrid<Scalar>>* grads = nullptr,
                              double grad_scale = 1.0) {
  detail::check_batch(preds, targets, grads);
  DetectionLoss out;
  detail::for_each_slot(targets, [&](std::size_t, std::size_t, int, int, int, const TargetSlot& slot) {
    if (slot.state == SlotState::kPositive) {
      out.cls.count += 1;
      out.reg.count += 1;
    }
    if (slot.state != SlotState::kIgnored) out.obj.count += 1;
  });
  const double kc = out.cls.count > 0 ? grad_scale * w.cls / out.cls.count : 0.0;
  const double kr = out.reg.count > 0 ? grad_scale * w.reg / out.reg.count : 0.0;
  const double ko = out.obj.count > 0 ? grad_scale * w.obj / out.obj.count : 0.0;

  detail::for_each_slot(targets, [&](std::size_t i, std::size_t s, int a, int y, int x,
                                     const TargetSlot& slot) {
    const auto& g = preds[i].scales[s];
    ScaleGrid<Scalar>* gg = grads ? &(*grads)[i].scales[s] : nullptr;
    switch (slot.state) {
      case SlotState::kPositive:
        out.cls.sum += detail::class_ce(g, a, y, x, slot.class_id, gg, kc);
        out.reg.sum += detail::box_loss(g, anchors.scales[s], a, y, x, *slot.box, gg, kr);
        out.obj.sum += detail::obj_ce(g, a, y, x, slot.obj_target, gg, ko);
        break;
      case SlotState::kBackground:
        out.obj.sum += detail::obj_ce(g, a, y, x, 0.0, gg, ko);
        break;
      case SlotState::kSoft:
        out.obj.sum += detail::obj_ce(g, a, y, x, slot.obj_target, gg, ko);
        break;
      case SlotState::kIgnored:
        break;
    }
  });
  return out;
}

namespace detail {

// Branch of a slot in the unsupervised losses; unclaimed slots are background.
inline ObjBranch slot_branch(const TargetSlot& slot, const Thresholds& th) {
  if (slot.source < 0) {
    if (slot.state != SlotState::kBackground) throw InvariantError("unclaimed slot is not background");
    return ObjBranch::kBackground;
  }
  const ObjBranch b = objectness_branch(slot.p_score, th.tau1.at(slot.label_class), th.tau2.at(slot.label_class));
  const bool consistent = (b == ObjBranch::kReliable && slot.state == SlotState::kPositive) ||
                          (b == ObjBranch::kSoft && slot.state == SlotState::kSoft) ||
                          (b == ObjBranch::kBackground && slot.state == SlotState::kBackground);
  if (!consistent) throw InvariantError("slot state disagrees with its pseudo-label score band");
  return b;
}

inline bool reg_active(const TargetSlot& slot, const Thresholds& th) {
  if (slot.source < 0) return false;
  const bool reliable = slot.p_score >= th.tau2.at(slot.label_class);
  return reliable || slot.pseudo_obj > 0.99;
}

}  // namespace detail

/// Class BCE at slots claimed by pseudo labels with p >= tau2.
template <typename Scalar>
LossTerm unsup_cls_loss(std::span<const PredictionGrid<Scalar>> preds, std::span<const TargetGrid> targets,
                        const Thresholds& th, const LossWeights& w = {},
                        std::vector<PredictionGrid<Scalar>>* grads = nullptr, double grad_scale = 1.0) {
  detail::check_batch(preds, targets, grads);
  LossTerm out;
  detail::for_each_slot(targets, [&](std::size_t, std::size_t, int, int, int, const TargetSlot& slot) {
    if (slot.source >= 0 && slot.p_score >= th.tau2.at(slot.label_class)) out.count += 1;
  });
  const double k = out.count > 0 ? grad_scale * w.cls / out.count : 0.0;
  detail::for_each_slot(targets, [&](std::size_t i, std::size_t s, int a, int y, int x,
                                     const TargetSlot& slot) {
    if (slot.source < 0 || !(slot.p_score >= th.tau2.at(slot.label_class))) return;
    if (slot.state != SlotState::kPositive) throw InvariantError("reliable slot without class target");
    ScaleGrid<Scalar>* gg = grads ? &(*grads)[i].scales[s] : nullptr;
    out.sum += detail::class_ce(preds[i].scales[s], a, y, x, slot.class_id, gg, k);
  });
  return out;
}

/// (1 - CIoU) at slots whose pseudo label has p >= tau2 or objectness > 0.99;
/// the pseudo box is the regression target.
template <typename Scalar>
LossTerm unsup_reg_loss(std::span<const PredictionGrid<Scalar>> preds, std::span<const TargetGrid> targets,
                        const AnchorSet& anchors, const Thresholds& th, const LossWeights& w = {},
                        std::vector<PredictionGrid<Scalar>>* grads = nullptr, double grad_scale = 1.0) {
  detail::check_batch(preds, targets, grads);
  LossTerm out;
  detail::for_each_slot(targets, [&](std::size_t, std::size_t, int, int, int, const TargetSlot& slot) {
    if (detail::reg_active(slot, th)) out.count += 1;
  });
  const double k = out.count > 0 ? grad_scale * w.reg / out.count : 0.0;
  detail::for_each_slot(targets, [&](std::size_t i, std::size_t s, int a, int y, int x,
                                     const TargetSlot& slot) {
    if (!detail::reg_active(slot, th)) return;
    if (!slot.box) throw InvariantError("regression-active slot without box target");
    ScaleGrid<Scalar>* gg = grads ? &(*grads)[i].scales[s] : nullptr;
    out.sum += detail::box_loss(preds[i].scales[s], anchors.scales[s], a, y, x, *slot.box, gg, k);
  });
  return out;
}

/// Three-branch objectness loss: background (target 0), reliable (CIoU-based
/// target), uncertain (soft target = pseudo-label objectness).
template <typename Scalar>
LossTerm unsup_obj_loss(std::span<const PredictionGrid<Scalar>> preds, std::span<const TargetGrid> targets,
                        const Thresholds& th, const LossWeights& w = {},
                        std::vector<PredictionGrid<Scalar>>* grads = nullptr, double grad_scale = 1.0) {
  detail::check_batch(preds, targets, grads);
  LossTerm out;
  detail::for_each_slot(targets, [&](std::size_t, std::size_t, int, int, int, const TargetSlot& slot) {
    if (slot.state != SlotState::kIgnored) out.count += 1;
  });
  const double k = out.count > 0 ? grad_scale * w.obj / out.count : 0.0;
  detail::for_each_slot(targets, [&](std::size_t i, std::size_t s, int a, int y, int x,
                                     const TargetSlot& slot) {
    if (slot.state == SlotState::kIgnored) return;
    ScaleGrid<Scalar>* gg = grads ? &(*grads)[i].scales[s] : nullptr;
    const auto& g = preds[i].scales[s];
    switch (detail::slot_branch(slot, th)) {
      case ObjBranch::kBackground:
        out.sum += detail::obj_ce(g, a, y, x, 0.0, gg, k);
        break;
      case ObjBranch::kReliable:
        out.sum += detail::obj_ce(g, a, y, x, slot.obj_target, gg, k);
        break;
      case ObjBranch::kSoft:
        out.sum += detail::obj_ce(g, a, y, x, slot.pseudo_obj, gg, k);
        break;
    }
  });
  return out;
}

/// Domain cross-entropy on a probability map: -sum[D log p + (1 - D) log(1 - p)], p clamped
/// to [eps, 1 - eps]. count = number of locations.
template <typename Scalar>
LossTerm domain_loss(const Tensor<Scalar>& p_map, int domain) {
  if (domain != 0 && domain != 1) throw UsageError("domain flag must be 0 or 1");
  LossTerm out;
  for (Index i = 0; i < p_map.size(); ++i) {
    const double p = std::clamp(static_cast<double>(p_map[i]), kProbEps, 1.0 - kProbEps);
    out.sum += -(domain * std::log(p) + (1 - domain) * std::log(1.0 - p));
  }
  out.count = static_cast<double>(p_map.size());
  return out;
}

/// Domain loss over a batch of classifier logit maps, mean-pooled over all
/// locations of all maps. Gradients w.r.t. the logits (times grad_scale) are
/// written into `grads` (resized as needed).
template <typename Scalar>
LossTerm domain_loss_logits(std::span<const Tensor<Scalar>> logits, std::span<const int> domains,
                            std::vector<Tensor<Scalar>>* grads = nullptr, double grad_scale = 1.0) {
  if (logits.size() != domains.size()) throw UsageError("domain batch size mismatch");
  LossTerm out;
  for (const auto& l : logits) out.count += static_cast<double>(l.size());
  const double k = out.count > 0 ? grad_scale / out.count : 0.0;
  if (grads) grads->resize(logits.size());
  for (std::size_t m = 0; m < logits.size(); ++m) {
    const int d = domains[m];
    if (d != 0 && d != 1) throw UsageError("domain flag must be 0 or 1");
    if (grads) (*grads)[m] = Tensor<Scalar>(logits[m].shape());
    for (Index i = 0; i < logits[m].size(); ++i) {
      double g = 0.0;
      out.sum += bce_logit(static_cast<double>(logits[m][i]), d, grads ? &g : nullptr);
      if (grads) (*grads)[m][i] = static_cast<Scalar>(k * g);
    }
  }
  return out;
}

}  // namespace et
