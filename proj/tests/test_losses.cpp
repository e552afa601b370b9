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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "et/losses.hpp"
#include "et/pla.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace et;
using namespace et::testing;

namespace {

const DetectorArch kArch = DetectorArch::make(64, 3, {16, 32, 48, 48}, 1);
const std::vector<GridDims> kDims = kArch.grid_dims();
constexpr double kSlots = 3 * 8 * 8;

PredictionGrid<double> constant_grid(double value) {
  PredictionGrid<double> g;
  g.scales.emplace_back(3, 8, 8, kArch.channels_per_anchor());
  g.scales[0].data.setConstant(value);
  return g;
}

PseudoLabel label(const Box& box, int cls, double cls_score, double obj_score, const Thresholds& th) {
  Detection d{box, cls, cls_score, obj_score};
  const double p = combined_score(d);
  return {d, p, tag_for(p, th.tau1.at(cls), th.tau2.at(cls))};
}

// Logits saturated toward `gts` with exact box encodings at every positive slot.
PredictionGrid<double> saturated(const TargetGrid& t, double s) {
  PredictionGrid<double> g = constant_grid(0.0);
  auto& sg = g.scales[0];
  const auto& ts = t.scales[0];
  for (int a = 0; a < 3; ++a)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const auto& slot = ts.at(a, y, x);
        for (int c = 0; c < 3; ++c) sg.at(a, y, x, c) = (c == slot.class_id) ? s : -s;
        sg.at(a, y, x, sg.obj_channel()) = slot.state == SlotState::kPositive ? s : -s;
        if (slot.state == SlotState::kPositive) {
          const Eigen::Vector4d e = encode_box(*slot.box, kArch.anchors.scales[0], a, y, x);
          for (int k = 0; k < 4; ++k) sg.at(a, y, x, sg.reg_channel() + k) = e[k];
        }
      }
  return g;
}

}  // namespace

TEST(Supervised, AllBackgroundIsNLn2) {
  const TargetGrid t = assign_labels({}, kArch.anchors, kDims, 3);
  const auto g = constant_grid(0.0);
  const auto r = supervised_loss<double>({&g, 1}, {&t, 1}, kArch.anchors);
  EXPECT_NEAR(r.obj.sum, kSlots * std::log(2.0), 1e-9);
  EXPECT_EQ(r.obj.count, kSlots);
  EXPECT_EQ(r.cls.count, 0.0);
  EXPECT_EQ(r.reg.value(), 0.0);
}

TEST(Supervised, SaturationDrivesLossToZero) {
  const std::vector<GroundTruth> gts{{0, Box::from_center(21, 19, 10, 12)}, {2, Box::from_center(45, 41, 20, 16)}};
  TargetGrid t = assign_labels(gts, kArch.anchors, kDims, 3);
  double prev = 1e300;
  for (double s = 1.0; s <= 16.0; s += 1.0) {
    const auto g = saturated(t, s);
    fill_objectness_targets(t, g, kArch.anchors);
    const double l = supervised_loss<double>({&g, 1}, {&t, 1}, kArch.anchors).weighted({});
    EXPECT_LT(l, prev);
    EXPECT_GE(l, 0.0);
    prev = l;
  }
  EXPECT_LT(prev, 1e-5);
}

TEST(UnsupCls, ZeroWithoutReliableLabels) {
  const auto th = Thresholds::uniform(3, 0.1, 0.6);
  const std::vector<PseudoLabel> pl{label(Box::from_center(30, 30, 12, 12), 1, 0.5, 0.9, th),
                                    label(Box::from_center(10, 50, 8, 8), 0, 0.2, 0.2, th)};
  ASSERT_EQ(pl[0].tag, PseudoTag::kUncertain);
  const TargetGrid t = build_unsup_targets(pl, kArch.anchors, kDims, 3);
  std::mt19937_64 rng(1);
  const auto g = random_grid(rng, kArch);
  const auto r = unsup_cls_loss<double>({&g, 1}, {&t, 1}, th);
  EXPECT_EQ(r.value(), 0.0);
  EXPECT_EQ(r.count, 0.0);
}

TEST(UnsupCls, ReliableLabelMatchesSupervisedClassLoss) {
  const auto th = Thresholds::uniform(3, 0.1, 0.6);
  const Box b = Box::from_center(33, 27, 14, 10);
  const std::vector<PseudoLabel> pl{label(b, 2, 0.95, 0.9, th)};
  ASSERT_EQ(pl[0].tag, PseudoTag::kReliable);
  const std::vector<GroundTruth> gts{{2, b}};
  const TargetGrid tu = build_unsup_targets(pl, kArch.anchors, kDims, 3);
  const TargetGrid ts = assign_labels(gts, kArch.anchors, kDims, 3);
  std::mt19937_64 rng(2);
  const auto g = random_grid(rng, kArch);
  const auto u = unsup_cls_loss<double>({&g, 1}, {&tu, 1}, th);
  const auto s = supervised_loss<double>({&g, 1}, {&ts, 1}, kArch.anchors);
  EXPECT_GT(u.count, 0.0);
  EXPECT_EQ(u.count, s.cls.count);
  EXPECT_NEAR(u.value(), s.cls.value(), 1e-12);
}

TEST(UnsupCls, RaisingTau2ShrinksContributingSlots) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto dets = nms(random_detections(rng, 40, 3), 0.01, 0.65);
    const auto g = random_grid(rng, kArch);
    std::set<std::size_t> prev;
    bool first = true;
    for (double t2 = 0.2; t2 <= 1.0; t2 += 0.1) {
      const auto th = Thresholds::uniform(3, 0.1, t2);
      const auto pl = tag_detections(dets, th);
      const TargetGrid t = build_unsup_targets(pl, kArch.anchors, kDims, 3);
      std::vector<PredictionGrid<double>> grads{constant_grid(0.0)};
      unsup_cls_loss<double>({&g, 1}, {&t, 1}, th, {}, &grads);
      std::set<std::size_t> active;
      const auto& gg = grads[0].scales[0];
      for (int a = 0; a < 3; ++a)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
              if (gg.at(a, y, x, c) != 0.0) active.insert((a * 8 + y) * 8 + x);
      if (!first) {
        for (auto k : active) EXPECT_TRUE(prev.count(k)) << "slot " << k << " appeared at tau2 " << t2;
      }
      prev = std::move(active);
      first = false;
    }
  }
}

TEST(UnsupReg, HighObjectnessUncertainContributes) {
  const auto th = Thresholds::uniform(3, 0.1, 0.6);
  std::mt19937_64 rng(4);
  const auto g = random_grid(rng, kArch);
  const Box b = Box::from_center(30, 30, 12, 12);

  const std::vector<PseudoLabel> hi{label(b, 1, 0.5, 0.995, th)};
  ASSERT_EQ(hi[0].tag, PseudoTag::kUncertain);
  const TargetGrid th_hi = build_unsup_targets(hi, kArch.anchors, kDims, 3);
  const auto r_hi = unsup_reg_loss<double>({&g, 1}, {&th_hi, 1}, kArch.anchors, th);
  EXPECT_GT(r_hi.count, 0.0);
  EXPECT_GT(r_hi.value(), 0.0);

  const std::vector<PseudoLabel> lo{label(b, 1, 0.9, 0.5, th)};
  ASSERT_EQ(lo[0].tag, PseudoTag::kUncertain);
  const TargetGrid th_lo = build_unsup_targets(lo, kArch.anchors, kDims, 3);
  EXPECT_EQ(unsup_reg_loss<double>({&g, 1}, {&th_lo, 1}, kArch.anchors, th).count, 0.0);
}

TEST(UnsupReg, ExactBoxContributesZero) {
  const auto th = Thresholds::uniform(3, 0.1, 0.6);
  const Box b = Box::from_center(30, 26, 14, 9);
  const std::vector<PseudoLabel> pl{label(b, 0, 0.9, 0.9, th)};
  const TargetGrid t = build_unsup_targets(pl, kArch.anchors, kDims, 3);
  const auto g = saturated(t, 5.0);
  const auto r = unsup_reg_loss<double>({&g, 1}, {&t, 1}, kArch.anchors, th);
  EXPECT_GT(r.count, 0.0);
  EXPECT_NEAR(r.value(), 0.0, 1e-12);
}

TEST(UnsupObj, BelowTau1IsPureBackground) {
  const auto th = Thresholds::uniform(3, 0.3, 0.6);
  const std::vector<PseudoLabel> pl{label(Box::from_center(30, 30, 12, 12), 1, 0.5, 0.5, th)};
  ASSERT_EQ(pl[0].tag, PseudoTag::kBackground);
  const TargetGrid t = build_unsup_targets(pl, kArch.anchors, kDims, 3);
  const TargetGrid bg = assign_labels({}, kArch.anchors, kDims, 3);
  std::mt19937_64 rng(5);
  const auto g = random_grid(rng, kArch);
  EXPECT_NEAR(unsup_obj_loss<double>({&g, 1}, {&t, 1}, th).value(),
              supervised_loss<double>({&g, 1}, {&bg, 1}, kArch.anchors).obj.value(), 1e-12);
}

TEST(UnsupObj, SoftTargetClosedForm) {
  const auto th = Thresholds::uniform(3, 0.1, 0.8);
  const std::vector<PseudoLabel> pl{label(Box::from_center(30, 30, 12, 12), 1, 0.9, 0.7, th)};
  ASSERT_EQ(pl[0].tag, PseudoTag::kUncertain);
  const TargetGrid t = build_unsup_targets(pl, kArch.anchors, kDims, 3);
  const double n_soft = static_cast<double>(t.count(SlotState::kSoft));
  ASSERT_GT(n_soft, 0.0);
  EXPECT_EQ(t.count(SlotState::kPositive), 0u);
  for (const auto& s : t.scales[0].slots)
    if (s.state == SlotState::kSoft) {
      EXPECT_DOUBLE_EQ(s.obj_target, 0.7);
      EXPECT_FALSE(s.box.has_value());
      EXPECT_EQ(s.class_id, -1);
    }
  const double z = 1.3, p = 1.0 / (1.0 + std::exp(-z));
  const auto g = constant_grid(z);
  const double expect = (kSlots - n_soft) * -std::log(1 - p) + n_soft * -(0.7 * std::log(p) + 0.3 * std::log(1 - p));
  const auto r = unsup_obj_loss<double>({&g, 1}, {&t, 1}, th);
  EXPECT_NEAR(r.sum, expect, 1e-9);
  EXPECT_EQ(r.count, kSlots);
}

TEST(UnsupObj, BranchesAreExclusive) {
  EXPECT_EQ(objectness_branch(0.3, 0.1, 0.6), ObjBranch::kSoft);
  EXPECT_EQ(objectness_branch(0.05, 0.1, 0.6), ObjBranch::kBackground);
  EXPECT_EQ(objectness_branch(0.9, 0.1, 0.6), ObjBranch::kReliable);
  EXPECT_EQ(objectness_branch(0.1, 0.1, 0.6), ObjBranch::kBackground);
  EXPECT_EQ(objectness_branch(0.6, 0.1, 0.6), ObjBranch::kReliable);
  EXPECT_THROW(objectness_branch(0.5, 0.6, 0.4), InvariantError);
  const SweepResult r = branch_sweep(41, 21);
  EXPECT_GT(r.combinations, 0);
  EXPECT_EQ(r.violations, 0);
}

TEST(Combine, TotalAndBurnIn) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(total_loss(1.25, 0.0, 3.0), 1.25);
  EXPECT_NEAR(burn_in_loss(2.0, 0.4, 0.1), 2.04, 1e-15);
  EXPECT_DOUBLE_EQ(burn_in_loss(2.0, 0.4, 0.0), 2.0);
  EXPECT_THROW(total_loss(1.0, 1.0, -1.0), ConfigError);
  EXPECT_THROW(burn_in_loss(1.0, 1.0, -0.1), ConfigError);
  for (double lu = 0.0; lu < 3.0; lu += 0.37)
    EXPECT_NEAR(total_loss(0.8, lu + 1.0, 3.0) - total_loss(0.8, lu, 3.0), 3.0, 1e-12);
  const LossWeights w;
  EXPECT_DOUBLE_EQ(w.cls, 0.5);
  EXPECT_DOUBLE_EQ(w.reg, 0.05);
  EXPECT_DOUBLE_EQ(w.obj, 1.0);
}

TEST(Domain, ClosedForms) {
  Tensor<double> half({1, 4, 4});
  half.data().setConstant(0.5);
  EXPECT_NEAR(domain_loss(half, 0).sum, 16 * std::log(2.0), 1e-12);
  EXPECT_NEAR(domain_loss(half, 1).sum, 16 * std::log(2.0), 1e-12);
  Tensor<double> tiny({1, 4, 4});
  tiny.data().setConstant(1e-12);
  EXPECT_LT(domain_loss(tiny, 0).sum, 1e-5);
  EXPECT_GT(domain_loss(tiny, 1).sum, 100.0);
  EXPECT_THROW(domain_loss(half, 2), UsageError);
}

TEST(Losses, NonnegativeOnRandomInputs) {
  std::mt19937_64 rng(6);
  const auto th = Thresholds::uniform(3, 0.2, 0.5);
  for (int i = 0; i < 40; ++i) {
    const auto g = random_grid(rng, kArch, 4.0);
    TargetGrid ts = assign_labels(random_gts(rng, 4, 3), kArch.anchors, kDims, 3);
    fill_objectness_targets(ts, g, kArch.anchors);
    const auto s = supervised_loss<double>({&g, 1}, {&ts, 1}, kArch.anchors);
    EXPECT_GE(s.cls.value(), 0.0);
    EXPECT_GE(s.reg.value(), 0.0);
    EXPECT_GE(s.obj.value(), 0.0);
    TargetGrid tu = build_unsup_targets(tag_detections(nms(random_detections(rng, 30, 3), 0.01, 0.65), th),
                                        kArch.anchors, kDims, 3);
    fill_objectness_targets(tu, g, kArch.anchors);
    EXPECT_GE(unsup_cls_loss<double>({&g, 1}, {&tu, 1}, th).value(), 0.0);
    EXPECT_GE(unsup_reg_loss<double>({&g, 1}, {&tu, 1}, kArch.anchors, th).value(), 0.0);
    EXPECT_GE(unsup_obj_loss<double>({&g, 1}, {&tu, 1}, th).value(), 0.0);
  }
}
