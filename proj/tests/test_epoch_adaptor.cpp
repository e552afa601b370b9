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

#include "et/augment.hpp"
#include "et/epoch_adaptor.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace et;
using namespace et::testing;

namespace {

LabeledImage boxes_at(std::initializer_list<std::pair<double, double>> centers, int cls) {
  LabeledImage img{make_image(64, 64), {}, {0}};
  for (auto [x, y] : centers) img.labels.push_back({cls, Box::from_center(x, y, 4, 4)});
  return img;
}

}  // namespace

TEST(CountGt, EmptyEpochIsZero) {
  EXPECT_EQ(count_gt({}, 3), std::vector<double>(3, 0.0));
  const std::vector<std::vector<GroundTruth>> views(5);
  EXPECT_EQ(count_gt(views, 2), std::vector<double>(2, 0.0));
}

TEST(CountGt, MosaicClipsTwoOfTen) {
  // Center (32, 32) at scale 1: tile 0 shows its lower-right quadrant, tile 1
  // lower-left, tile 2 upper-right, tile 3 upper-left.
  const std::vector<LabeledImage> four{boxes_at({{48, 48}, {10, 10}}, 0),
                                       boxes_at({{10, 40}, {20, 50}, {15, 58}}, 1),
                                       boxes_at({{50, 10}}, 2),
                                       boxes_at({{8, 8}, {20, 12}, {12, 24}, {50, 50}}, 0)};
  const LabeledImage m = mosaic(four, 64, {32, 32, {1.0, 1.0, 1.0, 1.0}});
  const std::vector<std::vector<GroundTruth>> views{m.labels};
  const auto counts = count_gt(views, 3);
  EXPECT_EQ(counts, (std::vector<double>{4, 3, 1}));
  EXPECT_EQ(counts[0] + counts[1] + counts[2], 8.0);
}

TEST(Thresholds, RankExample) {
  const std::vector<double> p{0.9, 0.8, 0.7, 0.6, 0.5};
  const ThresholdPair t = thresholds_from_scores(p, 4.0, 50.0);
  EXPECT_DOUBLE_EQ(t.tau1, 0.6);
  EXPECT_DOUBLE_EQ(t.tau2, 0.8);
  EXPECT_FALSE(t.fallback);
  const ThresholdPair same = thresholds_from_scores(p, 4.0, 100.0);
  EXPECT_DOUBLE_EQ(same.tau1, same.tau2);
  const ThresholdPair clamp = thresholds_from_scores(p, 40.0, 60.0);
  EXPECT_DOUBLE_EQ(clamp.tau1, 0.5);
  EXPECT_DOUBLE_EQ(clamp.tau2, 0.5);
  const ThresholdPair small = thresholds_from_scores(p, 0.0, 60.0);
  EXPECT_DOUBLE_EQ(small.tau1, 0.9);
}

TEST(Thresholds, EmptyListFallsBack) {
  const ThresholdPair t = thresholds_from_scores({}, 4.0, 60.0);
  EXPECT_TRUE(t.fallback);
  EXPECT_DOUBLE_EQ(t.tau1, 0.1);
  EXPECT_DOUBLE_EQ(t.tau2, 0.6);
}

TEST(Thresholds, FromEpochStats) {
  EpochStats st(1, 10, 2, 50.0);
  const std::vector<GroundTruth> two{{0, Box::from_center(5, 5, 4, 4)}, {0, Box::from_center(20, 20, 4, 4)}};
  for (int i = 0; i < 10; ++i) st.add_labels(two);
  EXPECT_DOUBLE_EQ(st.gt_per_pass(0), 20.0);
  std::mt19937_64 rng(1);
  for (double s : {0.6, 0.9, 0.5, 0.8, 0.7}) st.add_score(0, s, rng);
  st.finalize();
  EXPECT_EQ(st.scores[0], (std::vector<double>{0.9, 0.8, 0.7, 0.6, 0.5}));
  const ThresholdPair t = compute_thresholds(st, 0);
  EXPECT_DOUBLE_EQ(t.tau1, 0.6);
  EXPECT_DOUBLE_EQ(t.tau2, 0.8);
}

TEST(Thresholds, OrderedAndScaleConsistent) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> p(uniform_int(rng, 1, 40));
    for (auto& v : p) v = uniform(rng, 0.0, 1.0);
    std::sort(p.begin(), p.end(), std::greater<>());
    const double expected = uniform(rng, 0.0, 50.0), alpha = uniform(rng, 1.0, 100.0);
    const ThresholdPair t = thresholds_from_scores(p, expected, alpha);
    EXPECT_LE(t.tau1, t.tau2);
    std::vector<double> dup;
    for (double v : p) dup.insert(dup.end(), {v, v});
    const int ne = uniform_int(rng, 0, 30);
    const ThresholdPair a = thresholds_from_scores(p, ne, 50.0);
    const ThresholdPair b = thresholds_from_scores(dup, 2.0 * ne, 50.0);
    EXPECT_DOUBLE_EQ(a.tau1, b.tau1);
    EXPECT_DOUBLE_EQ(a.tau2, b.tau2);
  }
}

TEST(Thresholds, OracleSuite) {
  const OracleResult r = threshold_oracle_suite(1000, 3);
  EXPECT_EQ(r.mismatches, 0);
}

TEST(Thresholds, AlphaUnitsAndStrictForm) {
  EXPECT_DOUBLE_EQ(normalize_alpha(0.6), 60.0);
  EXPECT_DOUBLE_EQ(normalize_alpha(60.0), 60.0);
  EXPECT_DOUBLE_EQ(normalize_alpha(1.0), 100.0);
  EXPECT_THROW(normalize_alpha(0.0), ConfigError);
  EXPECT_THROW(normalize_alpha(120.0), ConfigError);
  const Thresholds th = strict_thresholds({0.4, 0.2}, {0.4, 0.7});
  EXPECT_LT(th.tau1[0], th.tau2[0]);
  EXPECT_DOUBLE_EQ(th.tau2[0], 0.4);
  EXPECT_DOUBLE_EQ(th.tau1[1], 0.2);
  EXPECT_EQ(tag_oracle(0.4, th.tau1[0], th.tau2[0]), PseudoTag::kReliable);
}

TEST(Thresholds, ReservoirBoundsMemory) {
  EpochStats st(2, 1, 1, 60.0);
  st.reservoir_cap = 100;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5000; ++i) st.add_score(1, i / 5000.0, rng);
  EXPECT_EQ(st.scores[1].size(), 100u);
  EXPECT_EQ(st.scores_seen[1], 5000u);
  EXPECT_TRUE(st.scores[0].empty());
  // Downsampled ranks still land near the full-list quantile.
  st.finalize();
  const ThresholdPair t = thresholds_from_scores(st.scores[1], 2500.0, 60.0, st.scores_seen[1]);
  EXPECT_NEAR(t.tau1, 0.5, 0.15);
}

TEST(Schedule, AdvanceStages) {
  const Schedule s{5, 20};
  const EpochDirective d0 = advance(s, 0, 100, 900, 8, 8);
  EXPECT_EQ(d0.stage, Stage::kBurnIn);
  EXPECT_TRUE(d0.labeled_driven);
  EXPECT_TRUE(d0.domain_loss);
  EXPECT_FALSE(d0.pseudo_losses);
  EXPECT_EQ(d0.steps, 13u);
  const EpochDirective d5 = advance(s, 5, 100, 900, 8, 8);
  EXPECT_EQ(d5.stage, Stage::kSsod);
  EXPECT_FALSE(d5.labeled_driven);
  EXPECT_FALSE(d5.domain_loss);
  EXPECT_TRUE(d5.pseudo_losses);
  EXPECT_EQ(d5.steps, 113u);
  EXPECT_EQ(advance(s, 4, 100, 900, 8, 8).stage, Stage::kBurnIn);
  EXPECT_THROW(advance(s, 20, 100, 900, 8, 8), UsageError);
  EXPECT_THROW(advance(s, -1, 100, 900, 8, 8), UsageError);
  EXPECT_THROW((Schedule{21, 20}.validate()), ConfigError);
  EXPECT_EQ(Schedule::default_burn_in(50), 5);
  EXPECT_EQ(Schedule::default_burn_in(3), 1);
  EXPECT_STREQ(stage_name(Stage::kSsod), "ssod");
}

TEST(DomainClassifier, ZeroWeightsGiveHalf) {
  const StackSpec spec = domain_classifier_spec(48);
  ParamSet<double> p;
  add_zero_params(spec, p);
  Tensor<double> f({48, 8, 8});
  f.data().setRandom();
  const auto out = domain_classifier_forward(p, spec, f);
  EXPECT_EQ(out.probs.shape(), (Shape{1, 8, 8}));
  for (Index i = 0; i < out.probs.size(); ++i) EXPECT_DOUBLE_EQ(out.probs[i], 0.5);
  std::vector<Tensor<double>> maps{out.probs, out.probs};
  const std::vector<int> doms{0, 1};
  EXPECT_DOUBLE_EQ(domain_accuracy<double>(maps, doms), 0.5);
}

TEST(EpochLog, RowsCarryCounts) {
  EpochStats st(2, 4, 8, 60.0);
  st.epoch = 7;
  const std::vector<GroundTruth> one{{1, Box::from_center(5, 5, 4, 4)}};
  st.add_labels(one);
  st.add_labels(one);
  const auto rows = threshold_log_rows(st, Thresholds::uniform(2, 0.1, 0.6), {true, false});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].at("epoch").get<int>(), 7);
  EXPECT_DOUBLE_EQ(rows[1].at("n_c").get<double>(), 4.0);
  EXPECT_TRUE(rows[0].at("fallback").get<bool>());
  EXPECT_DOUBLE_EQ(rows[0].at("tau2").get<double>(), 0.6);
}
