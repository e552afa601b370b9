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

#include "et/epoch_adaptor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace et {

const char* stage_name(Stage stage) { return stage == Stage::kBurnIn ? "burn_in" : "ssod"; }

void Schedule::validate() const {
  if (total_epochs < 1) throw ConfigError("total_epochs must be at least 1");
  if (burn_in_epochs < 0 || burn_in_epochs > total_epochs) {
    throw ConfigError("burn_in_epochs must lie in [0, total_epochs]");
  }
}

int Schedule::default_burn_in(int total_epochs) {
  return std::max(1, static_cast<int>(std::lround(0.1 * total_epochs)));
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Smallest integer rank >= v, tolerant to products such as 0.6 * 5 that land
// a hair above an integer.
std::size_t ceil_rank(double v) {
  if (!(v > 1.0)) return 1;
  return static_cast<std::size_t>(std::ceil(v - 1e-9));
}

}  // namespace

EpochDirective advance(const Schedule& schedule, int epoch, std::size_t num_labeled,
                       std::size_t num_unlabeled, std::size_t batch_labeled,
                       std::size_t batch_unlabeled) {
  schedule.validate();
  if (epoch < 0 || epoch >= schedule.total_epochs) {
    throw UsageError("epoch " + std::to_string(epoch) + " outside the schedule");
  }
  if (batch_labeled == 0 || batch_unlabeled == 0) throw ConfigError("batch sizes must be positive");
  EpochDirective d;
  if (epoch < schedule.burn_in_epochs) {
    d.stage = Stage::kBurnIn;
    d.labeled_driven = true;
    d.domain_loss = true;
    d.pseudo_losses = false;
    d.steps = ceil_div(num_labeled, batch_labeled);
  } else {
    d.stage = Stage::kSsod;
    d.labeled_driven = false;
    d.domain_loss = false;
    d.pseudo_losses = true;
    d.steps = ceil_div(num_unlabeled, batch_unlabeled);
  }
  return d;
}

std::vector<double> count_gt(std::span<const std::vector<GroundTruth>> labels, int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (const auto& list : labels) {
    for (const auto& gt : list) counts.at(static_cast<std::size_t>(gt.class_id)) += 1.0;
  }
  return counts;
}

EpochStats::EpochStats(int num_classes, std::size_t n_l, std::size_t n_u, double alpha)
    : num_labeled(n_l),
      num_unlabeled(n_u),
      alpha_percent(normalize_alpha(alpha)),
      gt_counts(static_cast<std::size_t>(num_classes), 0.0),
      scores(static_cast<std::size_t>(num_classes)),
      scores_seen(static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw ConfigError("need at least one class");
  if (n_l < 1 || n_u < 1) throw ConfigError("labeled and unlabeled sets must be nonempty");
}

void EpochStats::add_labels(std::span<const GroundTruth> labels) {
  for (const auto& gt : labels) gt_counts.at(static_cast<std::size_t>(gt.class_id)) += 1.0;
  ++labeled_views;
}

void EpochStats::add_score(int class_id, double score, std::mt19937_64& rng) {
  auto& list = scores.at(static_cast<std::size_t>(class_id));
  const std::size_t seen = ++scores_seen[static_cast<std::size_t>(class_id)];
  if (list.size() < reservoir_cap) {
    list.push_back(score);
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, seen - 1);
  const std::size_t j = pick(rng);
  if (j < reservoir_cap) list[j] = score;
}

double EpochStats::gt_per_pass(int class_id) const {
  if (labeled_views == 0) return 0.0;
  return gt_counts.at(static_cast<std::size_t>(class_id)) * static_cast<double>(num_labeled) /
         static_cast<double>(labeled_views);
}

void EpochStats::finalize() {
  for (auto& list : scores) std::sort(list.begin(), list.end(), std::greater<>());
}

double normalize_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 100.0)) throw ConfigError("alpha must lie in (0, 1] or (1, 100]");
  return alpha <= 1.0 ? alpha * 100.0 : alpha;
}

ThresholdPair thresholds_from_scores(std::span<const double> descending, double expected,
                                     double alpha_percent, std::size_t seen) {
  if (descending.empty()) return {kBootstrapTau1, kBootstrapTau2, true};
  const std::size_t n = descending.size();
  const double keep = seen > n ? static_cast<double>(n) / static_cast<double>(seen) : 1.0;
  const double x = expected * keep;
  const std::size_t r1 = std::min(ceil_rank(x), n);
  const std::size_t r2 = std::min(ceil_rank(alpha_percent / 100.0 * x), n);
  return {descending[r1 - 1], descending[r2 - 1], false};
}

ThresholdPair compute_thresholds(const EpochStats& stats, int class_id) {
  const double expected = stats.gt_per_pass(class_id) * static_cast<double>(stats.num_unlabeled) /
                          static_cast<double>(stats.num_labeled);
  const auto c = static_cast<std::size_t>(class_id);
  return thresholds_from_scores(stats.scores.at(c), expected, stats.alpha_percent,
                                stats.scores_seen.at(c));
}

Thresholds strict_thresholds(std::vector<double> tau1, std::vector<double> tau2) {
  for (std::size_t c = 0; c < tau1.size(); ++c) {
    tau2[c] = std::clamp(tau2[c], std::nextafter(0.0, 1.0), 1.0);
    if (!(tau1[c] < tau2[c])) tau1[c] = std::nextafter(tau2[c], 0.0);
    tau1[c] = std::max(tau1[c], 0.0);
  }
  Thresholds th{std::move(tau1), std::move(tau2)};
  th.validate();
  return th;
}

Thresholds compute_all_thresholds(const EpochStats& stats) {
  std::vector<double> t1, t2;
  for (int c = 0; c < stats.num_classes(); ++c) {
    const ThresholdPair p = compute_thresholds(stats, c);
    t1.push_back(p.tau1);
    t2.push_back(p.tau2);
  }
  return strict_thresholds(std::move(t1), std::move(t2));
}

std::vector<nlohmann::json> threshold_log_rows(const EpochStats& stats, const Thresholds& th,
                                               const std::vector<bool>& fallback) {
  std::vector<nlohmann::json> rows;
  for (int c = 0; c < stats.num_classes(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    rows.push_back({{"epoch", stats.epoch},
                    {"class", c},
                    {"n_c", stats.gt_per_pass(c)},
                    {"tau1", th.tau1.at(i)},
                    {"tau2", th.tau2.at(i)},
                    {"list_length", stats.scores.at(i).size()},
                    {"scores_seen", stats.scores_seen.at(i)},
                    {"fallback", i < fallback.size() ? fallback[i] : false}});
  }
  return rows;
}

StackSpec domain_classifier_spec(int feature_channels, int hidden) {
  StackSpec s;
  s.name = "dc";
  s.layers.push_back({feature_channels, hidden, 1, 1, Activation::kLeakyRelu});
  s.layers.push_back({hidden, 1, 1, 1, Activation::kNone});
  return s;
}

}  // namespace et
