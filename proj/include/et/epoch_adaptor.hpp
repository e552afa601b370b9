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
#include <random>
#include <span>
#include <vector>

#include "et/detector.hpp"
#include "et/losses.hpp"
#include "et/netcore.hpp"
#include "et/tensor.hpp"

namespace et {

enum class Stage { kBurnIn, kSsod };

const char* stage_name(Stage stage);

struct Schedule {
  int burn_in_epochs = 1;
  int total_epochs = 10;

  /// Throws ConfigError unless 0 <= burn_in_epochs <= total_epochs and total_epochs >= 1.
  void validate() const;
  /// Warm-up length when none is configured: 10% of the run, at least one epoch.
  static int default_burn_in(int total_epochs);
};

/// What one epoch runs.
struct EpochDirective {
  Stage stage = Stage::kBurnIn;
  bool labeled_driven = true;  // epoch length from the labeled set, else from the unlabeled set
  bool domain_loss = true;
  bool pseudo_losses = false;
  std::size_t steps = 0;
};

/// Throws UsageError when epoch is outside [0, total_epochs).
EpochDirective advance(const Schedule& schedule, int epoch, std::size_t num_labeled,
                       std::size_t num_unlabeled, std::size_t batch_labeled,
                       std::size_t batch_unlabeled);

/// Per-class label totals over a set of (already augmented) label lists.
std::vector<double> count_gt(std::span<const std::vector<GroundTruth>> labels, int num_classes);

/// Per-epoch accumulator for the dynamic thresholds.
struct EpochStats {
  int epoch = 0;
  std::size_t num_labeled = 1;    // N_l
  std::size_t num_unlabeled = 1;  // N_u
  double alpha_percent = 60.0;    // reliable ratio
  std::size_t reservoir_cap = 50000;

  std::vector<double> gt_counts;          // raw totals over labeled views drawn this epoch
  std::size_t labeled_views = 0;          // labeled views drawn this epoch
  std::vector<std::vector<double>> scores;  // per class; sorted descending after finalize()
  std::vector<std::size_t> scores_seen;

  EpochStats() = default;
  EpochStats(int num_classes, std::size_t n_l, std::size_t n_u, double alpha);

  int num_classes() const { return static_cast<int>(gt_counts.size()); }
  void add_labels(std::span<const GroundTruth> labels);
  /// Reservoir-sampled insertion (uniform over everything seen for the class).
  void add_score(int class_id, double score, std::mt19937_64& rng);
  /// Labels per pass over the labeled set: totals scaled to N_l views.
  double gt_per_pass(int class_id) const;
  /// Sorts every score list descending.
  void finalize();
};

/// Accepts either a fraction in (0, 1] or a percentage in (1, 100]; returns a percentage.
double normalize_alpha(double alpha);

struct ThresholdPair {
  double tau1 = 0.1;
  double tau2 = 0.6;
  bool fallback = false;
};

inline constexpr double kBootstrapTau1 = 0.1;
inline constexpr double kBootstrapTau2 = 0.6;

/// Rank-based thresholds on a descending score list. `expected` is the
/// expected number of objects per unlabeled pass (n_c * N_u / N_l);
/// `seen` >= list size rescales ranks when the list was downsampled.
ThresholdPair thresholds_from_scores(std::span<const double> descending, double expected,
                                     double alpha_percent, std::size_t seen = 0);

ThresholdPair compute_thresholds(const EpochStats& stats, int class_id);

/// All classes; tau1 is nudged just below tau2 where the ranks coincide so
/// that the uncertain band is empty rather than ill-formed.
Thresholds compute_all_thresholds(const EpochStats& stats);

/// Strict form used by the assigner: tau1 < tau2 everywhere.
Thresholds strict_thresholds(std::vector<double> tau1, std::vector<double> tau2);

/// One JSON line per class.
std::vector<nlohmann::json> threshold_log_rows(const EpochStats& stats, const Thresholds& th,
                                               const std::vector<bool>& fallback);

// ---------------------------------------------------------------------------
// Domain classifier

/// Two 1x1 convs on the shared feature map: features -> hidden (leaky) -> 1 logit.
StackSpec domain_classifier_spec(int feature_channels, int hidden = 16);

template <typename Scalar>
struct DomainForward {
  StackRecord<Scalar> record;
  Tensor<Scalar> logits;  // [1, H, W]
  Tensor<Scalar> probs;   // [1, H, W], probability of the unlabeled domain
};

template <typename Scalar>
DomainForward<Scalar> domain_classifier_forward(const ParamSet<Scalar>& params, const StackSpec& spec,
                                                const Tensor<Scalar>& features) {
  DomainForward<Scalar> out;
  out.record = forward(params, spec, grl_forward(features));
  out.logits = out.record.output();
  out.probs = Tensor<Scalar>(out.logits.shape());
  for (Index i = 0; i < out.logits.size(); ++i) {
    out.probs[i] = Scalar(sigmoid(static_cast<double>(out.logits[i])));
  }
  return out;
}

/// Accumulates classifier gradients and returns the gradient reaching the
/// features, i.e. after the reversal layer (sign flipped, scaled by `lambda`).
template <typename Scalar>
Tensor<Scalar> domain_classifier_backward(DomainForward<Scalar>& fwd, const ParamSet<Scalar>& params,
                                          const StackSpec& spec, const Tensor<Scalar>& logit_grad,
                                          ParamSet<Scalar>& grads, double lambda) {
  std::vector<Tensor<Scalar>> up(spec.layers.size());
  up.back() = logit_grad;
  const Tensor<Scalar> din = backward_accumulate<Scalar>(fwd.record, params, spec, up, grads);
  return grl_backward(din, lambda);
}

/// Fraction of views whose mean domain probability lands on the right side of 0.5.
template <typename Scalar>
double domain_accuracy(std::span<const Tensor<Scalar>> prob_maps, std::span<const int> domains) {
  if (prob_maps.empty()) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < prob_maps.size(); ++i) {
    const double mean = static_cast<double>(prob_maps[i].data().mean());
    if ((mean > 0.5) == (domains[i] == 1)) ++right;
  }
  return static_cast<double>(right) / static_cast<double>(prob_maps.size());
}

}  // namespace et
