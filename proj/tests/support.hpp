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

// Shared fixtures and independent reference implementations for the unit
// tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "et/detector.hpp"
#include "et/eval.hpp"
#include "et/geometry.hpp"
#include "et/losses.hpp"
#include "et/pla.hpp"

namespace et::testing {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Box random_box(std::mt19937_64& rng, double extent = 64.0, double min_side = 2.0, double max_side = 24.0) {
  const double w = uniform(rng, min_side, max_side);
  const double h = uniform(rng, min_side, max_side);
  return Box::from_center(uniform(rng, 0.5 * w, extent - 0.5 * w), uniform(rng, 0.5 * h, extent - 0.5 * h), w, h);
}

/// Detections clustered around a few centers so suppression actually happens.
inline std::vector<Detection> random_detections(std::mt19937_64& rng, int n, int num_classes) {
  std::vector<Box> seeds;
  for (int i = 0; i < 4; ++i) seeds.push_back(random_box(rng));
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) {
    const Box& s = seeds[uniform_int(rng, 0, 3)];
    Detection d;
    d.box = Box::from_center(s.cx() + uniform(rng, -4, 4), s.cy() + uniform(rng, -4, 4),
                             s.w() * uniform(rng, 0.7, 1.3), s.h() * uniform(rng, 0.7, 1.3));
    d.class_id = uniform_int(rng, 0, num_classes - 1);
    // Quantized scores make exact ties common.
    d.cls_score = std::round(uniform(rng, 0.0, 1.0) * 20.0) / 20.0;
    d.obj_score = std::round(uniform(rng, 0.0, 1.0) * 20.0) / 20.0;
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference implementations

/// Intersection over union straight from corner coordinates.
inline double iou_oracle(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  return inter / ((a.x2() - a.x1()) * (a.y2() - a.y1()) + (b.x2() - b.x1()) * (b.y2() - b.y1()) - inter);
}

/// Textbook CIoU from corner form.
inline double ciou_oracle(const Box& p, const Box& g) {
  const double i = iou_oracle(p, g);
  const double ex = std::max(p.x2(), g.x2()) - std::min(p.x1(), g.x1());
  const double ey = std::max(p.y2(), g.y2()) - std::min(p.y1(), g.y1());
  const double c2 = ex * ex + ey * ey + 1e-9;
  const double rho2 = std::pow(p.cx() - g.cx(), 2) + std::pow(p.cy() - g.cy(), 2);
  const double v = 4.0 / (M_PI * M_PI) * std::pow(std::atan(g.w() / g.h()) - std::atan(p.w() / p.h()), 2);
  const double alpha = v / (1.0 - i + v + 1e-9);
  return i - rho2 / c2 - alpha * v;
}

/// Quadratic NMS by repeated removal: take the best remaining candidate (lowest
/// index on ties), keep it, discard every same-class box overlapping it.
inline std::vector<std::size_t> nms_oracle(std::span<const Detection> dets, double score_thresh, double iou_thresh) {
  std::vector<bool> alive(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) alive[i] = dets[i].obj_score * dets[i].cls_score >= score_thresh;
  std::vector<std::size_t> kept;
  while (true) {
    std::size_t best = dets.size();
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i]) continue;
      if (best == dets.size() || dets[i].score() > dets[best].score()) best = i;
    }
    if (best == dets.size()) break;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (alive[j] && dets[j].class_id == dets[best].class_id && iou_oracle(dets[j].box, dets[best].box) > iou_thresh) {
        alive[j] = false;
      }
    }
  }
  return kept;
}

/// Tag by direct reading of the three score bands.
inline PseudoTag tag_oracle(double p, double t1, double t2) {
  const bool low = p <= t1;
  const bool high = p >= t2;
  const bool mid = p > t1 && p < t2;
  if (low + high + mid != 1) return static_cast<PseudoTag>(-1);
  return high ? PseudoTag::kReliable : (mid ? PseudoTag::kUncertain : PseudoTag::kBackground);
}

/// Rank thresholds with exact integer ceilings: the expected count is
/// gt * n_u / n_l and the reliable share alpha / 100 of it.
struct RankOracle {
  double tau1, tau2;
  std::size_t rank1, rank2;
};
inline RankOracle thresholds_oracle(std::vector<double> scores, std::int64_t gt, std::int64_t n_u, std::int64_t n_l,
                                    std::int64_t alpha_percent) {
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const auto n = static_cast<std::int64_t>(scores.size());
  auto ceil_div = [](std::int64_t a, std::int64_t b) { return (a + b - 1) / b; };
  std::int64_t r1 = ceil_div(gt * n_u, n_l);
  std::int64_t r2 = ceil_div(alpha_percent * gt * n_u, 100 * n_l);
  r1 = std::clamp<std::int64_t>(r1, 1, n);
  r2 = std::clamp<std::int64_t>(r2, 1, n);
  return {scores[r1 - 1], scores[r2 - 1], static_cast<std::size_t>(r1), static_cast<std::size_t>(r2)};
}

/// Average precision by walking every recall level i / G and taking the best
/// precision among cutoffs reaching at least that recall.
inline double ap_oracle(const std::vector<bool>& tp_in_rank_order, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::size_t n = tp_in_rank_order.size();
  std::vector<std::size_t> tp_at(n);
  std::size_t running = 0;
  for (std::size_t k = 0; k < n; ++k) tp_at[k] = running += tp_in_rank_order[k];
  double total = 0.0;
  for (std::size_t level = 1; level <= num_gt; ++level) {
    double best = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (tp_at[k] >= level) best = std::max(best, static_cast<double>(tp_at[k]) / static_cast<double>(k + 1));
    }
    total += best;
  }
  return total / static_cast<double>(num_gt);
}

/// Greedy matching by descending score (ties: image order, then detection
/// order), each detection taking its best still-free same-class GT.
inline std::vector<bool> match_oracle(std::span<const EvalImage> images, int cls, double iou_t, std::size_t* num_gt) {
  struct Item {
    double score;
    std::size_t order, image, det;
  };
  std::vector<Item> items;
  std::size_t order = 0, gts = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t d = 0; d < images[i].detections.size(); ++d) {
      if (images[i].detections[d].class_id == cls) items.push_back({images[i].detections[d].score(), order, i, d});
      ++order;
    }
    for (const auto& g : images[i].gts) gts += g.class_id == cls;
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.score != b.score ? a.score > b.score : a.order < b.order;
  });
  std::vector<std::vector<bool>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].gts.size(), false);
  std::vector<bool> tp;
  for (const auto& it : items) {
    const auto& g = images[it.image].gts;
    std::size_t pick = g.size();
    double best = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g[j].class_id != cls || used[it.image][j]) continue;
      const double v = iou_oracle(images[it.image].detections[it.det].box, g[j].box);
      if (v >= iou_t && (pick == g.size() || v > best)) {
        pick = j;
        best = v;
      }
    }
    if (pick < g.size()) used[it.image][pick] = true;
    tp.push_back(pick < g.size());
  }
  if (num_gt) *num_gt = gts;
  return tp;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Relative error with a floor on the denominator so that entries whose true
/// gradient is essentially zero are judged on absolute error.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Max relative error of `grad` against central differences of `f` over the
/// given coordinates of `x` (all when `coords` is empty).
inline double fd_check(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                       const Eigen::VectorXd& grad, const std::vector<Eigen::Index>& coords = {}, double h = 1e-5) {
  double worst = 0.0;
  auto visit = [&](Eigen::Index i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    worst = std::max(worst, rel_error(grad[i], (fp - fm) / (2.0 * h)));
  };
  if (coords.empty()) {
    for (Eigen::Index i = 0; i < x.size(); ++i) visit(i);
  } else {
    for (Eigen::Index i : coords) visit(i);
  }
  return worst;
}

/// fd_check for piecewise-smooth functions. `pattern` returns the sign of
/// every rectifier input; a coordinate is differenced with the largest step in
/// {h, h/100, h/10^4} that leaves the pattern unchanged on both sides, and is
/// skipped (counted in `skipped`) when none does.
inline double fd_check_guarded(const std::function<double(const Eigen::VectorXd&)>& f,
                               const std::function<std::vector<bool>(const Eigen::VectorXd&)>& pattern,
                               Eigen::VectorXd x, const Eigen::VectorXd& grad, const std::vector<Eigen::Index>& coords,
                               int* skipped, double h = 1e-5) {
  const std::vector<bool> base = pattern(x);
  double worst = 0.0;
  auto visit = [&](Eigen::Index i) {
    const double x0 = x[i];
    for (double step = h; step >= h * 1e-4; step *= 1e-2) {
      x[i] = x0 + step;
      const bool up_ok = pattern(x) == base;
      const double fp = f(x);
      x[i] = x0 - step;
      const bool down_ok = pattern(x) == base;
      const double fm = f(x);
      x[i] = x0;
      if (up_ok && down_ok) {
        worst = std::max(worst, rel_error(grad[i], (fp - fm) / (2.0 * step)));
        return;
      }
    }
    if (skipped) ++*skipped;
  };
  if (coords.empty()) {
    for (Eigen::Index i = 0; i < x.size(); ++i) visit(i);
  } else {
    for (Eigen::Index i : coords) visit(i);
  }
  return worst;
}

/// Up to `k` distinct coordinates out of `n`, always including the nonzero
/// entries of `grad` when there are few of them.
inline std::vector<Eigen::Index> sample_coords(std::mt19937_64& rng, const Eigen::VectorXd& grad, std::size_t k) {
  std::vector<Eigen::Index> nonzero, all(static_cast<std::size_t>(grad.size()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    if (grad[i] != 0.0) nonzero.push_back(i);
  }
  std::shuffle(nonzero.begin(), nonzero.end(), rng);
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<Eigen::Index> out(nonzero.begin(), nonzero.begin() + std::min(k, nonzero.size()));
  for (std::size_t i = 0; i < all.size() && out.size() < 2 * k; ++i) {
    if (std::find(out.begin(), out.end(), all[i]) == out.end()) out.push_back(all[i]);
  }
  return out;
}

/// Random prediction grid with moderate logits so no probability clamp engages.
inline PredictionGrid<double> random_grid(std::mt19937_64& rng, const DetectorArch& arch, double spread = 2.0) {
  PredictionGrid<double> g;
  const auto dims = arch.grid_dims();
  for (std::size_t s = 0; s < dims.size(); ++s) {
    const int na = static_cast<int>(arch.anchors.scales[s].priors.size());
    ScaleGrid<double> sg(na, dims[s].height, dims[s].width, arch.channels_per_anchor());
    for (Eigen::Index i = 0; i < sg.data.size(); ++i) sg.data[i] = uniform(rng, -spread, spread);
    g.scales.push_back(std::move(sg));
  }
  return g;
}

inline std::vector<GroundTruth> random_gts(std::mt19937_64& rng, int n, int num_classes, int extent = 64) {
  std::vector<GroundTruth> out;
  for (int i = 0; i < n; ++i) out.push_back({uniform_int(rng, 0, num_classes - 1), random_box(rng, extent, 6.0, 28.0)});
  return out;
}

/// Flattens / restores the raw values of a batch of prediction grids.
inline Eigen::VectorXd flatten(const std::vector<PredictionGrid<double>>& grids) {
  std::vector<double> v;
  for (const auto& g : grids)
    for (const auto& s : g.scales) v.insert(v.end(), s.data.data(), s.data.data() + s.data.size());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void unflatten(const Eigen::VectorXd& x, std::vector<PredictionGrid<double>>& grids) {
  Eigen::Index o = 0;
  for (auto& g : grids)
    for (auto& s : g.scales) {
      s.data = x.segment(o, s.data.size());
      o += s.data.size();
    }
}

}  // namespace et::testing
