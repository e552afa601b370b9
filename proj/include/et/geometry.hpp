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
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace et {

/// Axis-aligned box in image pixels, stored in center form. Width and height
/// are strictly positive; the factories throw DataError otherwise.
class Box {
 public:
  Box() = default;

  static Box from_center(double cx, double cy, double w, double h);
  static Box from_corners(double x1, double y1, double x2, double y2);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double x1() const { return cx_ - 0.5 * w_; }
  double y1() const { return cy_ - 0.5 * h_; }
  double x2() const { return cx_ + 0.5 * w_; }
  double y2() const { return cy_ + 0.5 * h_; }
  double area() const { return w_ * h_; }

  Box translated(double dx, double dy) const { return Box(cx_ + dx, cy_ + dy, w_, h_); }
  Eigen::Vector4d as_vector() const { return {cx_, cy_, w_, h_}; }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  Box(double cx, double cy, double w, double h) : cx_(cx), cy_(cy), w_(w), h_(h) {}

  double cx_ = 0.5;
  double cy_ = 0.5;
  double w_ = 1.0;
  double h_ = 1.0;
};

struct Detection {
  Box box;
  int class_id = 0;
  double cls_score = 0.0;
  double obj_score = 0.0;

  /// Confidence used for ranking: objectness times classification score.
  double score() const { return obj_score * cls_score; }
};

double iou(const Box& a, const Box& b);

namespace detail {

template <typename T>
T tmin(const T& a, const T& b) {
  return b < a ? b : a;
}
template <typename T>
T tmax(const T& a, const T& b) {
  return a < b ? b : a;
}

// Complete IoU over center-form inputs. Generic so the same expression serves
// plain evaluation and forward-mode differentiation (Eigen::AutoDiffScalar).
template <typename T>
T ciou_generic(const T& pcx, const T& pcy, const T& pw, const T& ph, const T& gcx, const T& gcy,
               const T& gw, const T& gh) {
  using std::atan2;
  constexpr double kEps = 1e-9;
  const T px1 = pcx - 0.5 * pw, px2 = pcx + 0.5 * pw;
  const T py1 = pcy - 0.5 * ph, py2 = pcy + 0.5 * ph;
  const T gx1 = gcx - 0.5 * gw, gx2 = gcx + 0.5 * gw;
  const T gy1 = gcy - 0.5 * gh, gy2 = gcy + 0.5 * gh;

  const T zero(0.0);
  const T iw = tmax<T>(tmin<T>(px2, gx2) - tmax<T>(px1, gx1), zero);
  const T ih = tmax<T>(tmin<T>(py2, gy2) - tmax<T>(py1, gy1), zero);
  const T inter = iw * ih;
  const T uni = pw * ph + gw * gh - inter;
  const T overlap = inter / uni;

  const T cw = tmax<T>(px2, gx2) - tmin<T>(px1, gx1);
  const T ch = tmax<T>(py2, gy2) - tmin<T>(py1, gy1);
  const T diag2 = cw * cw + ch * ch + kEps;
  const T dx = pcx - gcx, dy = pcy - gcy;
  const T rho2 = dx * dx + dy * dy;

  const T dang = atan2(gw, gh) - atan2(pw, ph);
  const T v = (4.0 / (std::numbers::pi * std::numbers::pi)) * dang * dang;
  const T alpha = v / (v - overlap + 1.0 + kEps);
  return overlap - (rho2 / diag2 + alpha * v);
}

}  // namespace detail

/// Complete IoU: IoU minus normalized center distance minus the weighted
/// aspect-ratio consistency term. Symmetric and never above iou(pred, gt).
double ciou(const Box& pred, const Box& gt);

struct CiouWithGrad {
  double value = 0.0;
  Eigen::Vector4d d_pred = Eigen::Vector4d::Zero();  // d ciou / d (cx, cy, w, h) of pred
};

CiouWithGrad ciou_with_grad(const Box& pred, const Box& gt);

struct NmsConfig {
  double score_thresh = 0.01;
  double iou_thresh = 0.65;
};

/// Class-wise greedy NMS ranked by Detection::score(). Returns indices into
/// `dets` in score-descending order (ties: lower index first).
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double score_thresh,
                                     double iou_thresh);

std::vector<Detection> nms(std::span<const Detection> dets, double score_thresh, double iou_thresh);

inline std::vector<Detection> nms(std::span<const Detection> dets, const NmsConfig& cfg) {
  return nms(dets, cfg.score_thresh, cfg.iou_thresh);
}

}  // namespace et
