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

#include "et/geometry.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <unsupported/Eigen/AutoDiff>

#include "et/errors.hpp"

namespace et {

Box Box::from_center(double cx, double cy, double w, double h) {
  if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    std::ostringstream os;
    os << "invalid box (cx=" << cx << ", cy=" << cy << ", w=" << w << ", h=" << h << ")";
    throw DataError(os.str());
  }
  return Box(cx, cy, w, h);
}

Box Box::from_corners(double x1, double y1, double x2, double y2) {
  return from_center(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()), 0.0);
  const double ih = std::max(std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()), 0.0);
  const double inter = iw * ih;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double ciou(const Box& pred, const Box& gt) {
  return detail::ciou_generic<double>(pred.cx(), pred.cy(), pred.w(), pred.h(), gt.cx(), gt.cy(),
                                      gt.w(), gt.h());
}

CiouWithGrad ciou_with_grad(const Box& pred, const Box& gt) {
  using AD = Eigen::AutoDiffScalar<Eigen::Vector4d>;
  const AD pcx(pred.cx(), 4, 0), pcy(pred.cy(), 4, 1), pw(pred.w(), 4, 2), ph(pred.h(), 4, 3);
  const AD r = detail::ciou_generic<AD>(pcx, pcy, pw, ph, AD(gt.cx()), AD(gt.cy()), AD(gt.w()),
                                        AD(gt.h()));
  return {r.value(), r.derivatives()};
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double score_thresh,
                                     double iou_thresh) {
  std::vector<std::size_t> order;
  order.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score() >= score_thresh) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score() > dets[b].score();
  });

  std::map<int, std::vector<std::size_t>> kept_by_class;
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    auto& same = kept_by_class[dets[idx].class_id];
    const bool suppressed = std::any_of(same.begin(), same.end(), [&](std::size_t k) {
      return iou(dets[idx].box, dets[k].box) > iou_thresh;
    });
    if (suppressed) continue;
    same.push_back(idx);
    kept.push_back(idx);
  }
  return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double score_thresh, double iou_thresh) {
  std::vector<Detection> out;
  for (std::size_t idx : nms_indices(dets, score_thresh, iou_thresh)) out.push_back(dets[idx]);
  return out;
}

}  // namespace et
