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

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "et/detector.hpp"
#include "et/geometry.hpp"
#include "et/tensor.hpp"

namespace et {

using Image = Tensor<float>;  // [3, H, W], values in [0, 1]

inline constexpr float kFillValue = 114.0f / 255.0f;
inline constexpr double kMinBoxArea = 4.0;

Image make_image(int height, int width, float value = kFillValue);
inline int image_height(const Image& img) { return static_cast<int>(img.dim(1)); }
inline int image_width(const Image& img) { return static_cast<int>(img.dim(2)); }

struct LabeledImage {
  Image pixels;
  std::vector<GroundTruth> labels;
  std::vector<int> provenance;  // source image ids
};

/// Axis-aligned map x' = sx * x + tx, y' = sy * y + ty (pixel-edge coordinates).
struct AffineMap {
  double sx = 1.0, sy = 1.0, tx = 0.0, ty = 0.0;

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return {sx * p.x() + tx, sy * p.y() + ty}; }
  Eigen::Vector2d invert(const Eigen::Vector2d& q) const { return {(q.x() - tx) / sx, (q.y() - ty) / sy}; }
  /// `next` applied after this map.
  AffineMap then(const AffineMap& next) const {
    return {next.sx * sx, next.sy * sy, next.sx * tx + next.tx, next.sy * ty + next.ty};
  }
  static AffineMap hflip(int width) { return {-1.0, 1.0, static_cast<double>(width), 0.0}; }
  static AffineMap scale_about(double s, double cx, double cy) {
    return {s, s, cx - s * cx, cy - s * cy};
  }
};

/// Maps a box, clips it to [0, width] x [0, height] and drops it when the
/// clipped area falls below `min_area`.
std::optional<Box> transform_box(const Box& box, const AffineMap& map, int width, int height,
                                 double min_area = kMinBoxArea);

std::vector<GroundTruth> transform_labels(std::span<const GroundTruth> labels, const AffineMap& map,
                                          int width, int height, double min_area = kMinBoxArea);

/// Bilinear resampling of `src` through `map` into `dst` restricted to the
/// pixel rectangle [x0, x1) x [y0, y1); samples outside `src` get `fill`.
void resample_into(const Image& src, const AffineMap& map, Image& dst, int x0, int y0, int x1, int y1,
                   float fill = kFillValue);

Image resample(const Image& src, const AffineMap& map, int out_h, int out_w, float fill = kFillValue);

// ---------------------------------------------------------------------------
// Mosaic

struct MosaicParams {
  int center_x = 0;
  int center_y = 0;
  std::array<double, 4> scales{1.0, 1.0, 1.0, 1.0};
};

/// Center uniform over the middle half of the canvas; per-tile scales uniform
/// in [scale_min, scale_max].
MosaicParams sample_mosaic_params(int out_size, std::mt19937_64& rng, double scale_min = 0.5,
                                  double scale_max = 1.0);

/// Canvas offset and effective scale of each tile. Tile 0 sits up-left of the
/// center, 1 up-right, 2 down-left, 3 down-right; each touches the center.
struct MosaicTile {
  AffineMap map;           // source pixel coords -> canvas coords
  int x0, y0, x1, y1;      // visible canvas rectangle
};

std::array<MosaicTile, 4> mosaic_layout(std::span<const LabeledImage> imgs, int out_size,
                                        const MosaicParams& params);

/// Throws UsageError unless exactly four images are given.
LabeledImage mosaic(std::span<const LabeledImage> imgs, int out_size, const MosaicParams& params,
                    double min_area = kMinBoxArea);

// ---------------------------------------------------------------------------
// Pipelines

struct CutoutPattern {
  double prob = 0.7;
  double scale_min = 0.05, scale_max = 0.2;  // area fraction
  double ratio_min = 0.3, ratio_max = 3.3;   // aspect ratio h / w
};

struct AugmentConfig {
  int canvas = 64;
  double min_area = kMinBoxArea;
  double mosaic_scale_min = 0.5;
  double mosaic_scale_max = 1.0;

  double flip_prob = 0.5;
  double multiscale_prob = 1.0;
  double scale_min = 0.1;
  double scale_max = 1.9;

  double hsv_prob = 1.0;
  double brightness = 0.4;
  double saturation = 0.7;
  double hue = 0.015;

  double gray_prob = 0.2;

  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  std::vector<CutoutPattern> cutouts{{0.7, 0.05, 0.2, 0.3, 3.3},
                                     {0.7, 0.02, 0.2, 0.1, 6.0},
                                     {0.7, 0.02, 0.2, 0.05, 8.0}};

  /// Throws ConfigError on out-of-range probabilities or ranges.
  void validate() const;
};

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Mosaic of pool[index] with three partners drawn uniformly from the pool.
LabeledImage weak_pipeline(std::span<const LabeledImage> pool, std::size_t index,
                           const AugmentConfig& cfg, std::uint64_t seed);

/// Which strong stages fired and with what parameters.
struct StrongTrace {
  AffineMap geometry;  // weak-view coords -> strong-view coords
  bool flipped = false;
  double scale = 1.0;
  bool hsv = false;
  bool gray = false;
  bool blurred = false;
  double blur_sigma = 0.0;
  std::vector<std::array<int, 4>> erased;  // x0, y0, x1, y1 of each cutout
};

/// Strong stages after the shared mosaic: flip, multi-scale about the canvas
/// center, HSV jitter, grayscale, blur, cutouts. Labels follow the geometry.
LabeledImage strong_from_base(const LabeledImage& base, const AugmentConfig& cfg, std::mt19937_64& rng,
                              StrongTrace* trace = nullptr);

/// Mosaic (same composition as weak_pipeline with the same seed) + strong stages.
LabeledImage strong_pipeline(std::span<const LabeledImage> pool, std::size_t index,
                             const AugmentConfig& cfg, std::uint64_t seed, StrongTrace* trace = nullptr);

// Individual photometric stages (exposed for testing).
void hsv_jitter(Image& img, double brightness_factor, double saturation_factor, double hue_shift);
void to_grayscale(Image& img);
void gaussian_blur(Image& img, double sigma);
/// Returns the erased rectangle, or nothing when no admissible rectangle was found.
std::optional<std::array<int, 4>> cutout(Image& img, const CutoutPattern& pattern, std::mt19937_64& rng);

}  // namespace et
