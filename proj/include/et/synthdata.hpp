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

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "et/augment.hpp"
#include "et/detector.hpp"

namespace et {

enum class ShapeKind { kCircle = 0, kSquare = 1, kTriangle = 2 };

inline constexpr int kNumShapeClasses = 3;
const char* shape_name(int class_id);

struct DatasetSpec {
  int num_images = 500;  // labeled + unlabeled
  int num_test = 200;
  int image_size = 64;
  int min_objects = 1;
  int max_objects = 4;
  int min_shape = 10;  // px
  int max_shape = 24;
  double labeled_fraction = 0.1;
  std::uint64_t seed = 0;
  double domain_hue_offset = 0.15;  // background hue shift of the unlabeled split

  /// Throws ConfigError on any out-of-range field.
  void validate() const;
  int num_labeled() const;
};

/// Pixel-center membership mask of one shape.
struct ShapeInstance {
  ShapeKind kind = ShapeKind::kCircle;
  double cx = 0, cy = 0, size = 0;
  Eigen::Vector3f color{1, 1, 1};

  bool contains(double px, double py) const;
  /// Tight bounds of the rendered mask on an image of the given size, or
  /// nothing if no pixel is covered.
  std::optional<Box> mask_bounds(int image_size) const;
};

struct RenderedImage {
  LabeledImage image;
  std::vector<ShapeInstance> shapes;
};

/// Textured background with hue in [0.55, 0.70] (+ hue_offset), then shapes.
RenderedImage render_image(const DatasetSpec& spec, double hue_offset, std::mt19937_64& rng);

struct ImageRecord {
  int id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  std::vector<GroundTruth> labels;
};

struct Annotations {
  std::vector<std::string> categories;  // index = category id
  std::vector<ImageRecord> images;
};

nlohmann::json to_coco(const Annotations& ann, bool with_annotations = true);
/// Throws DataError naming the offending record.
Annotations from_coco(const nlohmann::json& j, const std::string& what = "annotations");

void save_annotations(const Annotations& ann, const std::filesystem::path& path, bool with_annotations = true);
Annotations load_annotations(const std::filesystem::path& path);

void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Quantizes to 8 bits, matching what a write/read round trip yields.
void quantize_8bit(Image& img);

struct DatasetPaths {
  std::filesystem::path root;
  std::filesystem::path labeled() const { return root / "labeled.json"; }
  std::filesystem::path unlabeled() const { return root / "unlabeled.json"; }
  std::filesystem::path unlabeled_gt() const { return root / "unlabeled_gt.json"; }
  std::filesystem::path test() const { return root / "test.json"; }
  std::filesystem::path images() const { return root / "images"; }
};

struct GenerateSummary {
  int labeled = 0;
  int unlabeled = 0;
  int test = 0;
  std::vector<int> class_counts;
};

/// Writes images/ plus labeled.json, unlabeled.json (no annotations),
/// unlabeled_gt.json (held-back labels) and test.json. Test images alternate
/// between the two background domains.
GenerateSummary generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir);

/// Loads the pixels of every record; boxes come from the annotations.
std::vector<LabeledImage> load_images(const Annotations& ann, const std::filesystem::path& image_dir);

}  // namespace et
