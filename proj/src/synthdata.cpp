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

#include "et/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace et {

namespace fs = std::filesystem;

const char* shape_name(int class_id) {
  static const char* names[] = {"circle", "square", "triangle"};
  if (class_id < 0 || class_id >= kNumShapeClasses) throw DataError("unknown shape class");
  return names[class_id];
}

void DatasetSpec::validate() const {
  if (num_images < 10) throw ConfigError("num_images must be at least 10");
  if (num_test < 0) throw ConfigError("num_test must be nonnegative");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) throw ConfigError("labeled_fraction must lie in (0, 1]");
  if (image_size < 32) throw ConfigError("image_size must be at least 32");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("object count range invalid");
  if (min_shape < 4 || max_shape < min_shape || max_shape > image_size / 2) {
    throw ConfigError("shape size range invalid");
  }
  if (!(domain_hue_offset >= 0.0 && domain_hue_offset < 1.0)) throw ConfigError("domain hue offset must lie in [0, 1)");
}

int DatasetSpec::num_labeled() const {
  return std::max(1, static_cast<int>(std::lround(labeled_fraction * num_images)));
}

bool ShapeInstance::contains(double px, double py) const {
  const double r = size / 2.0;
  switch (kind) {
    case ShapeKind::kCircle:
      return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
    case ShapeKind::kSquare:
      return std::abs(px - cx) <= r && std::abs(py - cy) <= r;
    case ShapeKind::kTriangle: {
      const double depth = py - (cy - r);
      return depth >= 0.0 && depth <= size && std::abs(px - cx) <= depth / 2.0;
    }
  }
  return false;
}

std::optional<Box> ShapeInstance::mask_bounds(int image_size) const {
  int x1 = image_size, y1 = image_size, x2 = -1, y2 = -1;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      if (!contains(x + 0.5, y + 0.5)) continue;
      x1 = std::min(x1, x);
      y1 = std::min(y1, y);
      x2 = std::max(x2, x);
      y2 = std::max(y2, y);
    }
  }
  if (x2 < 0) return std::nullopt;
  return Box::from_corners(x1, y1, x2 + 1, y2 + 1);
}

namespace {

Eigen::Vector3f hsv_color(double h, double s, double v) {
  h -= std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

bool separated(const Box& a, const Box& b, double gap) {
  return a.x2() + gap <= b.x1() || b.x2() + gap <= a.x1() || a.y2() + gap <= b.y1() || b.y2() + gap <= a.y1();
}

std::string image_file_name(int id) {
  std::ostringstream os;
  os << "img_";
  os.width(6);
  os.fill('0');
  os << id << ".ppm";
  return os.str();
}

}  // namespace

void quantize_8bit(Image& img) {
  for (Index i = 0; i < img.size(); ++i) {
    const long b = std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f);
    img[i] = static_cast<float>(b) / 255.0f;
  }
}

RenderedImage render_image(const DatasetSpec& spec, double hue_offset, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const int n = spec.image_size;

  RenderedImage out;
  Image& img = out.image.pixels;
  img = make_image(n, n, 0.0f);
  const double hue = uniform(0.55, 0.70) + hue_offset;
  const Eigen::Vector3f base = hsv_color(hue, uniform(0.3, 0.5), uniform(0.35, 0.55));
  const double freq = uniform(0.15, 0.45), angle = uniform(0.0, 3.14159265358979);
  const double phase = uniform(0.0, 6.28318530717959);
  const double fx = std::cos(angle) * freq, fy = std::sin(angle) * freq;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double shade = 1.0 + 0.08 * std::sin(fx * x + fy * y + phase) + uniform(-0.06, 0.06);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(std::clamp(base[c] * shade, 0.0, 1.0));
    }
  }

  const int count = std::uniform_int_distribution<int>(spec.min_objects, spec.max_objects)(rng);
  std::vector<Box> placed;
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      ShapeInstance s;
      s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, kNumShapeClasses - 1)(rng));
      s.size = std::uniform_int_distribution<int>(spec.min_shape, spec.max_shape)(rng);
      const double lo = s.size / 2.0 + 1.0, hi = n - s.size / 2.0 - 1.0;
      s.cx = uniform(lo, hi);
      s.cy = uniform(lo, hi);
      s.color = hsv_color(u01(rng), uniform(0.6, 1.0), uniform(0.8, 1.0));
      const auto bounds = s.mask_bounds(n);
      if (!bounds) continue;
      const bool clear = std::all_of(placed.begin(), placed.end(),
                                     [&](const Box& b) { return separated(*bounds, b, 2.0); });
      if (!clear) continue;
      placed.push_back(*bounds);
      out.shapes.push_back(s);
      out.image.labels.push_back({static_cast<int>(s.kind), *bounds});
      break;
    }
  }
  for (const auto& s : out.shapes) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (!s.contains(x + 0.5, y + 0.5)) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c];
      }
    }
  }
  quantize_8bit(img);
  return out;
}

nlohmann::json to_coco(const Annotations& ann, bool with_annotations) {
  nlohmann::json j;
  j["categories"] = nlohmann::json::array();
  for (std::size_t c = 0; c < ann.categories.size(); ++c) {
    j["categories"].push_back({{"id", c}, {"name", ann.categories[c]}});
  }
  j["images"] = nlohmann::json::array();
  j["annotations"] = nlohmann::json::array();
  int next_id = 0;
  for (const auto& rec : ann.images) {
    j["images"].push_back(
        {{"id", rec.id}, {"file_name", rec.file_name}, {"width", rec.width}, {"height", rec.height}});
    if (!with_annotations) continue;
    for (const auto& gt : rec.labels) {
      j["annotations"].push_back({{"id", next_id++},
                                  {"image_id", rec.id},
                                  {"category_id", gt.class_id},
                                  {"bbox", {gt.box.x1(), gt.box.y1(), gt.box.w(), gt.box.h()}}});
    }
  }
  return j;
}

Annotations from_coco(const nlohmann::json& j, const std::string& what) {
  auto fail = [&](const std::string& msg) -> DataError { return DataError(what + ": " + msg); };
  if (!j.is_object()) throw fail("top level must be an object");
  for (const char* key : {"images", "categories"}) {
    if (!j.contains(key) || !j[key].is_array()) throw fail(std::string("missing array '") + key + "'");
  }
  Annotations ann;
  const auto& cats = j["categories"];
  ann.categories.resize(cats.size());
  std::vector<bool> seen_cat(cats.size(), false);
  for (std::size_t k = 0; k < cats.size(); ++k) {
    const auto& c = cats[k];
    if (!c.is_object() || !c.contains("id") || !c["id"].is_number_integer() || !c.contains("name") ||
        !c["name"].is_string()) {
      throw fail("categories[" + std::to_string(k) + "] needs integer 'id' and string 'name'");
    }
    const auto id = c["id"].get<long long>();
    if (id < 0 || id >= static_cast<long long>(cats.size()) || seen_cat[id]) {
      throw fail("categories[" + std::to_string(k) + "] id must be unique and in [0, " +
                 std::to_string(cats.size()) + ")");
    }
    seen_cat[id] = true;
    ann.categories[id] = c["name"].get<std::string>();
  }

  std::map<int, std::size_t> by_id;
  const auto& imgs = j["images"];
  for (std::size_t k = 0; k < imgs.size(); ++k) {
    const auto& im = imgs[k];
    const std::string where = "images[" + std::to_string(k) + "]";
    if (!im.is_object()) throw fail(where + " must be an object");
    for (const char* key : {"id", "width", "height"}) {
      if (!im.contains(key) || !im[key].is_number_integer()) throw fail(where + " needs integer '" + key + "'");
    }
    if (!im.contains("file_name") || !im["file_name"].is_string()) throw fail(where + " needs string 'file_name'");
    ImageRecord rec;
    rec.id = im["id"].get<int>();
    rec.file_name = im["file_name"].get<std::string>();
    rec.width = im["width"].get<int>();
    rec.height = im["height"].get<int>();
    if (rec.width <= 0 || rec.height <= 0) throw fail(where + " has nonpositive size");
    if (!by_id.emplace(rec.id, ann.images.size()).second) throw fail(where + " duplicates image id");
    ann.images.push_back(std::move(rec));
  }

  if (j.contains("annotations")) {
    const auto& anns = j["annotations"];
    if (!anns.is_array()) throw fail("'annotations' must be an array");
    for (std::size_t k = 0; k < anns.size(); ++k) {
      const auto& a = anns[k];
      std::string where = "annotations[" + std::to_string(k) + "]";
      if (a.is_object() && a.contains("id")) where += " (id " + a["id"].dump() + ")";
      if (!a.is_object() || !a.contains("image_id") || !a["image_id"].is_number_integer() ||
          !a.contains("category_id") || !a["category_id"].is_number_integer() || !a.contains("bbox") ||
          !a["bbox"].is_array() || a["bbox"].size() != 4) {
        throw fail(where + " needs integer image_id, category_id and a 4-element bbox");
      }
      const auto it = by_id.find(a["image_id"].get<int>());
      if (it == by_id.end()) throw fail(where + " references an unknown image");
      const auto cls = a["category_id"].get<long long>();
      if (cls < 0 || cls >= static_cast<long long>(ann.categories.size())) {
        throw fail(where + " has unknown category id " + std::to_string(cls));
      }
      double v[4];
      for (int i = 0; i < 4; ++i) {
        if (!a["bbox"][i].is_number()) throw fail(where + " bbox entries must be numbers");
        v[i] = a["bbox"][i].get<double>();
        if (!std::isfinite(v[i])) throw fail(where + " bbox entries must be finite");
      }
      if (!(v[2] > 0.0 && v[3] > 0.0)) throw fail(where + " bbox width and height must be positive");
      ImageRecord& rec = ann.images[it->second];
      if (v[0] < 0.0 || v[1] < 0.0 || v[0] + v[2] > rec.width || v[1] + v[3] > rec.height) {
        throw fail(where + " bbox lies outside its image");
      }
      rec.labels.push_back(
          {static_cast<int>(cls), Box::from_center(v[0] + v[2] / 2.0, v[1] + v[3] / 2.0, v[2], v[3])});
    }
  }
  return ann;
}

void save_annotations(const Annotations& ann, const fs::path& path, bool with_annotations) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << to_coco(ann, with_annotations).dump(1) << '\n';
  if (!f) throw DataError("write failed for " + path.string());
}

Annotations load_annotations(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  return from_coco(j, path.string());
}

void write_ppm(const Image& img, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  const int h = image_height(img), w = image_width(img);
  f << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

Image read_ppm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (f.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(f, skip);
      } else if (!std::isspace(static_cast<unsigned char>(ch))) {
        t.push_back(ch);
        break;
      }
    }
    while (f.get(ch) && !std::isspace(static_cast<unsigned char>(ch))) t.push_back(ch);
    return t;
  };
  if (token() != "P6") throw DataError(path.string() + ": not a binary PPM");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": unsupported PPM geometry");
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError(path.string() + ": truncated");
  Image img({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
  return img;
}

GenerateSummary generate_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const DatasetPaths paths{out_dir};
  std::error_code ec;
  fs::create_directories(paths.images(), ec);
  if (ec) throw DataError("cannot create " + paths.images().string() + ": " + ec.message());

  GenerateSummary summary;
  summary.class_counts.assign(kNumShapeClasses, 0);
  Annotations labeled, unlabeled, test;
  for (auto* a : {&labeled, &unlabeled, &test}) {
    for (int c = 0; c < kNumShapeClasses; ++c) a->categories.push_back(shape_name(c));
  }

  const int n_l = spec.num_labeled();
  const int total = spec.num_images + spec.num_test;
  for (int id = 0; id < total; ++id) {
    const bool is_test = id >= spec.num_images;
    const bool is_labeled = id < n_l;
    const bool shifted = is_test ? (id % 2 == 1) : !is_labeled;
    auto rng = seeded_rng(spec.seed, static_cast<std::uint64_t>(id) + 1);
    RenderedImage r = render_image(spec, shifted ? spec.domain_hue_offset : 0.0, rng);
    ImageRecord rec{id, image_file_name(id), spec.image_size, spec.image_size, r.image.labels};
    write_ppm(r.image.pixels, paths.images() / rec.file_name);
    if (is_test) {
      test.images.push_back(std::move(rec));
      ++summary.test;
      continue;
    }
    for (const auto& gt : rec.labels) ++summary.class_counts[gt.class_id];
    if (is_labeled) {
      labeled.images.push_back(std::move(rec));
      ++summary.labeled;
    } else {
      unlabeled.images.push_back(std::move(rec));
      ++summary.unlabeled;
    }
  }
  save_annotations(labeled, paths.labeled());
  save_annotations(unlabeled, paths.unlabeled(), false);
  save_annotations(unlabeled, paths.unlabeled_gt());
  save_annotations(test, paths.test());
  return summary;
}

std::vector<LabeledImage> load_images(const Annotations& ann, const fs::path& image_dir) {
  std::vector<LabeledImage> out;
  out.reserve(ann.images.size());
  for (const auto& rec : ann.images) {
    LabeledImage li;
    li.pixels = read_ppm(image_dir / rec.file_name);
    if (image_width(li.pixels) != rec.width || image_height(li.pixels) != rec.height) {
      throw DataError(rec.file_name + ": image size disagrees with its annotation record");
    }
    li.labels = rec.labels;
    li.provenance = {rec.id};
    out.push_back(std::move(li));
  }
  return out;
}

}  // namespace et
