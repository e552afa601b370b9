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

#include "et/augment.hpp"

#include <algorithm>
#include <cmath>

namespace et {

Image make_image(int height, int width, float value) {
  Image img({3, height, width});
  img.data().setConstant(value);
  return img;
}

std::optional<Box> transform_box(const Box& box, const AffineMap& map, int width, int height,
                                 double min_area) {
  const Eigen::Vector2d a = map.apply({box.x1(), box.y1()});
  const Eigen::Vector2d b = map.apply({box.x2(), box.y2()});
  const double x1 = std::clamp(std::min(a.x(), b.x()), 0.0, static_cast<double>(width));
  const double x2 = std::clamp(std::max(a.x(), b.x()), 0.0, static_cast<double>(width));
  const double y1 = std::clamp(std::min(a.y(), b.y()), 0.0, static_cast<double>(height));
  const double y2 = std::clamp(std::max(a.y(), b.y()), 0.0, static_cast<double>(height));
  if (!(x2 > x1 && y2 > y1) || (x2 - x1) * (y2 - y1) < min_area) return std::nullopt;
  return Box::from_corners(x1, y1, x2, y2);
}

std::vector<GroundTruth> transform_labels(std::span<const GroundTruth> labels, const AffineMap& map,
                                          int width, int height, double min_area) {
  std::vector<GroundTruth> out;
  for (const auto& gt : labels) {
    if (auto b = transform_box(gt.box, map, width, height, min_area)) out.push_back({gt.class_id, *b});
  }
  return out;
}

void resample_into(const Image& src, const AffineMap& map, Image& dst, int x0, int y0, int x1, int y1,
                   float fill) {
  const int sh = image_height(src), sw = image_width(src);
  for (int v = y0; v < y1; ++v) {
    for (int u = x0; u < x1; ++u) {
      const Eigen::Vector2d p = map.invert({u + 0.5, v + 0.5});
      if (p.x() < 0.0 || p.y() < 0.0 || p.x() > sw || p.y() > sh) {
        for (int c = 0; c < 3; ++c) dst.at(c, v, u) = fill;
        continue;
      }
      const double fx = std::clamp(p.x() - 0.5, 0.0, sw - 1.0);
      const double fy = std::clamp(p.y() - 0.5, 0.0, sh - 1.0);
      const int ix = std::min(static_cast<int>(fx), sw - 1);
      const int iy = std::min(static_cast<int>(fy), sh - 1);
      const int jx = std::min(ix + 1, sw - 1), jy = std::min(iy + 1, sh - 1);
      const double ax = fx - ix, ay = fy - iy;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - ax) * src.at(c, iy, ix) + ax * src.at(c, iy, jx);
        const double bot = (1 - ax) * src.at(c, jy, ix) + ax * src.at(c, jy, jx);
        dst.at(c, v, u) = static_cast<float>((1 - ay) * top + ay * bot);
      }
    }
  }
}

Image resample(const Image& src, const AffineMap& map, int out_h, int out_w, float fill) {
  Image dst = make_image(out_h, out_w, fill);
  resample_into(src, map, dst, 0, 0, out_w, out_h, fill);
  return dst;
}

MosaicParams sample_mosaic_params(int out_size, std::mt19937_64& rng, double scale_min,
                                  double scale_max) {
  std::uniform_int_distribution<int> center(out_size / 4, (3 * out_size) / 4);
  std::uniform_real_distribution<double> scale(scale_min, scale_max);
  MosaicParams p;
  p.center_x = center(rng);
  p.center_y = center(rng);
  for (auto& s : p.scales) s = scale(rng);
  return p;
}

std::array<MosaicTile, 4> mosaic_layout(std::span<const LabeledImage> imgs, int out_size,
                                        const MosaicParams& params) {
  if (imgs.size() != 4) throw UsageError("mosaic needs exactly four images");
  std::array<MosaicTile, 4> tiles{};
  for (int i = 0; i < 4; ++i) {
    const int w = image_width(imgs[i].pixels), h = image_height(imgs[i].pixels);
    const int sw = std::max(1, static_cast<int>(std::lround(w * params.scales[i])));
    const int sh = std::max(1, static_cast<int>(std::lround(h * params.scales[i])));
    const int ox = (i % 2 == 0) ? params.center_x - sw : params.center_x;
    const int oy = (i < 2) ? params.center_y - sh : params.center_y;
    MosaicTile& t = tiles[i];
    t.map = {static_cast<double>(sw) / w, static_cast<double>(sh) / h, static_cast<double>(ox),
             static_cast<double>(oy)};
    t.x0 = std::max(ox, 0);
    t.y0 = std::max(oy, 0);
    t.x1 = std::min(ox + sw, out_size);
    t.y1 = std::min(oy + sh, out_size);
  }
  return tiles;
}

LabeledImage mosaic(std::span<const LabeledImage> imgs, int out_size, const MosaicParams& params,
                    double min_area) {
  const auto tiles = mosaic_layout(imgs, out_size, params);
  LabeledImage out;
  out.pixels = make_image(out_size, out_size);
  for (int i = 0; i < 4; ++i) {
    const auto& t = tiles[i];
    if (t.x1 > t.x0 && t.y1 > t.y0) resample_into(imgs[i].pixels, t.map, out.pixels, t.x0, t.y0, t.x1, t.y1);
    for (const auto& gt : transform_labels(imgs[i].labels, t.map, out_size, out_size, min_area)) {
      out.labels.push_back(gt);
    }
    out.provenance.insert(out.provenance.end(), imgs[i].provenance.begin(), imgs[i].provenance.end());
  }
  return out;
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
  };
  auto range = [](double lo, double hi, const char* what) {
    if (!(lo > 0.0 && lo <= hi)) throw ConfigError(std::string(what) + " range must satisfy 0 < min <= max");
  };
  if (canvas < 8) throw ConfigError("augmentation canvas must be at least 8 px");
  if (!(min_area >= 0.0)) throw ConfigError("min_area must be nonnegative");
  range(mosaic_scale_min, mosaic_scale_max, "mosaic scale");
  prob(flip_prob, "flip_prob");
  prob(multiscale_prob, "multiscale_prob");
  range(scale_min, scale_max, "multi-scale");
  prob(hsv_prob, "hsv_prob");
  if (!(brightness >= 0.0 && brightness < 1.0 && saturation >= 0.0 && saturation <= 1.0 && hue >= 0.0 &&
        hue <= 0.5)) {
    throw ConfigError("HSV jitter amplitudes out of range");
  }
  prob(gray_prob, "gray_prob");
  prob(blur_prob, "blur_prob");
  range(blur_sigma_min, blur_sigma_max, "blur sigma");
  for (const auto& c : cutouts) {
    prob(c.prob, "cutout prob");
    range(c.scale_min, c.scale_max, "cutout scale");
    range(c.ratio_min, c.ratio_max, "cutout ratio");
    if (c.scale_max > 1.0) throw ConfigError("cutout scale must not exceed 1");
  }
}

std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

LabeledImage mosaic_from_pool(std::span<const LabeledImage> pool, std::size_t index,
                              const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (pool.empty() || index >= pool.size()) throw UsageError("mosaic index outside the pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::array<std::size_t, 4> ids{index, pick(rng), pick(rng), pick(rng)};
  const MosaicParams params = sample_mosaic_params(cfg.canvas, rng, cfg.mosaic_scale_min, cfg.mosaic_scale_max);
  std::vector<LabeledImage> four;
  four.reserve(4);
  for (std::size_t id : ids) four.push_back(pool[id]);
  return mosaic(four, cfg.canvas, params, cfg.min_area);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = std::fmod((g - b) / d, 6.0) / 6.0;
  } else if (mx == g) {
    h = ((b - r) / d + 2.0) / 6.0;
  } else {
    h = ((r - g) / d + 4.0) / 6.0;
  }
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

}  // namespace

LabeledImage weak_pipeline(std::span<const LabeledImage> pool, std::size_t index,
                           const AugmentConfig& cfg, std::uint64_t seed) {
  auto rng = seeded_rng(seed);
  return mosaic_from_pool(pool, index, cfg, rng);
}

void hsv_jitter(Image& img, double brightness_factor, double saturation_factor, double hue_shift) {
  const int h = image_height(img), w = image_width(img);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double hh, ss, vv;
      rgb_to_hsv(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x), hh, ss, vv);
      hh = hh + hue_shift;
      hh -= std::floor(hh);
      ss = std::clamp(ss * saturation_factor, 0.0, 1.0);
      vv = std::clamp(vv * brightness_factor, 0.0, 1.0);
      double r, g, b;
      hsv_to_rgb(hh, ss, vv, r, g, b);
      img.at(0, y, x) = static_cast<float>(std::clamp(r, 0.0, 1.0));
      img.at(1, y, x) = static_cast<float>(std::clamp(g, 0.0, 1.0));
      img.at(2, y, x) = static_cast<float>(std::clamp(b, 0.0, 1.0));
    }
  }
}

void to_grayscale(Image& img) {
  const int h = image_height(img), w = image_width(img);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float g = std::clamp(
          0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x), 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = g;
    }
  }
}

void gaussian_blur(Image& img, double sigma) {
  if (!(sigma > 0.0)) return;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;

  const int h = image_height(img), w = image_width(img);
  Image tmp = Image::zeros_like(img);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(c, y, std::clamp(x + i, 0, w - 1));
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(c, std::clamp(y + i, 0, h - 1), x);
        img.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
}

std::optional<std::array<int, 4>> cutout(Image& img, const CutoutPattern& pattern, std::mt19937_64& rng) {
  const int h = image_height(img), w = image_width(img);
  const double area = static_cast<double>(h) * w;
  std::uniform_real_distribution<double> frac(pattern.scale_min, pattern.scale_max);
  std::uniform_real_distribution<double> log_ratio(std::log(pattern.ratio_min), std::log(pattern.ratio_max));
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = frac(rng) * area;
    const double ratio = std::exp(log_ratio(rng));
    const int eh = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int ew = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (eh < 1 || ew < 1 || eh > h || ew > w) continue;
    const double got = eh * static_cast<double>(ew) / area;
    if (got < pattern.scale_min || got > pattern.scale_max) continue;
    const int y0 = std::uniform_int_distribution<int>(0, h - eh)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, w - ew)(rng);
    std::uniform_real_distribution<float> noise(0.0f, 1.0f);
    for (int c = 0; c < 3; ++c)
      for (int y = y0; y < y0 + eh; ++y)
        for (int x = x0; x < x0 + ew; ++x) img.at(c, y, x) = noise(rng);
    return std::array<int, 4>{x0, y0, x0 + ew, y0 + eh};
  }
  return std::nullopt;
}

LabeledImage strong_from_base(const LabeledImage& base, const AugmentConfig& cfg, std::mt19937_64& rng,
                              StrongTrace* trace) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int h = image_height(base.pixels), w = image_width(base.pixels);
  StrongTrace tr;

  // Every draw happens unconditionally so the stream stays aligned whichever stages fire.
  const bool flip = u01(rng) < cfg.flip_prob;
  const bool rescale = u01(rng) < cfg.multiscale_prob;
  const double s = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
  const bool hsv = u01(rng) < cfg.hsv_prob;
  const double bf = std::uniform_real_distribution<double>(1 - cfg.brightness, 1 + cfg.brightness)(rng);
  const double sf = std::uniform_real_distribution<double>(1 - cfg.saturation, 1 + cfg.saturation)(rng);
  const double hf = std::uniform_real_distribution<double>(-cfg.hue, cfg.hue)(rng);
  const bool gray = u01(rng) < cfg.gray_prob;
  const bool blur = u01(rng) < cfg.blur_prob;
  const double sigma = std::uniform_real_distribution<double>(cfg.blur_sigma_min, cfg.blur_sigma_max)(rng);

  AffineMap geo;
  if (flip) geo = geo.then(AffineMap::hflip(w));
  if (rescale) geo = geo.then(AffineMap::scale_about(s, w / 2.0, h / 2.0));
  tr.flipped = flip;
  tr.scale = rescale ? s : 1.0;
  tr.geometry = geo;

  LabeledImage out;
  out.provenance = base.provenance;
  if (flip || rescale) {
    out.pixels = resample(base.pixels, geo, h, w);
    out.labels = transform_labels(base.labels, geo, w, h, cfg.min_area);
  } else {
    out.pixels = base.pixels;
    out.labels = base.labels;
  }

  if (hsv) hsv_jitter(out.pixels, bf, sf, hf);
  if (gray) to_grayscale(out.pixels);
  if (blur) gaussian_blur(out.pixels, sigma);
  tr.hsv = hsv;
  tr.gray = gray;
  tr.blurred = blur;
  tr.blur_sigma = blur ? sigma : 0.0;
  for (const auto& pattern : cfg.cutouts) {
    if (u01(rng) < pattern.prob) {
      if (auto rect = cutout(out.pixels, pattern, rng)) tr.erased.push_back(*rect);
    }
  }
  if (trace) *trace = tr;
  return out;
}

LabeledImage strong_pipeline(std::span<const LabeledImage> pool, std::size_t index,
                             const AugmentConfig& cfg, std::uint64_t seed, StrongTrace* trace) {
  auto rng = seeded_rng(seed);
  const LabeledImage base = mosaic_from_pool(pool, index, cfg, rng);
  return strong_from_base(base, cfg, rng, trace);
}

}  // namespace et
