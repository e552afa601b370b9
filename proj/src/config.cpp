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

#include "et/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "et/epoch_adaptor.hpp"

namespace et {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kSupervised:
      return "supervised";
    case Mode::kNaiveFilter:
      return "naive_filter";
    case Mode::kEfficientTeacher:
      return "efficient_teacher";
    case Mode::kAlternating:
      return "alternating_baseline";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::kSupervised, Mode::kNaiveFilter, Mode::kEfficientTeacher, Mode::kAlternating}) {
    if (s == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  std::size_t used = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field real_field(const std::string& key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = to_double(key, v); },
          [member](const RunConfig& c) { return fmt(c.*member); }};
}

template <typename T>
Field int_field(const std::string& key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(to_int(key, v)); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field aug_real(const std::string& key, double AugmentConfig::*member) {
  return {key, [key, member](RunConfig& c, const std::string& v) { c.augment.*member = to_double(key, v); },
          [member](const RunConfig& c) { return fmt(c.augment.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"mode", [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); },
                 [](const RunConfig& c) { return std::string(mode_name(c.mode)); }});
    f.push_back({"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
                 [](const RunConfig& c) { return c.data_dir; }});
    f.push_back({"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir; }});
    f.push_back(int_field("seed", &RunConfig::seed));
    f.push_back({"precision",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "float32") c.precision = Precision::kFloat32;
                   else if (v == "float64") c.precision = Precision::kFloat64;
                   else throw ConfigError("precision: expected float32 or float64, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.precision == Precision::kFloat32 ? "float32" : "float64");
                 }});
    f.push_back(int_field("image_size", &RunConfig::image_size));
    f.push_back(int_field("num_classes", &RunConfig::num_classes));
    f.push_back({"widths",
                 [](RunConfig& c, const std::string& v) {
                   c.widths.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) c.widths.push_back(static_cast<int>(to_int("widths", trim(item))));
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.widths.size(); ++i) s += (i ? "," : "") + std::to_string(c.widths[i]);
                   return s;
                 }});
    f.push_back(int_field("num_scales", &RunConfig::num_scales));
    f.push_back(int_field("da_hidden", &RunConfig::da_hidden));
    f.push_back(int_field("epochs", &RunConfig::epochs));
    f.push_back(int_field("burn_in_epochs", &RunConfig::burn_in_epochs));
    f.push_back(int_field("batch_labeled", &RunConfig::batch_labeled));
    f.push_back(int_field("batch_unlabeled", &RunConfig::batch_unlabeled));
    f.push_back(int_field("max_steps", &RunConfig::max_steps));
    f.push_back(real_field("lr", &RunConfig::lr));
    f.push_back(real_field("momentum", &RunConfig::momentum));
    f.push_back(real_field("weight_decay", &RunConfig::weight_decay));
    f.push_back(int_field("warmup_steps", &RunConfig::warmup_steps));
    f.push_back(real_field("grad_clip", &RunConfig::grad_clip));
    f.push_back({"cls_weight", [](RunConfig& c, const std::string& v) { c.weights.cls = to_double("cls_weight", v); },
                 [](const RunConfig& c) { return fmt(c.weights.cls); }});
    f.push_back({"reg_weight", [](RunConfig& c, const std::string& v) { c.weights.reg = to_double("reg_weight", v); },
                 [](const RunConfig& c) { return fmt(c.weights.reg); }});
    f.push_back({"obj_weight", [](RunConfig& c, const std::string& v) { c.weights.obj = to_double("obj_weight", v); },
                 [](const RunConfig& c) { return fmt(c.weights.obj); }});
    f.push_back(real_field("lambda_u", &RunConfig::lambda_u));
    f.push_back(real_field("lambda_da", &RunConfig::lambda_da));
    f.push_back(real_field("ema", &RunConfig::ema));
    f.push_back(real_field("alpha", &RunConfig::alpha));
    f.push_back(real_field("tau1", &RunConfig::tau1));
    f.push_back(real_field("tau2", &RunConfig::tau2));
    f.push_back(real_field("naive_tau", &RunConfig::naive_tau));
    f.push_back(real_field("train_score_thresh", &RunConfig::train_score_thresh));
    f.push_back(real_field("nms_iou", &RunConfig::nms_iou));
    f.push_back(int_field("max_pseudo", &RunConfig::max_pseudo));
    f.push_back(int_field("reservoir_cap", &RunConfig::reservoir_cap));
    f.push_back(real_field("test_score_thresh", &RunConfig::test_score_thresh));
    f.push_back(int_field("max_det", &RunConfig::max_det));
    f.push_back(int_field("eval_every", &RunConfig::eval_every));
    f.push_back({"eval_split", [](RunConfig& c, const std::string& v) { c.eval_split = v; },
                 [](const RunConfig& c) { return c.eval_split; }});
    f.push_back(int_field("keep_checkpoints", &RunConfig::keep_checkpoints));
    f.push_back({"canvas", [](RunConfig& c, const std::string& v) { c.augment.canvas = static_cast<int>(to_int("canvas", v)); },
                 [](const RunConfig& c) { return std::to_string(c.augment.canvas); }});
    f.push_back(aug_real("min_box_area", &AugmentConfig::min_area));
    f.push_back(aug_real("mosaic_scale_min", &AugmentConfig::mosaic_scale_min));
    f.push_back(aug_real("mosaic_scale_max", &AugmentConfig::mosaic_scale_max));
    f.push_back(aug_real("flip_prob", &AugmentConfig::flip_prob));
    f.push_back(aug_real("multiscale_prob", &AugmentConfig::multiscale_prob));
    f.push_back(aug_real("scale_min", &AugmentConfig::scale_min));
    f.push_back(aug_real("scale_max", &AugmentConfig::scale_max));
    f.push_back(aug_real("hsv_prob", &AugmentConfig::hsv_prob));
    f.push_back(aug_real("brightness", &AugmentConfig::brightness));
    f.push_back(aug_real("saturation", &AugmentConfig::saturation));
    f.push_back(aug_real("hue", &AugmentConfig::hue));
    f.push_back(aug_real("gray_prob", &AugmentConfig::gray_prob));
    f.push_back(aug_real("blur_prob", &AugmentConfig::blur_prob));
    f.push_back(aug_real("blur_sigma_min", &AugmentConfig::blur_sigma_min));
    f.push_back(aug_real("blur_sigma_max", &AugmentConfig::blur_sigma_max));
    f.push_back({"cutout_prob",
                 [](RunConfig& c, const std::string& v) {
                   const double p = to_double("cutout_prob", v);
                   for (auto& pat : c.augment.cutouts) pat.prob = p;
                 },
                 [](const RunConfig& c) { return fmt(c.augment.cutouts.empty() ? 0.0 : c.augment.cutouts[0].prob); }});
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  for (const auto& f : fields()) j[f.key] = f.get(*this);
  return j;
}

int RunConfig::resolved_burn_in() const {
  return burn_in_epochs >= 0 ? burn_in_epochs : Schedule::default_burn_in(epochs);
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(image_size >= 16 && image_size % 8 == 0, "image_size must be a multiple of 8 and at least 16");
  need(num_classes >= 1, "num_classes must be positive");
  need(widths.size() == 4, "widths must list four layer widths");
  for (int w : widths) need(w >= 1, "widths must be positive");
  need(num_scales == 1 || num_scales == 3, "num_scales must be 1 or 3");
  need(da_hidden >= 1, "da_hidden must be positive");
  need(epochs >= 1, "epochs must be positive");
  need(burn_in_epochs >= -1 && burn_in_epochs <= epochs, "burn_in_epochs must be -1 or lie in [0, epochs]");
  need(batch_labeled >= 1 && batch_unlabeled >= 1, "batch sizes must be positive");
  need(max_steps == -1 || max_steps >= 1, "max_steps must be -1 or positive");
  need(lr > 0.0, "lr must be positive");
  need(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  need(weight_decay >= 0.0, "weight_decay must be nonnegative");
  need(grad_clip >= 0.0, "grad_clip must be nonnegative");
  need(warmup_steps >= 0, "warmup_steps must be nonnegative");
  need(weights.cls >= 0.0 && weights.reg >= 0.0 && weights.obj >= 0.0, "loss weights must be nonnegative");
  need(lambda_u >= 0.0, "lambda_u must be nonnegative");
  need(lambda_da >= 0.0, "lambda_da must be nonnegative");
  need(ema >= 0.0 && ema <= 1.0, "ema must lie in [0, 1]");
  normalize_alpha(alpha);
  need(tau1 >= 0.0 && tau1 < tau2 && tau2 <= 1.0, "bootstrap thresholds must satisfy 0 <= tau1 < tau2 <= 1");
  need(naive_tau > 0.0 && naive_tau <= 1.0, "naive_tau must lie in (0, 1]");
  need(train_score_thresh >= 0.0 && train_score_thresh < 1.0, "train_score_thresh must lie in [0, 1)");
  need(nms_iou > 0.0 && nms_iou <= 1.0, "nms_iou must lie in (0, 1]");
  need(max_pseudo >= 1, "max_pseudo must be positive");
  need(reservoir_cap >= 1, "reservoir_cap must be positive");
  need(test_score_thresh >= 0.0 && test_score_thresh < 1.0, "test_score_thresh must lie in [0, 1)");
  need(max_det >= 1, "max_det must be positive");
  need(eval_every >= 0, "eval_every must be nonnegative");
  need(eval_split == "test" || eval_split == "unlabeled", "eval_split must be test or unlabeled");
  need(keep_checkpoints >= 0, "keep_checkpoints must be nonnegative");
  need(augment.canvas == image_size, "canvas must equal image_size");
  augment.validate();
}

}  // namespace et
