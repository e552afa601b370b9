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

#include "et/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <ostream>

#include "et/synthdata.hpp"

namespace et {

namespace fs = std::filesystem;

DetectorArch arch_for(const RunConfig& cfg) {
  return DetectorArch::make(cfg.image_size, cfg.num_classes, cfg.widths, cfg.num_scales);
}

TrainData load_train_data(const RunConfig& cfg) {
  const DatasetPaths paths{cfg.data_dir};
  auto load = [&](const fs::path& p) {
    const Annotations ann = load_annotations(p);
    if (static_cast<int>(ann.categories.size()) != cfg.num_classes) {
      throw ConfigError(p.string() + " has " + std::to_string(ann.categories.size()) +
                        " categories but the run is configured for " + std::to_string(cfg.num_classes));
    }
    return load_images(ann, paths.images());
  };
  TrainData data;
  data.labeled = load(paths.labeled());
  data.unlabeled = load(paths.unlabeled());
  for (auto& u : data.unlabeled) u.labels.clear();
  data.eval = load(cfg.eval_split == "test" ? paths.test() : paths.unlabeled_gt());
  return data;
}

std::string metrics_header() {
  return "step,epoch,stage,ls_cls,ls_reg,ls_obj,lu_cls,lu_reg,lu_obj,l_da,total,tau1_mean,tau2_mean,ema_m";
}

template <typename Scalar>
std::vector<Detection> detect(const ParamSet<Scalar>& params, const DetectorArch& arch, const Image& image,
                              const NmsConfig& nms_cfg, std::size_t max_det) {
  const auto rec = detector_forward(params, arch, image.template cast<Scalar>());
  return top_k(nms(decode(rec.grid, arch.anchors), nms_cfg), max_det);
}

template std::vector<Detection> detect<float>(const ParamSet<float>&, const DetectorArch&, const Image&,
                                              const NmsConfig&, std::size_t);
template std::vector<Detection> detect<double>(const ParamSet<double>&, const DetectorArch&, const Image&,
                                               const NmsConfig&, std::size_t);

namespace {

std::uint64_t stream_id(int epoch, int k) { return (static_cast<std::uint64_t>(epoch) << 8) | static_cast<std::uint64_t>(k); }

enum Streams { kLabeledStream = 1, kUnlabeledStream = 2, kReservoirStream = 3 };

class Sampler {
 public:
  Sampler(std::size_t n, std::mt19937_64& rng) : n_(n), rng_(rng) { reshuffle(); }
  std::size_t next() {
    if (pos_ == perm_.size()) reshuffle();
    return perm_[pos_++];
  }

 private:
  void reshuffle() {
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    pos_ = 0;
  }
  std::size_t n_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

struct ModePlan {
  int burn_in = 0;
  bool domain = false;
  bool dynamic_thresholds = true;
};

ModePlan plan_for(const RunConfig& cfg) {
  ModePlan p;
  switch (cfg.mode) {
    case Mode::kSupervised:
      p.burn_in = cfg.epochs;
      break;
    case Mode::kEfficientTeacher:
      p.burn_in = cfg.resolved_burn_in();
      p.domain = cfg.lambda_da > 0.0;
      break;
    case Mode::kNaiveFilter:
      p.burn_in = cfg.resolved_burn_in();
      p.dynamic_thresholds = false;
      break;
    case Mode::kAlternating:
      p.burn_in = cfg.resolved_burn_in();
      break;
  }
  return p;
}

Thresholds initial_thresholds(const RunConfig& cfg) {
  if (cfg.mode == Mode::kNaiveFilter) {
    return strict_thresholds(std::vector<double>(cfg.num_classes, cfg.naive_tau),
                             std::vector<double>(cfg.num_classes, cfg.naive_tau));
  }
  return Thresholds::uniform(cfg.num_classes, cfg.tau1, cfg.tau2);
}

nlohmann::json thresholds_json(const Thresholds& th) { return {{"tau1", th.tau1}, {"tau2", th.tau2}}; }

Thresholds thresholds_from_json(const nlohmann::json& j) {
  Thresholds th{j.at("tau1").get<std::vector<double>>(), j.at("tau2").get<std::vector<double>>()};
  th.validate();
  return th;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  for (const auto& [k, v] : j.items()) cfg.set(k, v.get<std::string>());
  return cfg;
}

std::string fmt_row(std::int64_t step, int epoch, Stage stage, const LossReport& r, const Thresholds& th, double m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(step), epoch, stage_name(stage), r.ls_cls, r.ls_reg, r.ls_obj, r.lu_cls,
                r.lu_reg, r.lu_obj, r.l_da, r.total, th.mean_tau1(), th.mean_tau2(), m);
  return buf;
}

template <typename Scalar>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts)
      : cfg_(cfg),
        data_(data),
        opts_(opts),
        arch_(arch_for(cfg)),
        dims_(arch_.grid_dims()),
        dc_spec_(domain_classifier_spec(arch_.feature_channels(), cfg.da_hidden)),
        plan_(plan_for(cfg)),
        opt_(SgdConfig{cfg.lr, cfg.momentum, cfg.weight_decay}),
        dc_opt_(SgdConfig{cfg.lr, cfg.momentum, cfg.weight_decay}),
        th_(initial_thresholds(cfg)) {
    if (data_.labeled.empty()) throw DataError("labeled split is empty");
    if (cfg.mode != Mode::kSupervised && data_.unlabeled.empty()) throw DataError("unlabeled split is empty");
    auto rng = seeded_rng(cfg.seed, 0);
    student_ = init_detector<Scalar>(arch_, rng);
    init_params(dc_spec_, dc_, rng);
  }

  TrainResult run() {
    const Schedule schedule{plan_.burn_in, cfg_.epochs};
    schedule.validate();
    const fs::path out(cfg_.out_dir);
    fs::create_directories(out / "checkpoints");
    int start_epoch = 0;
    if (opts_.resume) start_epoch = restore(*opts_.resume);
    open_logs(out, start_epoch > 0);

    TrainResult result;
    for (int epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      if (cfg_.max_steps >= 0 && step_ >= cfg_.max_steps) break;
      const EpochDirective dir = advance(schedule, epoch, data_.labeled.size(),
                                         std::max<std::size_t>(data_.unlabeled.size(), 1),
                                         static_cast<std::size_t>(cfg_.batch_labeled),
                                         static_cast<std::size_t>(cfg_.batch_unlabeled));
      run_epoch(epoch, dir);

      EpochSummary summary;
      summary.epoch = epoch;
      summary.stage = dir.stage;
      const bool last = epoch + 1 == cfg_.epochs || (cfg_.max_steps >= 0 && step_ >= cfg_.max_steps);
      if (last || (cfg_.eval_every > 0 && (epoch + 1) % cfg_.eval_every == 0)) {
        summary.eval = evaluate_current();
        eval_csv_ << epoch << ',' << step_ << ',' << fmt_double(summary.eval->map50) << ','
                  << fmt_double(summary.eval->map50_95) << '\n';
        eval_csv_.flush();
      }
      summary.step = step_;
      summary.thresholds = th_;
      result.last_checkpoint = save(out, epoch);
      if (opts_.log) {
        *opts_.log << mode_name(cfg_.mode) << " epoch " << epoch << " (" << stage_name(dir.stage) << ") step "
                   << step_;
        if (summary.eval) *opts_.log << " AP50 " << summary.eval->map50 << " AP50:95 " << summary.eval->map50_95;
        *opts_.log << '\n';
      }
      result.epochs.push_back(std::move(summary));
      if (last) break;
    }
    result.steps = step_;
    for (auto it = result.epochs.rbegin(); it != result.epochs.rend(); ++it) {
      if (it->eval) {
        result.final_eval = it->eval;
        break;
      }
    }
    return result;
  }

 private:
  using Grid = PredictionGrid<Scalar>;

  static std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  }

  Tensor<Scalar> to_input(const Image& img) const { return img.template cast<Scalar>(); }

  void open_logs(const fs::path& out, bool append) {
    const auto mode = append ? std::ios::app : std::ios::trunc;
    metrics_.open(out / "metrics.csv", std::ios::out | mode);
    eval_csv_.open(out / "eval.csv", std::ios::out | mode);
    thr_log_.open(out / "thresholds.jsonl", std::ios::out | mode);
    if (!metrics_ || !eval_csv_ || !thr_log_) throw DataError("cannot write logs under " + out.string());
    if (!append) {
      metrics_ << metrics_header() << '\n';
      eval_csv_ << "epoch,step,ap50,ap50_95\n";
      std::ofstream(out / "config.txt") << cfg_.dump();
    }
  }

  void run_epoch(int epoch, const EpochDirective& dir) {
    auto lrng = seeded_rng(cfg_.seed, stream_id(epoch, kLabeledStream));
    auto urng = seeded_rng(cfg_.seed, stream_id(epoch, kUnlabeledStream));
    rrng_ = seeded_rng(cfg_.seed, stream_id(epoch, kReservoirStream));
    Sampler lsampler(data_.labeled.size(), lrng);
    std::optional<Sampler> usampler;
    if (!data_.unlabeled.empty()) usampler.emplace(data_.unlabeled.size(), urng);

    stats_ = EpochStats(cfg_.num_classes, data_.labeled.size(), std::max<std::size_t>(data_.unlabeled.size(), 1),
                        cfg_.alpha);
    stats_.epoch = epoch;
    stats_.reservoir_cap = cfg_.reservoir_cap;

    if (dir.stage == Stage::kSsod && !teacher_ready_) {
      teacher_ = student_;
      teacher_ready_ = true;
    }

    for (std::size_t s = 0; s < dir.steps; ++s) {
      if (cfg_.max_steps >= 0 && step_ >= cfg_.max_steps) break;
      const LossReport rep = step(epoch, dir, lsampler, lrng, usampler ? &*usampler : nullptr, urng);
      ++step_;
      metrics_ << fmt_row(step_, epoch, dir.stage, rep, th_, teacher_ready_ ? cfg_.ema : 0.0) << '\n';
    }
    metrics_.flush();

    if (dir.stage == Stage::kSsod) {
      std::vector<bool> fallback(cfg_.num_classes, false);
      if (plan_.dynamic_thresholds) {
        stats_.finalize();
        for (int c = 0; c < cfg_.num_classes; ++c) fallback[c] = stats_.scores[c].empty();
        th_ = compute_all_thresholds(stats_);
      }
      for (const auto& row : threshold_log_rows(stats_, th_, fallback)) {
        thr_log_ << row.dump() << '\n';
      }
      thr_log_.flush();
    }
  }

  LossReport step(int epoch, const EpochDirective& dir, Sampler& lsampler, std::mt19937_64& lrng, Sampler* usampler,
                  std::mt19937_64& urng) {
    const LossWeights& w = cfg_.weights;
    const bool burn_in = dir.stage == Stage::kBurnIn;
    const bool domain = burn_in && plan_.domain;

    ParamSet<Scalar> grads = zeros_like(student_);
    ParamSet<Scalar> dc_grads;
    if (domain) dc_grads = zeros_like(dc_);
    LossReport rep;
    rep.lambda_u = burn_in ? 0.0 : cfg_.lambda_u;
    rep.lambda_da = domain ? cfg_.lambda_da : 0.0;

    // Labeled views.
    std::vector<DetectorRecord<Scalar>> lrecs;
    std::vector<Grid> lgrads;
    {
      std::vector<Grid> preds;
      std::vector<TargetGrid> targets;
      for (int b = 0; b < cfg_.batch_labeled; ++b) {
        const std::size_t idx = lsampler.next();
        const std::uint64_t seed = lrng();
        const LabeledImage view = weak_pipeline(data_.labeled, idx, cfg_.augment, seed);
        stats_.add_labels(view.labels);
        lrecs.push_back(detector_forward(student_, arch_, to_input(view.pixels)));
        TargetGrid t = assign_labels(view.labels, arch_.anchors, dims_, cfg_.num_classes);
        fill_objectness_targets(t, lrecs.back().grid, arch_.anchors);
        preds.push_back(lrecs.back().grid);
        targets.push_back(std::move(t));
        lgrads.push_back(Grid::zeros_like(preds.back()));
      }
      const DetectionLoss dl = supervised_loss<Scalar>(preds, targets, arch_.anchors, w, &lgrads, 1.0);
      rep.ls_cls = w.cls * dl.cls.value();
      rep.ls_reg = w.reg * dl.reg.value();
      rep.ls_obj = w.obj * dl.obj.value();
    }

    // Domain classifier on labeled (0) and unlabeled (1) feature maps.
    std::vector<Tensor<Scalar>> lfeat(lrecs.size());
    if (domain) {
      std::vector<StackRecord<Scalar>> urecs;
      for (int b = 0; b < cfg_.batch_unlabeled; ++b) {
        const std::size_t idx = usampler->next();
        const std::uint64_t seed = urng();
        const LabeledImage view = weak_pipeline(data_.unlabeled, idx, cfg_.augment, seed);
        urecs.push_back(forward(student_, arch_.backbone, to_input(view.pixels)));
      }
      std::vector<DomainForward<Scalar>> fwd;
      std::vector<Tensor<Scalar>> logits;
      std::vector<int> domains;
      for (auto& r : lrecs) {
        fwd.push_back(domain_classifier_forward(dc_, dc_spec_, r.features()));
        domains.push_back(0);
      }
      for (auto& r : urecs) {
        fwd.push_back(domain_classifier_forward(dc_, dc_spec_, r.output()));
        domains.push_back(1);
      }
      for (auto& f : fwd) logits.push_back(f.logits);
      std::vector<Tensor<Scalar>> lg;
      const LossTerm lt = domain_loss_logits<Scalar>(logits, domains, &lg, cfg_.lambda_da);
      rep.l_da = lt.value();
      for (std::size_t m = 0; m < fwd.size(); ++m) {
        Tensor<Scalar> fg = domain_classifier_backward(fwd[m], dc_, dc_spec_, lg[m], dc_grads, 1.0);
        if (m < lrecs.size()) {
          lfeat[m] = std::move(fg);
        } else {
          std::vector<Tensor<Scalar>> ups(arch_.backbone.layers.size());
          ups.back() = std::move(fg);
          backward_accumulate<Scalar>(urecs[m - lrecs.size()], student_, arch_.backbone, ups, grads);
        }
      }
    }
    for (std::size_t i = 0; i < lrecs.size(); ++i) {
      detector_backward(lrecs[i], student_, arch_, lgrads[i], domain ? &lfeat[i] : nullptr, grads);
    }

    // Pseudo-label losses on strong views.
    if (!burn_in) {
      std::vector<DetectorRecord<Scalar>> srecs;
      std::vector<Grid> preds, ugrads;
      std::vector<TargetGrid> targets;
      const NmsConfig nms_cfg{cfg_.train_score_thresh, cfg_.nms_iou};
      for (int b = 0; b < cfg_.batch_unlabeled; ++b) {
        const std::size_t idx = usampler->next();
        const std::uint64_t seed = urng();
        const LabeledImage weak = weak_pipeline(data_.unlabeled, idx, cfg_.augment, seed);
        const auto trec = detector_forward(teacher_, arch_, to_input(weak.pixels));
        const auto kept = nms(decode(trec.grid, arch_.anchors), nms_cfg);
        const auto pseudo = tag_detections(kept, th_, static_cast<std::size_t>(cfg_.max_pseudo));
        for (const auto& pl : pseudo) stats_.add_score(pl.det.class_id, pl.p_score, rrng_);

        auto srng = seeded_rng(seed, 1);
        StrongTrace trace;
        const LabeledImage strong = strong_from_base(weak, cfg_.augment, srng, &trace);
        std::vector<PseudoLabel> mapped;
        for (const auto& pl : pseudo) {
          if (auto box = transform_box(pl.det.box, trace.geometry, cfg_.image_size, cfg_.image_size,
                                       cfg_.augment.min_area)) {
            PseudoLabel m = pl;
            m.det.box = *box;
            mapped.push_back(m);
          }
        }
        TargetGrid t = build_unsup_targets(mapped, arch_.anchors, dims_, cfg_.num_classes);
        srecs.push_back(detector_forward(student_, arch_, to_input(strong.pixels)));
        fill_objectness_targets(t, srecs.back().grid, arch_.anchors);
        preds.push_back(srecs.back().grid);
        targets.push_back(std::move(t));
        ugrads.push_back(Grid::zeros_like(preds.back()));
      }
      const double k = cfg_.lambda_u;
      const LossTerm lc = unsup_cls_loss<Scalar>(preds, targets, th_, w, &ugrads, k);
      const LossTerm lr = unsup_reg_loss<Scalar>(preds, targets, arch_.anchors, th_, w, &ugrads, k);
      const LossTerm lo = unsup_obj_loss<Scalar>(preds, targets, th_, w, &ugrads, k);
      rep.lu_cls = w.cls * lc.value();
      rep.lu_reg = w.reg * lr.value();
      rep.lu_obj = w.obj * lo.value();
      for (std::size_t i = 0; i < srecs.size(); ++i) detector_backward<Scalar>(srecs[i], student_, arch_, ugrads[i], nullptr, grads);
    }

    rep.total = rep.supervised() + rep.lambda_u * rep.unsupervised() + rep.lambda_da * rep.l_da;
    if (!std::isfinite(rep.total)) dump_and_abort(epoch, rep);

    double lr_scale = 1.0;
    if (cfg_.warmup_steps > 0) lr_scale = std::min(1.0, static_cast<double>(step_ + 1) / cfg_.warmup_steps);
    clip_grad_norm(grads, cfg_.grad_clip);
    opt_.step(student_, grads, lr_scale);
    if (domain) dc_opt_.step(dc_, dc_grads, lr_scale);
    if (teacher_ready_) ema_update_inplace(teacher_, student_, cfg_.ema);
    return rep;
  }

  [[noreturn]] void dump_and_abort(int epoch, const LossReport& rep) {
    const fs::path dump = fs::path(cfg_.out_dir) / "nan_dump.json";
    nlohmann::json j{{"step", step_},       {"epoch", epoch},       {"ls_cls", rep.ls_cls}, {"ls_reg", rep.ls_reg},
                     {"ls_obj", rep.ls_obj}, {"lu_cls", rep.lu_cls}, {"lu_reg", rep.lu_reg}, {"lu_obj", rep.lu_obj},
                     {"l_da", rep.l_da},     {"thresholds", thresholds_json(th_)}};
    std::ofstream(dump) << j.dump(1) << '\n';
    throw NumericError("non-finite loss at step " + std::to_string(step_) + " (dump written to " + dump.string() + ")");
  }

  EvalReport evaluate_current() const {
    const ParamSet<Scalar>& params = teacher_ready_ ? teacher_ : student_;
    std::vector<EvalImage> images;
    const NmsConfig nms_cfg{cfg_.test_score_thresh, cfg_.nms_iou};
    for (const auto& img : data_.eval) {
      images.push_back({detect(params, arch_, img.pixels, nms_cfg, static_cast<std::size_t>(cfg_.max_det)), img.labels});
    }
    return evaluate_detections(images, cfg_.num_classes);
  }

  fs::path save(const fs::path& out, int epoch) {
    Checkpoint ckpt;
    ckpt.header = {{"arch", arch_to_json(arch_)},
                   {"config", cfg_.to_json()},
                   {"epoch", epoch},
                   {"step", step_},
                   {"teacher_ready", teacher_ready_},
                   {"thresholds", thresholds_json(th_)}};
    ckpt.groups["student"] = cast_params<double>(student_);
    ckpt.groups["momentum.student"] = cast_params<double>(opt_.velocity());
    if (teacher_ready_) ckpt.groups["teacher"] = cast_params<double>(teacher_);
    if (plan_.domain) {
      ckpt.groups["dc"] = cast_params<double>(dc_);
      ckpt.groups["momentum.dc"] = cast_params<double>(dc_opt_.velocity());
    }
    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
    const fs::path path = out / "checkpoints" / name;
    save_checkpoint(ckpt, path);
    written_.push_back(path);
    if (cfg_.keep_checkpoints > 0) {
      while (written_.size() > static_cast<std::size_t>(cfg_.keep_checkpoints)) {
        fs::remove(written_.front());
        written_.pop_front();
      }
    }
    return path;
  }

  int restore(const fs::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const auto diff = arch_diff(arch_to_json(arch_), ckpt.header.at("arch"));
    if (!diff.empty()) {
      std::string msg = "checkpoint architecture does not match the configuration:";
      for (const auto& d : diff) msg += "\n  " + d;
      throw ConfigError(msg);
    }
    auto take = [&](const std::string& group, ParamSet<Scalar>& into) {
      const auto it = ckpt.groups.find(group);
      if (it == ckpt.groups.end()) throw DataError(path.string() + ": missing group " + group);
      ParamSet<Scalar> loaded = cast_params<Scalar>(it->second);
      check_same_structure(into, loaded, group);
      into = std::move(loaded);
    };
    take("student", student_);
    ParamSet<Scalar> vel = zeros_like(student_);
    take("momentum.student", vel);
    opt_.velocity() = std::move(vel);
    teacher_ready_ = ckpt.header.at("teacher_ready").get<bool>();
    if (teacher_ready_) {
      teacher_ = student_;
      take("teacher", teacher_);
    }
    if (plan_.domain && ckpt.has("dc")) {
      take("dc", dc_);
      ParamSet<Scalar> dvel = zeros_like(dc_);
      take("momentum.dc", dvel);
      dc_opt_.velocity() = std::move(dvel);
    }
    th_ = thresholds_from_json(ckpt.header.at("thresholds"));
    step_ = ckpt.header.at("step").get<std::int64_t>();
    return ckpt.header.at("epoch").get<int>() + 1;
  }

  const RunConfig& cfg_;
  const TrainData& data_;
  const TrainOptions& opts_;
  DetectorArch arch_;
  std::vector<GridDims> dims_;
  StackSpec dc_spec_;
  ModePlan plan_;
  ParamSet<Scalar> student_, teacher_, dc_;
  Sgd<Scalar> opt_, dc_opt_;
  Thresholds th_;
  bool teacher_ready_ = false;
  std::int64_t step_ = 0;
  EpochStats stats_;
  std::mt19937_64 rrng_;
  std::ofstream metrics_, eval_csv_, thr_log_;
  std::deque<fs::path> written_;
};

}  // namespace

TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainOptions& opts) {
  cfg.validate();
  if (cfg.precision == Precision::kFloat64) return Trainer<double>(cfg, data, opts).run();
  return Trainer<float>(cfg, data, opts).run();
}

TrainResult train(const RunConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const TrainData data = load_train_data(cfg);
  return train(cfg, data, opts);
}

LoadedModel load_model(const fs::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel m;
  m.header = ckpt.header;
  try {
    m.arch = arch_from_json(ckpt.header.at("arch"));
    m.config = config_from_json(ckpt.header.at("config"));
    m.thresholds = thresholds_from_json(ckpt.header.at("thresholds"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(checkpoint.string() + ": malformed header: " + e.what());
  }
  const auto diff = arch_diff(arch_to_json(m.arch), ckpt.header.at("arch"));
  if (!diff.empty()) throw DataError(checkpoint.string() + ": inconsistent architecture record");
  m.is_teacher = ckpt.has("teacher");
  const auto it = ckpt.groups.find(m.is_teacher ? "teacher" : "student");
  if (it == ckpt.groups.end()) throw DataError(checkpoint.string() + ": no model weights");
  m.params = it->second;
  auto rng = seeded_rng(0);
  const auto reference = init_detector<double>(m.arch, rng);
  check_same_structure(reference, m.params, "checkpoint weights");
  return m;
}

EvalReport evaluate_model(const LoadedModel& model, std::span<const LabeledImage> images) {
  const NmsConfig nms_cfg{model.config.test_score_thresh, model.config.nms_iou};
  const auto max_det = static_cast<std::size_t>(model.config.max_det);
  std::vector<EvalImage> eval;
  if (model.config.precision == Precision::kFloat32) {
    const auto params = cast_params<float>(model.params);
    for (const auto& img : images) eval.push_back({detect(params, model.arch, img.pixels, nms_cfg, max_det), img.labels});
  } else {
    for (const auto& img : images) {
      eval.push_back({detect(model.params, model.arch, img.pixels, nms_cfg, max_det), img.labels});
    }
  }
  return evaluate_detections(eval, model.arch.num_classes);
}

namespace {

std::vector<LabeledImage> load_split(const fs::path& annotations, int num_classes) {
  if (!fs::exists(annotations)) throw DataError("annotation file not found: " + annotations.string());
  const Annotations ann = load_annotations(annotations);
  if (static_cast<int>(ann.categories.size()) != num_classes) {
    throw ConfigError("class-count mismatch: checkpoint has " + std::to_string(num_classes) + " classes, " +
                      annotations.string() + " has " + std::to_string(ann.categories.size()));
  }
  return load_images(ann, annotations.parent_path() / "images");
}

}  // namespace

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& annotations) {
  const LoadedModel model = load_model(checkpoint);
  const auto images = load_split(annotations, model.arch.num_classes);
  return evaluate_model(model, images);
}

nlohmann::json AnalysisReport::to_json() const {
  return {{"stats", et::to_json(stats)}, {"thresholds", thresholds_json(thresholds)}, {"trajectory", trajectory}};
}

std::string AnalysisReport::to_csv() const {
  std::string out = "tag,count,tp,loc_fp,cls_fp,tp_fraction,loc_fp_fraction,cls_fp_fraction\n";
  for (PseudoTag tag : {PseudoTag::kReliable, PseudoTag::kUncertain, PseudoTag::kBackground}) {
    const TagStats& t = stats.of(tag);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%.9g,%.9g,%.9g\n", tag_name(tag), t.count, t.tp, t.loc_fp,
                  t.cls_fp, t.tp_fraction(), t.loc_fp_fraction(), t.cls_fp_fraction());
    out += buf;
  }
  return out;
}

AnalysisReport analyze_checkpoint(const fs::path& checkpoint, const fs::path& gt_annotations,
                                  const std::optional<Thresholds>& override_thresholds,
                                  const std::optional<fs::path>& threshold_log) {
  if (!fs::exists(gt_annotations)) {
    throw DataError("held-back ground truth not found: " + gt_annotations.string());
  }
  const LoadedModel model = load_model(checkpoint);
  const auto images = load_split(gt_annotations, model.arch.num_classes);
  AnalysisReport report;
  report.thresholds = override_thresholds ? *override_thresholds : model.thresholds;
  report.thresholds.validate();
  if (static_cast<int>(report.thresholds.tau1.size()) != model.arch.num_classes) {
    throw ConfigError("threshold count does not match the class count");
  }
  const NmsConfig nms_cfg{model.config.train_score_thresh, model.config.nms_iou};
  const auto cap = static_cast<std::size_t>(model.config.max_pseudo);
  const auto fparams = cast_params<float>(model.params);
  for (const auto& img : images) {
    const auto dets = model.config.precision == Precision::kFloat32
                          ? detect(fparams, model.arch, img.pixels, nms_cfg, cap)
                          : detect(model.params, model.arch, img.pixels, nms_cfg, cap);
    const auto pseudo = tag_detections(dets, report.thresholds, cap);
    report.stats.merge(pseudo_stats(pseudo, img.labels));
  }
  if (threshold_log && fs::exists(*threshold_log)) {
    std::ifstream in(*threshold_log);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        report.trajectory.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(threshold_log->string() + ": malformed line: " + e.what());
      }
    }
  }
  return report;
}

}  // namespace et
