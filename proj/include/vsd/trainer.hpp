#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "vsd/augment.hpp"
#include "vsd/checkpoint.hpp"
#include "vsd/config.hpp"
#include "vsd/distill.hpp"
#include "vsd/ema.hpp"
#include "vsd/errors.hpp"
#include "vsd/model.hpp"
#include "vsd/optimizer.hpp"
#include "vsd/schedule.hpp"
#include "vsd/video_store.hpp"

namespace vsd {

struct MetricsRow {
  long step = 0;  // 1-based in the CSV
  int epoch = 0;
  double loss_total = 0.0;
  double loss_dense = 0.0;
  double loss_global = 0.0;
  double lr = 0.0;
  double ema_momentum = 0.0;
  double teacher_temp = 0.0;
  double wall_time_s = 0.0;
};

/// Step-flushed CSV writer with a fixed column contract.
class MetricsWriter {
 public:
  static constexpr const char* kHeader =
      "step,epoch,loss_total,loss_dense,loss_global,lr,ema_momentum,teacher_temp,"
      "wall_time_s";

  MetricsWriter(const std::filesystem::path& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot open metrics file " + path.string());
    if (!append || std::filesystem::file_size(path) == 0) out_ << kHeader << "\n";
  }

  void write(const MetricsRow& r) {
    out_ << r.step << ',' << r.epoch << ',' << fmt(r.loss_total) << ',' << fmt(r.loss_dense)
         << ',' << fmt(r.loss_global) << ',' << fmt(r.lr) << ',' << fmt(r.ema_momentum)
         << ',' << fmt(r.teacher_temp) << ',' << fmt(r.wall_time_s) << "\n";
    out_.flush();
  }

 private:
  static std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
  }

  std::ofstream out_;
};

/// Mutable per-run training state. The optimizer holds pointers into the
/// student, so instances are pinned in place.
template <class S>
struct TrainState {
  RunConfig cfg;
  LossMode loss_mode;
  BaselineMode baseline;
  long steps_per_epoch = 0;
  long total_steps = 0;
  StudentModel<S> student;
  TeacherModel<S> teacher;
  CenterState<S> center;
  AdamW<S> optimizer;
  long step = 0;

  explicit TrainState(const RunConfig& rc)
      : cfg(validated(rc)),
        loss_mode(parse_loss_mode(rc.loss_mode)),
        baseline(parse_baseline_mode(rc.baseline_mode)),
        steps_per_epoch(rc.clips_per_epoch / rc.batch_size),
        total_steps(static_cast<long>(rc.epochs) * steps_per_epoch),
        student(model_config(rc)),
        teacher(model_config(rc)),
        center(rc.num_prototypes, rc.center_momentum),
        optimizer(bound_params(),
                  AdamWConfig{rc.adam_beta1, rc.adam_beta2, rc.adam_eps,
                              rc.grad_clip_norm}) {}

  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  /// Fresh random student, teacher as its exact copy.
  void init_params() {
    Rng rng(mix_seed(cfg.seed, {0x696e6974ULL}));
    student.init(rng);
    copy_shared_to_teacher(student, teacher);
  }

  int epoch() const { return static_cast<int>(step / steps_per_epoch); }

 private:
  static RunConfig validated(RunConfig rc) {
    validate(rc);
    return rc;
  }

  /// Baselines never touch the predictor, so it stays out of the optimizer
  /// and keeps its initialization bitwise.
  std::vector<Param<S>*> bound_params() {
    std::vector<Param<S>*> ps;
    auto grab = [&](Param<S>& p) { ps.push_back(&p); };
    if (baseline == BaselineMode::kOurs)
      student.visit(grab);
    else
      student.visit_shared(grab);
    return ps;
  }
};

template <class S>
MatX<S> vstack(const std::vector<MatX<S>>& mats) {
  Eigen::Index rows = 0;
  for (const auto& m : mats) rows += m.rows();
  if (rows == 0) return MatX<S>();
  MatX<S> out(rows, mats.front().cols());
  Eigen::Index at = 0;
  for (const auto& m : mats) {
    out.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  return out;
}

/// Losses of one batch plus the teacher score rows the center update needs.
template <class S>
struct BatchResult {
  double dense = 0.0;
  double global = 0.0;
  double total = 0.0;
  MatX<S> teacher_cls_rows;
  MatX<S> teacher_patch_rows;
  long student_passes = 0;  // backbone forward passes taking gradients
  long teacher_passes = 0;
};

namespace detail {

/// Teacher forward on one image: no gradient state is touched; returns the
/// full (P+1) x C score matrix.
template <class S>
MatX<S> teacher_scores(TeacherModel<S>& teacher, const Image<S>& img) {
  typename Vit<S>::Cache bc;
  const TokenGrid<S> tg = teacher.backbone.forward(img, bc);
  typename ProjectionHead<S>::Cache pc;
  return teacher.projection.forward(tg.tokens, pc);
}

}  // namespace detail

/// Forward and backward for one batch in next-frame mode, accumulating into
/// the student's gradient buffers (which are zeroed first). Touches neither
/// the optimizer, the center, the teacher weights, nor the step counter.
template <class S>
BatchResult<S> accumulate_gradients(TrainState<S>& st, const std::vector<ViewSet<S>>& batch,
                                    double teacher_temp) {
  if (batch.empty()) throw NoData("empty batch");
  zero_grads<S>(st.student);
  const Temperatures temps{st.cfg.student_temp, teacher_temp};
  const auto [w_dense, w_global] = loss_weights(st.loss_mode);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const int d = st.cfg.embed_dim;

  BatchResult<S> out;
  std::vector<MatX<S>> cls_rows, patch_rows;

  for (const ViewSet<S>& views : batch) {
    const std::size_t k = views.globals.size();
    if (k < 2) throw NoPairs("clip has " + std::to_string(k) + " frames, need >= 2");
    if (views.locals.size() != k - 1)
      throw NoLocalViews("expected local views for every frame after the first");

    // Teacher encodes the global views of frames 1..K-1.
    std::vector<MatX<S>> t_patch(k - 1), t_cls(k - 1);
    for (std::size_t j = 1; j < k; ++j) {
      const MatX<S> scores = detail::teacher_scores(st.teacher, views.globals[j]);
      ++out.teacher_passes;
      t_cls[j - 1] = scores.row(0);
      t_patch[j - 1] = scores.bottomRows(scores.rows() - 1);
      cls_rows.push_back(t_cls[j - 1]);
      patch_rows.push_back(t_patch[j - 1]);
    }

    // Student predicts next-frame patch scores from frames 0..K-2.
    struct DenseCtx {
      typename Vit<S>::Cache bc;
      typename PredictorHead<S>::Cache pr;
      typename ProjectionHead<S>::Cache pj;
      Eigen::Index tokens = 0;
    };
    std::vector<DenseCtx> dctx(k - 1);
    std::vector<MatX<S>> s_pred(k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const TokenGrid<S> tg = st.student.backbone.forward(views.globals[j], dctx[j].bc);
      ++out.student_passes;
      const MatX<S> pred = st.student.predictor.forward(tg.tokens, dctx[j].pr);
      dctx[j].tokens = pred.rows();
      s_pred[j] =
          st.student.projection.forward(pred.bottomRows(pred.rows() - 1), dctx[j].pj);
    }
    const LossGrad<S> dl = dense_loss(t_patch, s_pred, temps, st.center);

    // Student encodes every local view of frames 1..K-1, [CLS] only.
    struct LocalCtx {
      typename Vit<S>::Cache bc;
      typename ProjectionHead<S>::Cache pj;
      Eigen::Index tokens = 0;
    };
    const std::size_t l_count = views.locals.front().size();
    std::vector<std::vector<LocalCtx>> lctx(k - 1, std::vector<LocalCtx>(l_count));
    std::vector<std::vector<MatX<S>>> s_loc(k - 1, std::vector<MatX<S>>(l_count));
    for (std::size_t j = 0; j + 1 < k; ++j)
      for (std::size_t l = 0; l < views.locals[j].size(); ++l) {
        const TokenGrid<S> tg =
            st.student.backbone.forward(views.locals[j][l], lctx[j][l].bc);
        ++out.student_passes;
        lctx[j][l].tokens = tg.tokens.rows();
        s_loc[j][l] =
            st.student.projection.forward(MatX<S>(tg.tokens.row(0)), lctx[j][l].pj);
      }
    const LossGrad<S> gl = global_loss(t_cls, s_loc, temps, st.center);

    out.dense += dl.value * inv_batch;
    out.global += gl.value * inv_batch;

    if (w_dense > 0.0)
      for (std::size_t j = 0; j + 1 < k; ++j) {
        const MatX<S> dscores = dl.dstudent[j] * static_cast<S>(w_dense * inv_batch);
        const MatX<S> dz = st.student.projection.backward(dctx[j].pj, dscores);
        MatX<S> dpred = MatX<S>::Zero(dctx[j].tokens, d);
        dpred.bottomRows(dz.rows()) = dz;
        const MatX<S> dtok = st.student.predictor.backward(dctx[j].pr, dpred);
        st.student.backbone.backward(dctx[j].bc, dtok);
      }
    if (w_global > 0.0)
      for (std::size_t j = 0; j + 1 < k; ++j)
        for (std::size_t l = 0; l < l_count; ++l) {
          const MatX<S> dcls =
              gl.dstudent[j * l_count + l] * static_cast<S>(w_global * inv_batch);
          const MatX<S> dz = st.student.projection.backward(lctx[j][l].pj, dcls);
          MatX<S> dtok = MatX<S>::Zero(lctx[j][l].tokens, d);
          dtok.row(0) = dz.row(0);
          st.student.backbone.backward(lctx[j][l].bc, dtok);
        }
  }

  out.total = total_loss(out.dense, out.global, st.loss_mode);
  out.teacher_cls_rows = vstack(cls_rows);
  out.teacher_patch_rows = vstack(patch_rows);
  return out;
}

/// Two full-frame views plus small crops for the single-frame and
/// two-frame self-distillation baselines.
template <class S>
struct BaselineViews {
  std::vector<Image<S>> globals;  // always 2
  std::vector<Image<S>> locals;
};

/// dino_frames: both globals and all locals from one frame, no pre-crop.
/// dino_precrop: same but inside one shared pre-crop window.
/// time_aug: shared pre-crop, one global per frame, locals alternating
/// between the two frames.
template <class S>
BaselineViews<S> make_baseline_views(const std::vector<Image<S>>& frames,
                                     const Rng& clip_rng, const AugmentConfig& cfg,
                                     BaselineMode mode) {
  if (frames.empty()) throw NoFrames("baseline views need at least one frame");
  if (mode == BaselineMode::kOurs)
    throw ConfigError("baseline views requested in next-frame mode");
  if (mode == BaselineMode::kTimeAug && frames.size() < 2)
    throw NoFrames("time-shifted baseline needs two frames");

  Rng geom = clip_rng.fork(0x67656fULL);
  std::vector<Image<S>> sources;
  if (mode == BaselineMode::kDinoFrames) {
    sources.push_back(frames[0]);
  } else {
    const Rect pre =
        draw_crop_rect(geom, frames[0].width(), frames[0].height(), cfg.precrop_area_min,
                       cfg.precrop_area_max, cfg.aspect_min, cfg.aspect_max, 8);
    for (const auto& f : frames) sources.push_back(crop(f, pre));
  }
  auto source_for = [&](std::size_t view_idx) -> const Image<S>& {
    if (mode == BaselineMode::kTimeAug) return sources[view_idx % 2];
    return sources[0];
  };

  BaselineViews<S> out;
  for (std::size_t g = 0; g < 2; ++g) {
    const Image<S>& src = source_for(g);
    const Rect r = draw_crop_rect(geom, src.width(), src.height(), cfg.global_area_min,
                                  cfg.global_area_max, cfg.aspect_min, cfg.aspect_max, 4);
    Image<S> v = crop(src, r);
    if (geom.bernoulli(cfg.hflip_prob)) v = hflip(v);
    out.globals.push_back(resize_bilinear(v, cfg.global_size, cfg.global_size));
  }
  for (int l = 0; l < cfg.local_views; ++l) {
    const Image<S>& src = source_for(static_cast<std::size_t>(l));
    const Rect r = draw_crop_rect(geom, src.width(), src.height(), cfg.local_area_min,
                                  cfg.local_area_max, cfg.aspect_min, cfg.aspect_max, 2);
    Image<S> v = crop(src, r);
    if (geom.bernoulli(cfg.hflip_prob)) v = hflip(v);
    out.locals.push_back(resize_bilinear(v, cfg.local_size, cfg.local_size));
  }

  std::uint64_t view_index = 0;
  auto colorize = [&](Image<S>& view, const ColorAugment& recipe) {
    Rng view_rng = clip_rng.fork(0x636f6cULL, view_index);
    ++view_index;
    if (cfg.color_enabled) view = color_augment(view, view_rng, recipe);
  };
  for (std::size_t g = 0; g < out.globals.size(); ++g)
    colorize(out.globals[g], global_color_recipe(cfg, static_cast<int>(g)));
  for (auto& v : out.locals) colorize(v, local_color_recipe(cfg));
  return out;
}

/// Plain two-global self-distillation: each teacher global view teaches every
/// other student view (the opposite global plus all locals). No predictor,
/// no dense term.
template <class S>
BatchResult<S> accumulate_baseline_gradients(TrainState<S>& st,
                                             const std::vector<BaselineViews<S>>& batch,
                                             double teacher_temp) {
  if (batch.empty()) throw NoData("empty batch");
  zero_grads<S>(st.student);
  const Temperatures temps{st.cfg.student_temp, teacher_temp};
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const int d = st.cfg.embed_dim;

  BatchResult<S> out;
  std::vector<MatX<S>> cls_rows;

  for (const BaselineViews<S>& views : batch) {
    if (views.globals.size() != 2)
      throw ShapeError("baseline sample needs exactly 2 global views");
    const std::size_t l_count = views.locals.size();
    if (l_count == 0) throw NoLocalViews("baseline sample has no local views");

    std::vector<MatX<S>> t_cls(2);
    for (std::size_t g = 0; g < 2; ++g) {
      const MatX<S> scores = detail::teacher_scores(st.teacher, views.globals[g]);
      ++out.teacher_passes;
      t_cls[g] = scores.row(0);
      cls_rows.push_back(t_cls[g]);
    }

    struct ViewCtx {
      typename Vit<S>::Cache bc;
      typename ProjectionHead<S>::Cache pj;
      Eigen::Index tokens = 0;
      MatX<S> scores;
    };
    auto student_cls = [&](const Image<S>& img, ViewCtx& ctx) {
      const TokenGrid<S> tg = st.student.backbone.forward(img, ctx.bc);
      ++out.student_passes;
      ctx.tokens = tg.tokens.rows();
      ctx.scores = st.student.projection.forward(MatX<S>(tg.tokens.row(0)), ctx.pj);
    };
    ViewCtx g_ctx[2];
    std::vector<ViewCtx> l_ctx(l_count);
    for (std::size_t g = 0; g < 2; ++g) student_cls(views.globals[g], g_ctx[g]);
    for (std::size_t l = 0; l < l_count; ++l) student_cls(views.locals[l], l_ctx[l]);

    // Teacher view g pairs with the opposite student global plus all locals.
    std::vector<std::vector<MatX<S>>> student_sets(2);
    for (std::size_t g = 0; g < 2; ++g) {
      student_sets[g].push_back(g_ctx[1 - g].scores);
      for (std::size_t l = 0; l < l_count; ++l)
        student_sets[g].push_back(l_ctx[l].scores);
    }
    const LossGrad<S> gl = global_loss(t_cls, student_sets, temps, st.center);
    out.global += gl.value * inv_batch;

    const std::size_t per_frame = 1 + l_count;
    auto backprop_view = [&](ViewCtx& ctx, const MatX<S>& dcls) {
      const MatX<S> dz =
          st.student.projection.backward(ctx.pj, dcls * static_cast<S>(inv_batch));
      MatX<S> dtok = MatX<S>::Zero(ctx.tokens, d);
      dtok.row(0) = dz.row(0);
      st.student.backbone.backward(ctx.bc, dtok);
    };
    backprop_view(g_ctx[1], gl.dstudent[0 * per_frame + 0]);
    backprop_view(g_ctx[0], gl.dstudent[1 * per_frame + 0]);
    for (std::size_t l = 0; l < l_count; ++l) {
      const MatX<S> sum =
          gl.dstudent[0 * per_frame + 1 + l] + gl.dstudent[1 * per_frame + 1 + l];
      backprop_view(l_ctx[l], sum);
    }
  }

  out.dense = 0.0;
  out.total = out.global;
  out.teacher_cls_rows = vstack(cls_rows);
  out.teacher_patch_rows = MatX<S>();
  return out;
}

namespace detail {

template <class S>
void apply_update(TrainState<S>& st, const BatchResult<S>& result, double lr, double wd,
                  double ema_m) {
  // Weight-normalized output layer sits out the first epoch(s).
  std::set<const Param<S>*> frozen;
  if (st.epoch() < st.cfg.freeze_output_epochs)
    st.student.projection.visit_output_layer([&](Param<S>& p) {
      p.grad.setZero();
      frozen.insert(&p);
    });
  st.optimizer.step(lr, wd,
                    [&](const Param<S>& p) { return frozen.count(&p) > 0; });

  if (st.cfg.shared_center) {
    std::vector<MatX<S>> all = {result.teacher_cls_rows};
    if (result.teacher_patch_rows.size() > 0) all.push_back(result.teacher_patch_rows);
    st.center = update_center(st.center, vstack(all), CenterKind::kCls);
    st.center.patch = st.center.cls;
  } else {
    st.center = update_center(st.center, result.teacher_cls_rows, CenterKind::kCls);
    if (result.teacher_patch_rows.size() > 0)
      st.center = update_center(st.center, result.teacher_patch_rows, CenterKind::kPatch);
  }

  ema_update(st.teacher, st.student, ema_m);
  ++st.step;
}

template <class S>
[[noreturn]] void diverged(const TrainState<S>& st, const BatchResult<S>& result,
                           double lr) {
  std::string msg = "non-finite loss at step " + std::to_string(st.step + 1) +
                    " (epoch " + std::to_string(st.epoch()) + "): total=" +
                    std::to_string(result.total) + " dense=" + std::to_string(result.dense) +
                    " global=" + std::to_string(result.global) + " lr=" + std::to_string(lr);
  throw DivergenceError(msg);
}

template <class S>
MetricsRow finish_step(TrainState<S>& st, const BatchResult<S>& result) {
  const long s = st.step;
  const long warmup_steps = static_cast<long>(st.cfg.warmup_epochs) * st.steps_per_epoch;
  const double peak_lr = st.cfg.base_lr * st.cfg.batch_size / 256.0;
  const double lr =
      learning_rate_at(s, st.total_steps, warmup_steps, peak_lr, st.cfg.final_lr);
  const double wd = weight_decay_at(s, st.total_steps, st.cfg.weight_decay_start,
                                    st.cfg.weight_decay_end);
  const double ema_m = momentum_at(s, st.total_steps, st.cfg.ema_momentum_base);
  const double teacher_temp =
      teacher_temp_at(st.epoch(), st.cfg.teacher_temp_warmup_epochs,
                      st.cfg.teacher_temp_start, st.cfg.teacher_temp_end);

  if (!std::isfinite(result.total) || !std::isfinite(result.dense) ||
      !std::isfinite(result.global))
    diverged(st, result, lr);

  MetricsRow row;
  row.epoch = st.epoch();
  apply_update(st, result, lr, wd, ema_m);
  row.step = st.step;  // post-increment: first step reports 1
  row.loss_total = result.total;
  row.loss_dense = result.dense;
  row.loss_global = result.global;
  row.lr = lr;
  row.ema_momentum = ema_m;
  row.teacher_temp = teacher_temp;
  return row;
}

}  // namespace detail

/// One optimization step in next-frame mode: gradients, clip, update, center
/// update, teacher EMA. Throws DivergenceError on a non-finite loss.
template <class S>
MetricsRow train_step(TrainState<S>& st, const std::vector<ViewSet<S>>& batch) {
  const double teacher_temp =
      teacher_temp_at(st.epoch(), st.cfg.teacher_temp_warmup_epochs,
                      st.cfg.teacher_temp_start, st.cfg.teacher_temp_end);
  const BatchResult<S> result = accumulate_gradients(st, batch, teacher_temp);
  return detail::finish_step(st, result);
}

/// One optimization step in a baseline mode (global loss only).
template <class S>
MetricsRow baseline_step(TrainState<S>& st, const std::vector<BaselineViews<S>>& batch) {
  if (st.baseline == BaselineMode::kOurs)
    throw ConfigError("baseline_step called in next-frame mode");
  const double teacher_temp =
      teacher_temp_at(st.epoch(), st.cfg.teacher_temp_warmup_epochs,
                      st.cfg.teacher_temp_start, st.cfg.teacher_temp_end);
  const BatchResult<S> result = accumulate_baseline_gradients(st, batch, teacher_temp);
  return detail::finish_step(st, result);
}

/// Serialize the complete training state: both networks, predictor, center,
/// optimizer slots, and the step counter, stamped with the config hash.
template <class S>
void save_train_checkpoint(const std::filesystem::path& path, TrainState<S>& st) {
  ArrayMap arrays;
  pack_group<S>("student_backbone", st.student.backbone, arrays);
  pack_group<S>("predictor", st.student.predictor, arrays);
  pack_group<S>("student_projection", st.student.projection, arrays);
  pack_group<S>("teacher_backbone", st.teacher.backbone, arrays);
  pack_group<S>("teacher_projection", st.teacher.projection, arrays);
  arrays["center_state/cls"] = st.center.cls.template cast<double>();
  arrays["center_state/patch"] = st.center.patch.template cast<double>();
  arrays["center_state/momentum"] = scalar_array(st.center.momentum);
  for (const auto& [k, v] : st.optimizer.state()) arrays["optimizer_state/" + k] = v;
  arrays["step"] = scalar_array(static_cast<double>(st.step));
  save_arrays(path, arrays, config_hash(st.cfg));
}

/// Restore a checkpoint written by save_train_checkpoint. Returns the stored
/// config hash; shape or key mismatches raise CheckpointError.
template <class S>
std::uint64_t load_train_checkpoint(const std::filesystem::path& path, TrainState<S>& st) {
  std::uint64_t hash = 0;
  const ArrayMap arrays = load_arrays(path, &hash);
  unpack_group<S>("student_backbone", st.student.backbone, arrays);
  unpack_group<S>("predictor", st.student.predictor, arrays);
  unpack_group<S>("student_projection", st.student.projection, arrays);
  unpack_group<S>("teacher_backbone", st.teacher.backbone, arrays);
  unpack_group<S>("teacher_projection", st.teacher.projection, arrays);

  auto center_vec = [&](const std::string& key) {
    auto it = arrays.find(key);
    if (it == arrays.end()) throw CheckpointError("missing array " + key);
    if (it->second.cols() != 1 || it->second.rows() != st.center.cls.size())
      throw CheckpointError("array " + key + " has the wrong shape");
    return VecX<S>(it->second.col(0).template cast<S>());
  };
  st.center.cls = center_vec("center_state/cls");
  st.center.patch = center_vec("center_state/patch");
  st.center.momentum = fetch_scalar(arrays, "center_state/momentum");

  std::map<std::string, MatX<double>> opt_state;
  for (const auto& [k, v] : arrays)
    if (k.starts_with("optimizer_state/")) opt_state[k.substr(16)] = v;
  st.optimizer.load_state(opt_state);

  st.step = static_cast<long>(fetch_scalar(arrays, "step"));
  if (st.step < 0 || st.step > st.total_steps)
    throw CheckpointError("checkpoint step " + std::to_string(st.step) +
                          " outside this run's range");
  return hash;
}

struct PretrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_csv;
  double final_loss = 0.0;
  std::uint64_t config_hash = 0;
};

namespace detail {

inline void point_symlink(const std::filesystem::path& link,
                          const std::filesystem::path& target_name) {
  std::error_code ec;
  std::filesystem::remove(link, ec);
  std::filesystem::create_symlink(target_name, link, ec);
  if (ec)  // e.g. filesystems without symlink support: fall back to a copy
    std::filesystem::copy_file(link.parent_path() / target_name, link,
                               std::filesystem::copy_options::overwrite_existing);
}

}  // namespace detail

/// Full pretraining loop: epochs x (clips_per_epoch / batch_size) steps,
/// per-step metrics, per-epoch checkpoints with a "latest" symlink. Passing
/// `resume` continues from a checkpoint written by the same configuration.
template <class S>
PretrainResult run_pretraining_t(const RunConfig& cfg, const FrameStore& store,
                                 const std::filesystem::path& resume = {}) {
  validate(cfg);
  if (cfg.out_dir.empty()) throw ConfigError("out_dir: must be set for pretraining");
  const std::filesystem::path out_dir = cfg.out_dir;
  const std::filesystem::path ckpt_dir = out_dir / "checkpoints";
  std::filesystem::create_directories(ckpt_dir);

  TrainState<S> st(cfg);
  const std::uint64_t hash = config_hash(cfg);
  bool resuming = false;
  if (resume.empty()) {
    st.init_params();
  } else {
    const std::uint64_t stored = load_train_checkpoint(resume, st);
    if (stored != hash)
      throw CheckpointError("checkpoint " + resume.string() +
                            " was written by a different configuration");
    resuming = true;
  }

  save_run_config(cfg, out_dir / "config_resolved.cfg");

  const BaselineMode mode = st.baseline;
  int sample_delta = cfg.delta;
  int sample_frames = cfg.clip_frames;
  if (mode == BaselineMode::kDinoFrames || mode == BaselineMode::kDinoPrecrop) {
    sample_delta = 1;
    sample_frames = 1;
  } else if (mode == BaselineMode::kTimeAug) {
    sample_delta = cfg.time_aug_delta;
    sample_frames = 2;
  }
  EpochSampler sampler(store, sample_delta, sample_frames, cfg.clips_per_epoch,
                       mix_seed(cfg.seed, {0x73616d70ULL}));
  const AugmentConfig aug = augment_config(cfg);

  // On resume, drop metric rows past the checkpoint so the finished file is
  // identical to one from an uninterrupted run.
  const auto metrics_path = out_dir / "metrics.csv";
  if (resuming && std::filesystem::exists(metrics_path)) {
    std::vector<std::string> keep;
    {
      std::ifstream in(metrics_path);
      std::string line;
      while (std::getline(in, line) &&
             keep.size() < static_cast<std::size_t>(st.step) + 1)
        keep.push_back(line);
    }
    std::ofstream out(metrics_path, std::ios::trunc);
    for (const auto& line : keep) out << line << "\n";
  }
  MetricsWriter metrics(metrics_path,
                        resuming && std::filesystem::exists(metrics_path));
  const auto t0 = std::chrono::steady_clock::now();

  auto load_clip = [&](const Clip& clip) {
    std::vector<Image<S>> frames;
    for (int idx : clip.indices()) frames.push_back(to_image<S>(store.load_frame(idx)));
    return frames;
  };

  double final_loss = 0.0;
  std::filesystem::path last_ckpt = resume;
  std::vector<Clip> epoch_clips;
  int cached_epoch = -1;
  while (st.step < st.total_steps) {
    const int epoch = st.epoch();
    if (epoch != cached_epoch) {
      epoch_clips = sampler.epoch_clips(epoch);
      cached_epoch = epoch;
    }
    const long pos0 = (st.step % st.steps_per_epoch) * cfg.batch_size;

    MetricsRow row;
    if (mode == BaselineMode::kOurs) {
      std::vector<ViewSet<S>> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        const long pos = pos0 + b;
        const Rng clip_rng(mix_seed(cfg.seed, {0x76696577ULL, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(pos)}));
        batch.push_back(
            make_viewset(load_clip(epoch_clips[static_cast<std::size_t>(pos)]), clip_rng, aug));
      }
      row = train_step(st, batch);
    } else {
      std::vector<BaselineViews<S>> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < cfg.batch_size; ++b) {
        const long pos = pos0 + b;
        const Rng clip_rng(mix_seed(cfg.seed, {0x76696577ULL, static_cast<std::uint64_t>(epoch),
                                               static_cast<std::uint64_t>(pos)}));
        batch.push_back(make_baseline_views(
            load_clip(epoch_clips[static_cast<std::size_t>(pos)]), clip_rng, aug, mode));
      }
      row = baseline_step(st, batch);
    }

    row.wall_time_s =
        cfg.deterministic_timing
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.write(row);
    final_loss = row.loss_total;

    if (st.step % st.steps_per_epoch == 0) {  // epoch boundary just crossed
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.bin",
                    static_cast<int>(st.step / st.steps_per_epoch));
      last_ckpt = ckpt_dir / name;
      save_train_checkpoint(last_ckpt, st);
      detail::point_symlink(ckpt_dir / "latest.bin", name);
    }
  }

  PretrainResult result;
  result.checkpoint = last_ckpt;
  result.metrics_csv = metrics_path;
  result.final_loss = final_loss;
  result.config_hash = hash;
  return result;
}

/// Precision-dispatching front end.
inline PretrainResult run_pretraining(const RunConfig& cfg, const FrameStore& store,
                                      const std::filesystem::path& resume = {}) {
  if (cfg.precision == "single") return run_pretraining_t<float>(cfg, store, resume);
  return run_pretraining_t<double>(cfg, store, resume);
}

}  // namespace vsd
