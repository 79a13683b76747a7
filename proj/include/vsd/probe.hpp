#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vsd/checkpoint.hpp"
#include "vsd/config.hpp"
#include "vsd/errors.hpp"
#include "vsd/image.hpp"
#include "vsd/model.hpp"
#include "vsd/rng.hpp"
#include "vsd/types.hpp"
#include "vsd/video_store.hpp"

namespace vsd {

/// Linear classifier over patch tokens; logits = x * weight + bias.
template <class S>
struct ProbeHead {
  MatX<S> weight;  // d x num_classes
  VecX<S> bias;    // num_classes

  ProbeHead() = default;
  ProbeHead(int dim, int num_classes)
      : weight(MatX<S>::Zero(dim, num_classes)), bias(VecX<S>::Zero(num_classes)) {}

  int num_classes() const { return static_cast<int>(weight.cols()); }

  MatX<S> logits(const MatX<S>& x) const {
    if (x.cols() != weight.rows())
      throw ShapeError("probe features have dim " + std::to_string(x.cols()) + ", head expects " +
                       std::to_string(weight.rows()));
    return (x * weight).rowwise() + bias.transpose();
  }
};

struct ProbeResult {
  std::vector<double> per_class_iou;  // one entry per class; absent classes report 0
  double miou = 0.0;                  // mean IoU over classes present in the ground truth
  double pixel_accuracy = 0.0;
};

/// Largest centered square of a w x h frame.
Rect center_square(int width, int height);

/// Center-crop to a square and scale to side x side (bilinear).
template <class S>
Image<S> center_crop_resize(const Image<S>& img, int side) {
  const Image<S> sq = crop(img, center_square(img.width(), img.height()));
  return resize_bilinear(sq, side, side);
}

/// Label-map counterpart of center_crop_resize (nearest neighbour).
MatXi center_crop_resize_labels(const MatXi& labels, int side);

/// Majority label per patch cell; ties resolve to the lowest class id.
MatXi pool_labels_majority(const MatXi& pixel_labels, int patch_size);

/// Confusion counts over per-pixel maps: row = ground truth, col = prediction.
Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> confusion_matrix(
    const std::vector<MatXi>& pred, const std::vector<MatXi>& gt, int num_classes);

/// IoU_c = TP_c / (TP_c + FP_c + FN_c); mIoU averages over classes with
/// ground-truth pixels. Maps are compared per pixel at identical shapes.
ProbeResult evaluate_miou(const std::vector<MatXi>& pred, const std::vector<MatXi>& gt,
                          int num_classes);

/// Key-value report: per_class_iou, miou, pixel_accuracy, config_hash.
void write_probe_report(const std::filesystem::path& path, const ProbeResult& result,
                        std::uint64_t config_hash);

/// Frozen teacher features for one image already at the encoder input size.
/// Returned tokens hold the P patch rows only (no [CLS] row).
template <class S>
TokenGrid<S> extract_features(const TeacherModel<S>& teacher, const Image<S>& image) {
  const int side = teacher.backbone.cfg.image_size;
  if (image.height() != side || image.width() != side)
    throw ShapeError("probe image is " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()) + ", encoder expects " + std::to_string(side) +
                     "x" + std::to_string(side));
  typename Vit<S>::Cache c;
  const TokenGrid<S> full = teacher.backbone.forward(image, c);
  TokenGrid<S> out;
  out.tokens = full.patches();
  out.grid_h = full.grid_h;
  out.grid_w = full.grid_w;
  return out;
}

/// Softmax cross-entropy SGD on a zero-initialized head; fixed learning
/// rate, no momentum, no decay. Batches sample rows with replacement.
template <class S>
ProbeHead<S> train_probe(const MatX<S>& features, const std::vector<int>& labels, int num_classes,
                         int iters = 1000, int batch = 64, double lr = 0.01,
                         std::uint64_t seed = 0) {
  const auto n = features.rows();
  if (n == 0) throw NoData("probe training set is empty");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ShapeError("probe has " + std::to_string(n) + " feature rows but " +
                     std::to_string(labels.size()) + " labels");
  if (num_classes < 1) throw ConfigError("probe num_classes: must be >= 1");
  if (iters < 0) throw ConfigError("probe iters: must be >= 0");
  if (batch < 1) throw ConfigError("probe batch: must be >= 1");
  if (lr <= 0.0) throw ConfigError("probe lr: must be > 0");
  for (const int y : labels)
    if (y < 0 || y >= num_classes)
      throw ShapeError("probe label " + std::to_string(y) + " outside [0, " +
                       std::to_string(num_classes) + ")");

  ProbeHead<S> head(static_cast<int>(features.cols()), num_classes);
  Rng rng(seed);
  MatX<S> x(batch, features.cols());
  for (int it = 0; it < iters; ++it) {
    std::vector<int> idx(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      idx[static_cast<std::size_t>(b)] = static_cast<int>(rng.uniform_int(0, n - 1));
      x.row(b) = features.row(idx[static_cast<std::size_t>(b)]);
    }
    const MatX<S> z = head.logits(x);
    MatX<S> p = (z.colwise() - z.rowwise().maxCoeff()).array().exp();
    const VecX<S> row_sum = p.rowwise().sum();
    p.array().colwise() /= row_sum.array();
    for (int b = 0; b < batch; ++b)
      p(b, labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])]) -= S(1);
    p *= S(1.0 / batch);  // d(mean CE)/dlogits = (softmax - onehot) / batch
    head.weight -= S(lr) * (x.transpose() * p);
    head.bias -= S(lr) * p.colwise().sum().transpose();
  }
  return head;
}

/// Per-row argmax; ties resolve to the lowest class id.
template <class S>
std::vector<int> predict_rows(const ProbeHead<S>& head, const MatX<S>& features) {
  const MatX<S> z = head.logits(features);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < z.cols(); ++c)
      if (z(r, c) > z(r, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

/// Per-cell class map for one frame's patch features (row-major grid order).
template <class S>
MatXi predict_cells(const ProbeHead<S>& head, const TokenGrid<S>& features) {
  if (features.tokens.rows() != features.patch_count())
    throw ShapeError("expected " + std::to_string(features.patch_count()) +
                     " patch rows, got " + std::to_string(features.tokens.rows()));
  const std::vector<int> cls = predict_rows(head, features.tokens);
  MatXi out(features.grid_h, features.grid_w);
  for (int gy = 0; gy < features.grid_h; ++gy)
    for (int gx = 0; gx < features.grid_w; ++gx)
      out(gy, gx) = cls[static_cast<std::size_t>(gy * features.grid_w + gx)];
  return out;
}

/// Frames plus parallel per-pixel label maps (frames/ and labels/ subdirs).
struct LabeledFrames {
  FrameStore frames;
  std::vector<std::filesystem::path> label_paths;

  int count() const { return frames.count(); }
  MatXi load_labels(int index) const;
};

LabeledFrames index_labeled_frames(const std::filesystem::path& frames_dir,
                                   const std::filesystem::path& labels_dir);

/// Convenience for a materialized scene directory (frames/ and labels/).
LabeledFrames index_labeled_frames(const std::filesystem::path& scene_dir);

/// Smallest class count covering every label the probe will touch: max id
/// over the leading train_frames and trailing eval_frames, plus one.
int label_class_count(const LabeledFrames& data, int train_frames, int eval_frames);

/// Features and labels for a contiguous frame range, ready for the probe.
template <class S>
struct ProbeDataset {
  MatX<S> features;              // (frames * P) x d
  std::vector<int> cell_labels;  // frames * P, row-major per frame
  std::vector<MatXi> pixel_gt;   // per frame, side x side after center crop
  int grid_h = 0;
  int grid_w = 0;
};

template <class S>
ProbeDataset<S> build_probe_dataset(const TeacherModel<S>& teacher, const LabeledFrames& data,
                                    int first, int count) {
  if (count < 1 || first < 0 || first + count > data.count())
    throw NoData("probe frame range [" + std::to_string(first) + ", " +
                 std::to_string(first + count) + ") outside store of " +
                 std::to_string(data.count()) + " frames");
  const int side = teacher.backbone.cfg.image_size;
  const int patch = teacher.backbone.cfg.patch_size;
  ProbeDataset<S> out;
  for (int i = first; i < first + count; ++i) {
    const Image<S> img = center_crop_resize(to_image<S>(data.frames.load_frame(i)), side);
    const TokenGrid<S> f = extract_features(teacher, img);
    const MatXi gt = center_crop_resize_labels(data.load_labels(i), side);
    const MatXi cells = pool_labels_majority(gt, patch);
    if (out.features.rows() == 0) {
      out.grid_h = f.grid_h;
      out.grid_w = f.grid_w;
      out.features.resize(static_cast<Eigen::Index>(count) * f.patch_count(), f.dim());
      out.cell_labels.reserve(static_cast<std::size_t>(count) * f.patch_count());
    }
    out.features.middleRows(static_cast<Eigen::Index>(i - first) * f.patch_count(),
                            f.patch_count()) = f.tokens;
    for (int gy = 0; gy < f.grid_h; ++gy)
      for (int gx = 0; gx < f.grid_w; ++gx) out.cell_labels.push_back(cells(gy, gx));
    out.pixel_gt.push_back(gt);
  }
  return out;
}

/// Teacher restored from a training checkpoint; the stored config hash is
/// written to *config_hash when non-null.
template <class S>
TeacherModel<S> load_teacher(const std::filesystem::path& path, const RunConfig& cfg,
                             std::uint64_t* config_hash = nullptr) {
  std::uint64_t h = 0;
  const ArrayMap arrays = load_arrays(path, &h);
  TeacherModel<S> teacher(model_config(cfg));
  unpack_group<S>("teacher_backbone", teacher.backbone, arrays);
  unpack_group<S>("teacher_projection", teacher.projection, arrays);
  if (config_hash) *config_hash = h;
  return teacher;
}

/// Freshly initialized teacher (the no-pretraining control). Seeding matches
/// training initialization, so it equals a run's step-0 teacher.
template <class S>
TeacherModel<S> random_teacher(const RunConfig& cfg) {
  StudentModel<S> student(model_config(cfg));
  Rng rng(mix_seed(cfg.seed, {0x696e6974ULL}));
  student.init(rng);
  TeacherModel<S> teacher(model_config(cfg));
  copy_shared_to_teacher(student, teacher);
  return teacher;
}

template <class S>
struct ProbeRun {
  ProbeHead<S> head;
  ProbeResult result;
};

/// Train on the first probe_train_frames frames, evaluate per-pixel mIoU on
/// the last probe_eval_frames frames. Pixel predictions are the per-cell
/// argmax upsampled to the evaluation resolution (nearest neighbour).
template <class S>
ProbeRun<S> run_probe_t(const RunConfig& cfg, const TeacherModel<S>& teacher,
                        const LabeledFrames& data, int num_classes) {
  validate(cfg);
  if (cfg.probe_train_frames + cfg.probe_eval_frames > data.count())
    throw NoData("probe needs " + std::to_string(cfg.probe_train_frames) + " train + " +
                 std::to_string(cfg.probe_eval_frames) + " eval frames, store has " +
                 std::to_string(data.count()));
  const ProbeDataset<S> train = build_probe_dataset(teacher, data, 0, cfg.probe_train_frames);
  const ProbeDataset<S> eval = build_probe_dataset(
      teacher, data, data.count() - cfg.probe_eval_frames, cfg.probe_eval_frames);

  ProbeRun<S> run;
  run.head = train_probe(train.features, train.cell_labels, num_classes, cfg.probe_iters,
                         cfg.probe_batch, cfg.probe_lr, cfg.probe_seed);

  const int side = teacher.backbone.cfg.image_size;
  const Eigen::Index per_frame = static_cast<Eigen::Index>(eval.grid_h) * eval.grid_w;
  std::vector<MatXi> pred;
  pred.reserve(eval.pixel_gt.size());
  for (std::size_t i = 0; i < eval.pixel_gt.size(); ++i) {
    TokenGrid<S> f;
    f.tokens = eval.features.middleRows(static_cast<Eigen::Index>(i) * per_frame, per_frame);
    f.grid_h = eval.grid_h;
    f.grid_w = eval.grid_w;
    pred.push_back(resize_labels_nearest(predict_cells(run.head, f), side, side));
  }
  run.result = evaluate_miou(pred, eval.pixel_gt, num_classes);
  return run;
}

}  // namespace vsd
