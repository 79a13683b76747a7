#include "vsd/probe.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <vector>

#include "vsd/image_io.hpp"

namespace vsd {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Rect center_square(int width, int height) {
  if (width < 1 || height < 1)
    throw ShapeError("cannot center-crop a " + std::to_string(width) + "x" +
                     std::to_string(height) + " frame");
  const int side = std::min(width, height);
  return Rect{(width - side) / 2, (height - side) / 2, side, side};
}

MatXi center_crop_resize_labels(const MatXi& labels, int side) {
  const Rect r = center_square(static_cast<int>(labels.cols()), static_cast<int>(labels.rows()));
  return resize_labels_nearest(labels.block(r.y, r.x, r.h, r.w), side, side);
}

MatXi pool_labels_majority(const MatXi& pixel_labels, int patch_size) {
  const int h = static_cast<int>(pixel_labels.rows());
  const int w = static_cast<int>(pixel_labels.cols());
  if (patch_size < 1 || h % patch_size != 0 || w % patch_size != 0)
    throw ShapeError("label map " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by patch " + std::to_string(patch_size));
  const int gh = h / patch_size, gw = w / patch_size;
  const int max_label = pixel_labels.maxCoeff();
  if (pixel_labels.minCoeff() < 0) throw ShapeError("label map contains negative class ids");
  MatXi out(gh, gw);
  std::vector<int> counts(static_cast<std::size_t>(max_label) + 1);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int dy = 0; dy < patch_size; ++dy)
        for (int dx = 0; dx < patch_size; ++dx)
          ++counts[static_cast<std::size_t>(
              pixel_labels(gy * patch_size + dy, gx * patch_size + dx))];
      int best = 0;  // strict > keeps the lowest class id on ties
      for (int c = 1; c <= max_label; ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
      out(gy, gx) = best;
    }
  return out;
}

Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> confusion_matrix(
    const std::vector<MatXi>& pred, const std::vector<MatXi>& gt, int num_classes) {
  if (num_classes < 1) throw ConfigError("confusion matrix num_classes: must be >= 1");
  if (pred.size() != gt.size())
    throw ShapeError("got " + std::to_string(pred.size()) + " prediction maps and " +
                     std::to_string(gt.size()) + " ground-truth maps");
  if (pred.empty()) throw NoData("no label maps to evaluate");
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> m =
      Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const MatXi& p = pred[i];
    const MatXi& g = gt[i];
    if (p.rows() != g.rows() || p.cols() != g.cols())
      throw ShapeError("map " + std::to_string(i) + ": prediction " + std::to_string(p.rows()) +
                       "x" + std::to_string(p.cols()) + " vs ground truth " +
                       std::to_string(g.rows()) + "x" + std::to_string(g.cols()));
    for (Eigen::Index y = 0; y < p.rows(); ++y)
      for (Eigen::Index x = 0; x < p.cols(); ++x) {
        const int pc = p(y, x), gc = g(y, x);
        if (pc < 0 || pc >= num_classes || gc < 0 || gc >= num_classes)
          throw ShapeError("class id outside [0, " + std::to_string(num_classes) + ") in map " +
                           std::to_string(i));
        ++m(gc, pc);
      }
  }
  return m;
}

ProbeResult evaluate_miou(const std::vector<MatXi>& pred, const std::vector<MatXi>& gt,
                          int num_classes) {
  const auto m = confusion_matrix(pred, gt, num_classes);
  ProbeResult res;
  res.per_class_iou.resize(static_cast<std::size_t>(num_classes), 0.0);
  double iou_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::int64_t tp = m(c, c);
    const std::int64_t fn = m.row(c).sum() - tp;
    const std::int64_t fp = m.col(c).sum() - tp;
    const std::int64_t denom = tp + fp + fn;
    const double iou = denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
    res.per_class_iou[static_cast<std::size_t>(c)] = iou;
    if (m.row(c).sum() > 0) {  // class appears in the ground truth
      iou_sum += iou;
      ++present;
    }
  }
  res.miou = present > 0 ? iou_sum / present : 0.0;
  res.pixel_accuracy = static_cast<double>(m.trace()) / static_cast<double>(m.sum());
  return res;
}

void write_probe_report(const std::filesystem::path& path, const ProbeResult& result,
                        std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "per_class_iou";
  for (const double v : result.per_class_iou) out << ' ' << fmt_double(v);
  out << '\n';
  out << "miou " << fmt_double(result.miou) << '\n';
  out << "pixel_accuracy " << fmt_double(result.pixel_accuracy) << '\n';
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(config_hash));
  out << "config_hash " << hex << '\n';
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

MatXi LabeledFrames::load_labels(int index) const {
  if (index < 0 || index >= count())
    throw ClipOutOfBounds("label index " + std::to_string(index) + " outside [0, " +
                          std::to_string(count()) + ")");
  return load_label_png(label_paths[static_cast<std::size_t>(index)]);
}

LabeledFrames index_labeled_frames(const std::filesystem::path& frames_dir,
                                   const std::filesystem::path& labels_dir) {
  LabeledFrames out;
  out.frames = index_frames(frames_dir);
  out.label_paths.reserve(out.frames.frame_paths.size());
  for (const auto& fp : out.frames.frame_paths) {
    std::filesystem::path lp = labels_dir / fp.filename();
    lp.replace_extension(".png");
    if (!std::filesystem::exists(lp)) throw IoError("missing label map " + lp.string());
    out.label_paths.push_back(std::move(lp));
  }
  return out;
}

LabeledFrames index_labeled_frames(const std::filesystem::path& scene_dir) {
  return index_labeled_frames(scene_dir / "frames", scene_dir / "labels");
}

int label_class_count(const LabeledFrames& data, int train_frames, int eval_frames) {
  if (train_frames < 1 || eval_frames < 1 || train_frames + eval_frames > data.count())
    throw NoData("probe needs " + std::to_string(train_frames) + " train + " +
                 std::to_string(eval_frames) + " eval frames, store has " +
                 std::to_string(data.count()));
  int max_id = 0;
  for (int i = 0; i < train_frames; ++i) max_id = std::max(max_id, data.load_labels(i).maxCoeff());
  for (int i = data.count() - eval_frames; i < data.count(); ++i)
    max_id = std::max(max_id, data.load_labels(i).maxCoeff());
  return max_id + 1;
}

}  // namespace vsd
