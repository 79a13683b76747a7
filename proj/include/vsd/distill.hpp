#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Sharpening temperatures for the two sides of every cross-entropy term.
struct Temperatures {
  double student = 0.1;
  double teacher = 0.04;
};

inline constexpr double kLogFloor = 1e-12;

/// Row-wise softmax of (logits - center) / tau, stabilized by row-max
/// subtraction. The center is only ever passed on the teacher path.
template <class S>
MatX<S> sharpen(const MatX<S>& logits, double tau, const VecX<S>* center = nullptr) {
  if (!(tau > 0.0))
    throw InvalidTemperature("tau = " + std::to_string(tau));
  MatX<S> shifted = logits;
  if (center != nullptr) {
    if (center->size() != logits.cols())
      throw ShapeError("center has " + std::to_string(center->size()) +
                       " entries for " + std::to_string(logits.cols()) + " columns");
    shifted.rowwise() -= center->transpose();
  }
  shifted /= static_cast<S>(tau);
  const VecX<S> row_max = shifted.rowwise().maxCoeff();
  MatX<S> p = ((shifted.colwise() - row_max).array().exp()).matrix();
  const VecX<S> row_sum = p.rowwise().sum();
  return row_sum.cwiseInverse().asDiagonal() * p;
}

/// Running means of teacher scores, kept separately for the [CLS] and patch
/// populations. Updates are pure so callers control when state advances.
template <class S>
struct CenterState {
  VecX<S> cls;
  VecX<S> patch;
  double momentum = 0.9;

  explicit CenterState(int num_prototypes = 0, double m = 0.9)
      : cls(VecX<S>::Zero(num_prototypes)),
        patch(VecX<S>::Zero(num_prototypes)),
        momentum(m) {}
};

enum class CenterKind { kCls, kPatch };

template <class S>
CenterState<S> update_center(const CenterState<S>& state, const MatX<S>& teacher_logits,
                             CenterKind which) {
  if (teacher_logits.rows() == 0)
    throw ShapeError("center update needs at least one row of scores");
  const VecX<S>& current = which == CenterKind::kCls ? state.cls : state.patch;
  if (teacher_logits.cols() != current.size())
    throw ShapeError("scores have " + std::to_string(teacher_logits.cols()) +
                     " columns, center has " + std::to_string(current.size()));
  const S m = static_cast<S>(state.momentum);
  CenterState<S> next = state;
  const VecX<S> mean = teacher_logits.colwise().mean().transpose();
  (which == CenterKind::kCls ? next.cls : next.patch) = m * current + (S(1) - m) * mean;
  return next;
}

/// Scalar loss plus its gradient with respect to the student logits, in the
/// same list layout the logits came in.
template <class S>
struct LossGrad {
  double value = 0.0;
  std::vector<MatX<S>> dstudent;
};

namespace detail {

/// Sum of CE(q_row, s_row) over rows in nats, log floored at kLogFloor, and
/// the exact gradient of that floored objective w.r.t. the student logits.
template <class S>
double cross_entropy_rows(const MatX<S>& q, const MatX<S>& s, double tau_s,
                          MatX<S>& dlogits) {
  const S floor = static_cast<S>(kLogFloor);
  double total = 0.0;
  dlogits.resize(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double row_q_live = 0.0;  // mass of q on columns whose log is not floored
    double ce = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      const double sc = static_cast<double>(s(r, c));
      const double qc = static_cast<double>(q(r, c));
      ce -= qc * std::log(std::max(sc, static_cast<double>(floor)));
      if (s(r, c) > floor) row_q_live += qc;
    }
    total += ce;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      const bool live = s(r, c) > floor;
      dlogits(r, c) = static_cast<S>(
          (static_cast<double>(s(r, c)) * row_q_live - (live ? q(r, c) : S(0))) /
          tau_s);
    }
  }
  return total;
}

}  // namespace detail

/// Patch-level prediction loss: mean over frame pairs and patch positions of
/// CE between the centered, sharpened teacher scores of the later frame and
/// the student's sharpened predicted scores.
template <class S>
LossGrad<S> dense_loss(const std::vector<MatX<S>>& teacher_scores,
                       const std::vector<MatX<S>>& student_pred_scores,
                       const Temperatures& temps, const CenterState<S>& center) {
  if (teacher_scores.empty() || teacher_scores.size() != student_pred_scores.size())
    throw NoPairs("got " + std::to_string(teacher_scores.size()) + " teacher and " +
                  std::to_string(student_pred_scores.size()) + " student score sets");
  LossGrad<S> out;
  out.dstudent.resize(student_pred_scores.size());
  const double pair_count = static_cast<double>(teacher_scores.size());
  for (std::size_t j = 0; j < teacher_scores.size(); ++j) {
    const MatX<S>& t = teacher_scores[j];
    const MatX<S>& s = student_pred_scores[j];
    if (t.rows() != s.rows() || t.cols() != s.cols() || t.rows() == 0)
      throw ShapeError("pair " + std::to_string(j) + ": teacher " +
                       std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                       " vs student " + std::to_string(s.rows()) + "x" +
                       std::to_string(s.cols()));
    const MatX<S> tq = sharpen(t, temps.teacher, &center.patch);
    const MatX<S> sp = sharpen(s, temps.student);
    MatX<S> d;
    const double ce = detail::cross_entropy_rows(tq, sp, temps.student, d);
    const double w = 1.0 / (pair_count * static_cast<double>(t.rows()));
    out.value += w * ce;
    out.dstudent[j] = static_cast<S>(w) * d;
  }
  return out;
}

/// View-level consistency loss: mean over frame pairs and local views of CE
/// between the teacher's [CLS] scores and each student local [CLS] score.
template <class S>
LossGrad<S> global_loss(const std::vector<MatX<S>>& teacher_cls_scores,
                        const std::vector<std::vector<MatX<S>>>& student_local_scores,
                        const Temperatures& temps, const CenterState<S>& center) {
  if (teacher_cls_scores.empty() ||
      teacher_cls_scores.size() != student_local_scores.size())
    throw NoPairs("got " + std::to_string(teacher_cls_scores.size()) +
                  " teacher frames and " + std::to_string(student_local_scores.size()) +
                  " local view sets");
  const std::size_t local_count = student_local_scores.front().size();
  if (local_count == 0) throw NoLocalViews("first frame has no local views");

  LossGrad<S> out;
  const double weight =
      1.0 / (static_cast<double>(teacher_cls_scores.size()) *
             static_cast<double>(local_count));
  std::vector<MatX<S>> flat_grads;
  for (std::size_t j = 0; j < teacher_cls_scores.size(); ++j) {
    if (student_local_scores[j].size() != local_count)
      throw NoLocalViews("frame " + std::to_string(j) + " has " +
                         std::to_string(student_local_scores[j].size()) +
                         " local views, expected " + std::to_string(local_count));
    const MatX<S> tq = sharpen(teacher_cls_scores[j], temps.teacher, &center.cls);
    if (tq.rows() != 1)
      throw ShapeError("teacher [CLS] scores must be a single row");
    for (std::size_t l = 0; l < local_count; ++l) {
      const MatX<S> sp = sharpen(student_local_scores[j][l], temps.student);
      if (sp.rows() != 1 || sp.cols() != tq.cols())
        throw ShapeError("local view " + std::to_string(l) + " of frame " +
                         std::to_string(j) + " has wrong shape");
      MatX<S> d;
      out.value += weight * detail::cross_entropy_rows(tq, sp, temps.student, d);
      flat_grads.push_back(static_cast<S>(weight) * d);
    }
  }
  out.dstudent = std::move(flat_grads);  // row-major over (frame, local view)
  return out;
}

enum class LossMode { kBoth, kDenseOnly, kGlobalOnly };

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "both") return LossMode::kBoth;
  if (s == "dense_only") return LossMode::kDenseOnly;
  if (s == "global_only") return LossMode::kGlobalOnly;
  throw ConfigError("unknown loss mode '" + s + "'");
}

/// Combined objective: equal-weight sum of both terms, or a single term.
inline double total_loss(double dense, double global, LossMode mode) {
  switch (mode) {
    case LossMode::kBoth: return 0.5 * dense + 0.5 * global;
    case LossMode::kDenseOnly: return dense;
    case LossMode::kGlobalOnly: return global;
  }
  throw ConfigError("invalid loss mode");
}

/// Per-term weights implied by the mode, for scaling loss gradients.
inline std::pair<double, double> loss_weights(LossMode mode) {
  switch (mode) {
    case LossMode::kBoth: return {0.5, 0.5};
    case LossMode::kDenseOnly: return {1.0, 0.0};
    case LossMode::kGlobalOnly: return {0.0, 1.0};
  }
  throw ConfigError("invalid loss mode");
}

}  // namespace vsd
