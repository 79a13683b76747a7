#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vsd/errors.hpp"
#include "vsd/model.hpp"
#include "vsd/nn.hpp"
#include "vsd/schedule.hpp"

namespace vsd {

/// Teacher momentum: half-cosine from the base at step 0 up to 1.0 at the
/// final step.
inline double momentum_at(long step, long total_steps, double momentum_base = 0.996) {
  detail::check_step_range(step, total_steps);
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - momentum_base) * 0.5 * (std::cos(M_PI * t) + 1.0);
}

/// theta_T <- m * theta_T + (1-m) * theta_S over paired tensors. The pairing
/// must match by name and shape; the student is never modified.
template <class S>
void ema_update(const std::vector<Param<S>*>& teacher,
                const std::vector<Param<S>*>& student, double m) {
  if (m < 0.0 || m > 1.0)
    throw ScheduleError("EMA momentum " + std::to_string(m) + " outside [0,1]");
  if (teacher.size() != student.size())
    throw ParamTreeMismatch("teacher has " + std::to_string(teacher.size()) +
                            " tensors, student " + std::to_string(student.size()));
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    Param<S>& t = *teacher[i];
    const Param<S>& s = *student[i];
    if (t.name != s.name || t.value.rows() != s.value.rows() ||
        t.value.cols() != s.value.cols())
      throw ParamTreeMismatch("tensor " + std::to_string(i) + ": " + t.name + " " +
                              std::to_string(t.value.rows()) + "x" +
                              std::to_string(t.value.cols()) + " vs " + s.name + " " +
                              std::to_string(s.value.rows()) + "x" +
                              std::to_string(s.value.cols()));
    t.value = static_cast<S>(m) * t.value + static_cast<S>(1.0 - m) * s.value;
  }
}

/// Model-level overload: pairs the teacher with the student's shared subset
/// (backbone + projection; the predictor has no teacher counterpart).
template <class S>
void ema_update(TeacherModel<S>& teacher, StudentModel<S>& student, double m) {
  std::vector<Param<S>*> t = collect_params<S>(teacher);
  std::vector<Param<S>*> s;
  student.visit_shared([&](Param<S>& p) { s.push_back(&p); });
  ema_update(t, s, m);
}

}  // namespace vsd
