#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "vsd/errors.hpp"

namespace vsd {

namespace detail {

inline void check_step_range(long step, long total_steps) {
  if (total_steps <= 0)
    throw ScheduleError("total_steps must be positive, got " +
                        std::to_string(total_steps));
  if (step < 0 || step > total_steps)
    throw ScheduleError("step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + "]");
}

}  // namespace detail

/// Half-cosine from start (t=0) to end (t=1).
inline double cosine_ramp(double start, double end, double t) {
  return end + (start - end) * 0.5 * (std::cos(M_PI * t) + 1.0);
}

/// Linear warmup to the peak over `warmup_steps`, then half-cosine decay to
/// `final_lr` at `total_steps`.
inline double learning_rate_at(long step, long total_steps, long warmup_steps,
                               double peak, double final_lr) {
  detail::check_step_range(step, total_steps);
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw ScheduleError("warmup " + std::to_string(warmup_steps) +
                        " outside [0, " + std::to_string(total_steps) + "]");
  if (step < warmup_steps)
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return peak;
  const double t = static_cast<double>(step - warmup_steps) /
                   static_cast<double>(total_steps - warmup_steps);
  return cosine_ramp(peak, final_lr, t);
}

/// Half-cosine ramp over the whole run (0.04 -> 0.4 at the defaults).
inline double weight_decay_at(long step, long total_steps, double start, double end) {
  detail::check_step_range(step, total_steps);
  return cosine_ramp(start, end,
                     static_cast<double>(step) / static_cast<double>(total_steps));
}

/// Teacher temperature: per-epoch linear ramp reaching `end` on the last
/// warmup epoch, flat afterwards.
inline double teacher_temp_at(int epoch, int warmup_epochs, double start, double end) {
  if (epoch < 0) throw ScheduleError("epoch " + std::to_string(epoch) + " negative");
  if (epoch >= warmup_epochs) return end;
  return start + (end - start) * static_cast<double>(epoch) /
                     static_cast<double>(std::max(1, warmup_epochs - 1));
}

}  // namespace vsd
