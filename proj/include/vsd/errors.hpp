#pragma once

#include <stdexcept>
#include <string>

namespace vsd {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define VSD_DEFINE_ERROR(Name)                                   \
  struct Name : Error {                                          \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

VSD_DEFINE_ERROR(NoFrames);
VSD_DEFINE_ERROR(InconsistentFrames);
VSD_DEFINE_ERROR(ClipOutOfBounds);
VSD_DEFINE_ERROR(FrameTooSmall);
VSD_DEFINE_ERROR(GeometryMismatch);
VSD_DEFINE_ERROR(ShapeError);
VSD_DEFINE_ERROR(InvalidTemperature);
VSD_DEFINE_ERROR(NoPairs);
VSD_DEFINE_ERROR(NoLocalViews);
VSD_DEFINE_ERROR(ParamTreeMismatch);
VSD_DEFINE_ERROR(ScheduleError);
VSD_DEFINE_ERROR(DivergenceError);
VSD_DEFINE_ERROR(CheckpointError);
VSD_DEFINE_ERROR(NoData);
VSD_DEFINE_ERROR(CanvasError);
VSD_DEFINE_ERROR(ConfigError);
VSD_DEFINE_ERROR(IoError);

#undef VSD_DEFINE_ERROR

}  // namespace vsd
