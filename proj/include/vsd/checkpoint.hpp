#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "vsd/errors.hpp"
#include "vsd/nn.hpp"
#include "vsd/types.hpp"

namespace vsd {

/// Named-array archive, format version 1 (little-endian host assumed):
///   bytes 0..7   magic "VSDARCH1" (version digit is part of the magic)
///   u64          config hash of the producing run
///   u64          entry count
///   per entry, in ascending name order:
///     u32 name length, name bytes,
///     u64 rows, u64 cols,
///     rows*cols f64 values in row-major order.
/// Values are stored as f64 regardless of the in-memory scalar type; float
/// parameters round-trip exactly through the widening.
using ArrayMap = std::map<std::string, MatX<double>>;

void save_arrays(const std::filesystem::path& path, const ArrayMap& arrays,
                 std::uint64_t config_hash);

/// Load an archive; throws CheckpointError on malformed content and IoError
/// when the file cannot be opened. `config_hash` receives the stored hash
/// when non-null.
ArrayMap load_arrays(const std::filesystem::path& path,
                     std::uint64_t* config_hash = nullptr);

/// Copy every parameter of `model` into `out` under "<group>/<param name>".
template <class S, class M>
void pack_group(const std::string& group, M& model, ArrayMap& out) {
  model.visit([&](Param<S>& p) {
    out[group + "/" + p.name] = p.value.template cast<double>();
  });
}

/// Restore every parameter of `model` from "<group>/<param name>" entries.
template <class S, class M>
void unpack_group(const std::string& group, M& model, const ArrayMap& in) {
  model.visit([&](Param<S>& p) {
    const std::string key = group + "/" + p.name;
    auto it = in.find(key);
    if (it == in.end()) throw CheckpointError("missing array " + key);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
      throw CheckpointError("array " + key + " is " + std::to_string(it->second.rows()) +
                            "x" + std::to_string(it->second.cols()) + ", expected " +
                            std::to_string(p.value.rows()) + "x" +
                            std::to_string(p.value.cols()));
    p.value = it->second.template cast<S>();
  });
}

inline MatX<double> scalar_array(double v) { return MatX<double>::Constant(1, 1, v); }

inline double fetch_scalar(const ArrayMap& in, const std::string& key) {
  auto it = in.find(key);
  if (it == in.end()) throw CheckpointError("missing array " + key);
  if (it->second.rows() != 1 || it->second.cols() != 1)
    throw CheckpointError("array " + key + " is not a scalar");
  return it->second(0, 0);
}

}  // namespace vsd
