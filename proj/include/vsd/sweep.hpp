#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsd/config.hpp"

namespace vsd {

/// One stride's outcome; failed runs keep their row with nan scores.
struct SweepRow {
  int delta = 0;
  double miou = 0.0;
  double loss_final = 0.0;
  bool ok = true;
};

/// Parse and check the sweep_deltas config string: nonempty, each >= 1,
/// duplicates rejected. One ConfigError lists every problem.
std::vector<int> sweep_deltas(const RunConfig& cfg);

/// "# config_hash=<hex>" comment, "delta,miou,loss_final" header, one row
/// per stride; failed rows carry nan in both score columns.
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                     std::uint64_t config_hash);

/// Inverse of write_sweep_csv; the stored hash is written to *config_hash
/// when non-null. Rows with nan scores come back with ok == false.
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path,
                                     std::uint64_t* config_hash = nullptr);

/// Self-contained SVG line plot of mIoU against stride: x ticks at exactly
/// the swept deltas, y fixed to [0, 1], failed strides drawn as ticks only.
void write_sweep_plot(const std::filesystem::path& path, const std::vector<SweepRow>& rows,
                      std::uint64_t config_hash);

}  // namespace vsd
