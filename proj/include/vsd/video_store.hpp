#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/image.hpp"
#include "vsd/rng.hpp"

namespace vsd {

/// Indexed, ordered collection of decoded video frames on disk.
/// Immutable after indexing; safe for concurrent reads.
struct FrameStore {
  std::filesystem::path root;
  std::vector<std::filesystem::path> frame_paths;
  double fps = 0.0;  // informational; 0 = unknown
  int width = 0;
  int height = 0;

  int count() const { return static_cast<int>(frame_paths.size()); }

  ImageU8 load_frame(int index) const;
};

/// K frame indices {t, t+delta, ..., t+(K-1)*delta}.
struct Clip {
  int start = 0;
  int stride = 30;
  int length = 3;

  std::vector<int> indices() const {
    std::vector<int> idx(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) idx[static_cast<std::size_t>(i)] = start + i * stride;
    return idx;
  }
};

/// Scan a directory of zero-padded numbered JPEG/PNG frames (or read the
/// optional manifest.txt, one path per line) and verify frame dimensions.
FrameStore index_frames(const std::filesystem::path& root);

Clip sample_clip(const FrameStore& store, int t, int delta, int k);

/// Deterministic sequence of clips with starts drawn uniformly (with
/// replacement) from the valid range. Owns its RNG; not thread-shared.
class EpochSampler {
 public:
  EpochSampler(const FrameStore& store, int delta, int k, int clips_per_epoch,
               std::uint64_t seed);

  /// The full clip sequence for one epoch. Same (store, seed, epoch) gives
  /// an identical sequence.
  std::vector<Clip> epoch_clips(int epoch) const;

  int clips_per_epoch() const { return clips_per_epoch_; }
  int max_start() const { return max_start_; }

 private:
  const FrameStore* store_;
  int delta_;
  int k_;
  int clips_per_epoch_;
  int max_start_;
  std::uint64_t seed_;
};

}  // namespace vsd
