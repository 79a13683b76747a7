#include "vsd/video_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "vsd/errors.hpp"
#include "vsd/image_io.hpp"

namespace vsd {

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Frame index embedded in the filename: the last run of digits in the stem.
long long filename_index(const std::filesystem::path& p) {
  const std::string stem = p.stem().string();
  long long value = -1;
  std::size_t i = stem.size();
  while (i > 0 && !std::isdigit(static_cast<unsigned char>(stem[i - 1]))) --i;
  std::size_t end = i;
  while (i > 0 && std::isdigit(static_cast<unsigned char>(stem[i - 1]))) --i;
  if (end > i) value = std::stoll(stem.substr(i, end - i));
  return value;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& root,
                                                 const std::filesystem::path& manifest) {
  std::vector<std::filesystem::path> paths;
  std::ifstream f(manifest);
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::filesystem::path p(line);
    paths.push_back(p.is_absolute() ? p : root / p);
  }
  return paths;
}

}  // namespace

ImageU8 FrameStore::load_frame(int index) const {
  if (index < 0 || index >= count())
    throw ClipOutOfBounds("frame index " + std::to_string(index) + " outside [0, " +
                          std::to_string(count()) + ")");
  ImageU8 img = load_image_u8(frame_paths[static_cast<std::size_t>(index)]);
  if (img.width != width || img.height != height)
    throw InconsistentFrames(frame_paths[static_cast<std::size_t>(index)].string() + " decodes to " +
                             std::to_string(img.width) + "x" + std::to_string(img.height) +
                             ", store is " + std::to_string(width) + "x" + std::to_string(height));
  return img;
}

FrameStore index_frames(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw NoFrames("not a directory: " + root.string());

  FrameStore store;
  store.root = root;

  const auto manifest = root / "manifest.txt";
  if (std::filesystem::exists(manifest)) {
    store.frame_paths = read_manifest(root, manifest);
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(root))
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        store.frame_paths.push_back(entry.path());
    std::sort(store.frame_paths.begin(), store.frame_paths.end(),
              [](const auto& a, const auto& b) {
                const auto ia = filename_index(a), ib = filename_index(b);
                return ia != ib ? ia < ib : a.filename() < b.filename();
              });
  }

  if (store.frame_paths.empty()) throw NoFrames("no frame images under " + root.string());

  for (const auto& p : store.frame_paths) {
    const auto size = probe_image_size(p);
    if (!size) throw InconsistentFrames("unreadable image header: " + p.string());
    if (store.width == 0) {
      store.width = size->first;
      store.height = size->second;
    } else if (size->first != store.width || size->second != store.height) {
      throw InconsistentFrames(p.string() + " is " + std::to_string(size->first) + "x" +
                               std::to_string(size->second) + ", expected " +
                               std::to_string(store.width) + "x" + std::to_string(store.height));
    }
  }
  return store;
}

Clip sample_clip(const FrameStore& store, int t, int delta, int k) {
  if (delta < 1 || k < 1) throw ClipOutOfBounds("stride and length must be >= 1");
  if (t < 0 || t + (k - 1) * delta >= store.count())
    throw ClipOutOfBounds("clip start " + std::to_string(t) + " stride " + std::to_string(delta) +
                          " length " + std::to_string(k) + " needs frame " +
                          std::to_string(t + (k - 1) * delta) + " but store has " +
                          std::to_string(store.count()));
  return Clip{t, delta, k};
}

EpochSampler::EpochSampler(const FrameStore& store, int delta, int k, int clips_per_epoch,
                           std::uint64_t seed)
    : store_(&store), delta_(delta), k_(k), clips_per_epoch_(clips_per_epoch), seed_(seed) {
  max_start_ = store.count() - (k - 1) * delta - 1;
  if (max_start_ < 0)
    throw ClipOutOfBounds("store of " + std::to_string(store.count()) +
                          " frames too short for stride " + std::to_string(delta) + " length " +
                          std::to_string(k));
}

std::vector<Clip> EpochSampler::epoch_clips(int epoch) const {
  Rng rng(mix_seed(seed_, {0x636c6970ULL, static_cast<std::uint64_t>(epoch)}));
  std::vector<Clip> clips;
  clips.reserve(static_cast<std::size_t>(clips_per_epoch_));
  for (int i = 0; i < clips_per_epoch_; ++i) {
    const int t = static_cast<int>(rng.uniform_int(0, max_start_));
    clips.push_back(Clip{t, delta_, k_});
  }
  return clips;
}

}  // namespace vsd
