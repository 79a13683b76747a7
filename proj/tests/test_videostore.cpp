#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "vsd/image_io.hpp"
#include "vsd/video_store.hpp"

#include "support/tmpdir.hpp"

using namespace vsd;
using vsd::testing::TmpDir;

namespace {

/// 16x12 frame whose top-left red value encodes `tag`.
ImageU8 tagged_frame(int tag, int width = 16, int height = 12) {
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.rgb.assign(static_cast<std::size_t>(width) * height * 3, 40);
  img.rgb[0] = static_cast<std::uint8_t>(tag);
  return img;
}

void write_frames(const std::filesystem::path& dir, int n) {
  char name[16];
  for (int i = 1; i <= n; ++i) {
    std::snprintf(name, sizeof(name), "%06d.png", i);
    save_png(dir / name, tagged_frame(i));
  }
}

/// Store with fake paths; enough for sampler arithmetic, which never decodes.
FrameStore fake_store(int count) {
  FrameStore store;
  for (int i = 0; i < count; ++i) store.frame_paths.emplace_back("unused");
  return store;
}

}  // namespace

TEST_CASE("numbered frames index in ascending numeric order") {
  TmpDir tmp("vs-index");
  write_frames(tmp.path(), 12);

  const FrameStore store = index_frames(tmp.path());
  CHECK(store.count() == 12);
  CHECK(store.width == 16);
  CHECK(store.height == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(store.load_frame(i).rgb[0] == i + 1);  // names are 1-based
  }
}

TEST_CASE("numeric sort beats lexicographic sort") {
  TmpDir tmp("vs-sort");
  save_png(tmp.path() / "frame_9.png", tagged_frame(9));
  save_png(tmp.path() / "frame_10.png", tagged_frame(10));
  save_png(tmp.path() / "frame_2.png", tagged_frame(2));

  const FrameStore store = index_frames(tmp.path());
  REQUIRE(store.count() == 3);
  CHECK(store.load_frame(0).rgb[0] == 2);
  CHECK(store.load_frame(1).rgb[0] == 9);
  CHECK(store.load_frame(2).rgb[0] == 10);
}

TEST_CASE("empty directory raises NoFrames") {
  TmpDir tmp("vs-empty");
  CHECK_THROWS_AS(index_frames(tmp.path()), NoFrames);
  CHECK_THROWS_AS(index_frames(tmp.path() / "missing"), NoFrames);
}

TEST_CASE("mixed frame dimensions raise InconsistentFrames") {
  TmpDir tmp("vs-dims");
  save_png(tmp.path() / "000001.png", tagged_frame(1, 16, 12));
  save_png(tmp.path() / "000002.png", tagged_frame(2, 8, 8));
  CHECK_THROWS_AS(index_frames(tmp.path()), InconsistentFrames);
}

TEST_CASE("manifest.txt overrides directory scanning") {
  TmpDir tmp("vs-manifest");
  write_frames(tmp.path(), 4);
  std::ofstream f(tmp.path() / "manifest.txt");
  f << "# keep only two frames, reversed\n";
  f << "000003.png\n";
  f << "000001.png\n";
  f.close();

  const FrameStore store = index_frames(tmp.path());
  REQUIRE(store.count() == 2);
  CHECK(store.load_frame(0).rgb[0] == 3);
  CHECK(store.load_frame(1).rgb[0] == 1);
}

TEST_CASE("load_frame rejects out-of-range indices") {
  TmpDir tmp("vs-range");
  write_frames(tmp.path(), 2);
  const FrameStore store = index_frames(tmp.path());
  CHECK_THROWS_AS(store.load_frame(-1), ClipOutOfBounds);
  CHECK_THROWS_AS(store.load_frame(2), ClipOutOfBounds);
}

TEST_CASE("clip indices step by the stride") {
  const FrameStore store300 = fake_store(300);
  const Clip clip = sample_clip(store300, 100, 30, 3);
  CHECK(clip.indices() == std::vector<int>{100, 130, 160});

  const FrameStore store10 = fake_store(10);
  CHECK(sample_clip(store10, 0, 1, 2).indices() == std::vector<int>{0, 1});
}

TEST_CASE("clip reaching past the last frame raises ClipOutOfBounds") {
  const FrameStore store = fake_store(100);
  CHECK_THROWS_AS(sample_clip(store, 50, 30, 3), ClipOutOfBounds);  // needs frame 110
  CHECK_THROWS_AS(sample_clip(store, -1, 30, 3), ClipOutOfBounds);
  CHECK_NOTHROW(sample_clip(store, 39, 30, 3));  // last valid start
}

TEST_CASE("epoch sampler repeats exactly for the same seed and epoch") {
  const FrameStore store = fake_store(300);
  const EpochSampler sampler(store, 30, 3, 16, 42);

  const auto a = sampler.epoch_clips(5);
  const auto b = sampler.epoch_clips(5);
  REQUIRE(a.size() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].start == b[i].start);
    CHECK(a[i].stride == 30);
    CHECK(a[i].length == 3);
  }

  const auto c = sampler.epoch_clips(6);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a[i].start != c[i].start;
  CHECK(any_diff);
}

TEST_CASE("sampled clips always fit inside the store") {
  const FrameStore store = fake_store(200);
  const EpochSampler sampler(store, 30, 3, 500, 9);
  for (const auto& clip : sampler.epoch_clips(0)) {
    CHECK(clip.start >= 0);
    CHECK(clip.start + 2 * 30 < store.count());
  }
}

TEST_CASE("store with a single valid start always samples t=0") {
  const FrameStore store = fake_store(61);  // (K-1)*delta + 1
  const EpochSampler sampler(store, 30, 3, 50, 1);
  for (const auto& clip : sampler.epoch_clips(0)) CHECK(clip.start == 0);
}

TEST_CASE("zero clips per epoch gives an empty sequence") {
  const FrameStore store = fake_store(300);
  const EpochSampler sampler(store, 30, 3, 0, 1);
  CHECK(sampler.epoch_clips(0).empty());
}

TEST_CASE("store too short for one clip raises ClipOutOfBounds") {
  const FrameStore store = fake_store(60);  // needs 61 for delta=30, K=3
  CHECK_THROWS_AS(EpochSampler(store, 30, 3, 1, 1), ClipOutOfBounds);
}

TEST_CASE("clip starts are uniform by a chi-square test") {
  // 1000 valid starts split into 10 bins of width 100; 10,000 draws.
  const FrameStore store = fake_store(1060);
  const EpochSampler sampler(store, 30, 3, 10000, 20240229);
  REQUIRE(sampler.max_start() == 999);

  int bins[10] = {};
  for (const auto& clip : sampler.epoch_clips(0)) bins[clip.start / 100]++;

  const double expected = 1000.0;
  double chi2 = 0.0;
  for (int count : bins) {
    const double d = count - expected;
    chi2 += d * d / expected;
  }
  // Critical value for 9 degrees of freedom at significance 0.01.
  CHECK(chi2 < 21.666);
}
