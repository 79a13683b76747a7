#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsd/image.hpp"
#include "vsd/types.hpp"

namespace vsd {

enum class ShapeKind { Circle, Square, Triangle };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

/// One moving textured shape. `size` is the radius / half-side; positions
/// wrap toroidally so the shape never leaves the canvas.
struct SynthShape {
  ShapeKind kind = ShapeKind::Circle;
  int class_id = 1;  // 0 is reserved for background
  double size = 8.0;
  double pos_x = 0.0, pos_y = 0.0;  // position at t = 0
  double vel_x = 0.0, vel_y = 0.0;  // px/frame
  double color_r = 1.0, color_g = 0.0, color_b = 0.0;
  std::uint64_t texture_seed = 0;
};

struct SynthScene {
  std::uint64_t seed = 0;
  int canvas_w = 160, canvas_h = 160;
  int num_frames = 600;
  int num_classes = 4;       // shape classes; labels run 0 (background) .. num_classes
  double flicker = 0.0;      // per-frame global brightness wobble amplitude
  double fps = 30.0;         // informational
  std::vector<SynthShape> shapes;  // drawn back-to-front in list order
  Image<float> background;         // derived from seed, not serialized
};

struct SceneParams {
  int canvas_w = 160, canvas_h = 160;
  int num_frames = 600;
  int num_shapes = 6;
  int num_classes = 4;
  double flicker = 0.0;
  double fps = 30.0;
};

/// Deterministic scene from seed; shape velocities uniform in [-3, 3]
/// px/frame per axis.
SynthScene generate_scene(std::uint64_t seed, const SceneParams& params);

/// Render frame t. Label at each pixel is the class id of the topmost
/// covering shape, else 0. Motion is exactly pos_0 + t*velocity (mod canvas).
std::pair<Image<float>, MatXi> render_frame(const SynthScene& scene, int t);

/// Write frames/%06d.png, labels/%06d.png and scene.json under out_dir.
void materialize(const SynthScene& scene, const std::filesystem::path& out_dir);

void save_scene_manifest(const SynthScene& scene, const std::filesystem::path& path);
SynthScene load_scene_manifest(const std::filesystem::path& path);

/// Rebuild the derived background planes after deserializing.
void rebuild_background(SynthScene& scene);

}  // namespace vsd
