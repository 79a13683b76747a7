#include "vsd/synthvideo.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vsd/errors.hpp"
#include "vsd/image_io.hpp"
#include "vsd/rng.hpp"

namespace vsd {

namespace {

double hash01(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(mix_seed(seed, {a, b}) >> 11) * 0x1.0p-53;
}

/// Value noise: random lattice values at `spacing`, bilinear in between.
double value_noise(std::uint64_t seed, double x, double y, double spacing) {
  const double gx = x / spacing, gy = y / spacing;
  const auto x0 = static_cast<std::int64_t>(std::floor(gx));
  const auto y0 = static_cast<std::int64_t>(std::floor(gy));
  const double fx = gx - static_cast<double>(x0), fy = gy - static_cast<double>(y0);
  const double sx = fx * fx * (3 - 2 * fx);  // smoothstep
  const double sy = fy * fy * (3 - 2 * fy);
  auto at = [&](std::int64_t xi, std::int64_t yi) {
    return hash01(seed, static_cast<std::uint64_t>(xi), static_cast<std::uint64_t>(yi));
  };
  const double top = at(x0, y0) * (1 - sx) + at(x0 + 1, y0) * sx;
  const double bot = at(x0, y0 + 1) * (1 - sx) + at(x0 + 1, y0 + 1) * sx;
  return top * (1 - sy) + bot * sy;
}

double octave_noise(std::uint64_t seed, double x, double y) {
  return 0.5 * value_noise(seed, x, y, 32.0) + 0.3 * value_noise(seed + 1, x, y, 16.0) +
         0.2 * value_noise(seed + 2, x, y, 8.0);
}

/// Offset wrapped into [-n/2, n/2).
double wrap_delta(double a, double n) {
  double d = std::fmod(a + n / 2.0, n);
  if (d < 0) d += n;
  return d - n / 2.0;
}

bool covers(const SynthShape& s, double dx, double dy) {
  switch (s.kind) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= s.size * s.size;
    case ShapeKind::Square:
      return std::abs(dx) <= s.size && std::abs(dy) <= s.size;
    case ShapeKind::Triangle:
      // apex up: vertices (0,-s), (-s,s), (s,s)
      return dy <= s.size && std::abs(dx) <= (dy + s.size) / 2.0;
  }
  return false;
}

void class_color(int class_id, int num_classes, double* r, double* g, double* b) {
  const double h = 6.0 * (class_id - 1) / std::max(1, num_classes);
  const double sat = 0.75, val = 0.9;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
  switch (i) {
    case 0: *r = val; *g = t; *b = p; break;
    case 1: *r = q; *g = val; *b = p; break;
    case 2: *r = p; *g = val; *b = t; break;
    case 3: *r = p; *g = q; *b = val; break;
    case 4: *r = t; *g = p; *b = val; break;
    default: *r = val; *g = p; *b = q; break;
  }
}

}  // namespace

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "circle";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "circle") return ShapeKind::Circle;
  if (s == "square") return ShapeKind::Square;
  if (s == "triangle") return ShapeKind::Triangle;
  throw ConfigError("unknown shape kind: " + s);
}

void rebuild_background(SynthScene& scene) {
  scene.background = Image<float>(scene.canvas_h, scene.canvas_w);
  const std::uint64_t bg_seed = mix_seed(scene.seed, {0x6267ULL});
  for (int y = 0; y < scene.canvas_h; ++y)
    for (int x = 0; x < scene.canvas_w; ++x) {
      // muted, channel-decorrelated texture
      const double n0 = octave_noise(bg_seed, x, y);
      const double n1 = octave_noise(bg_seed + 7, x, y);
      scene.background.ch[0](y, x) = static_cast<float>(0.25 + 0.35 * n0);
      scene.background.ch[1](y, x) = static_cast<float>(0.25 + 0.30 * (0.5 * n0 + 0.5 * n1));
      scene.background.ch[2](y, x) = static_cast<float>(0.25 + 0.35 * n1);
    }
}

SynthScene generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.canvas_w < 64 || params.canvas_h < 64)
    throw CanvasError("canvas must be at least 64x64, got " + std::to_string(params.canvas_w) +
                      "x" + std::to_string(params.canvas_h));
  if (params.num_shapes < 0) throw CanvasError("num_shapes must be >= 0");

  SynthScene scene;
  scene.seed = seed;
  scene.canvas_w = params.canvas_w;
  scene.canvas_h = params.canvas_h;
  scene.num_frames = params.num_frames;
  scene.num_classes = params.num_classes;
  scene.flicker = params.flicker;
  scene.fps = params.fps;

  Rng rng(mix_seed(seed, {0x7363656eULL}));
  const double min_side = std::min(params.canvas_w, params.canvas_h);
  for (int i = 0; i < params.num_shapes; ++i) {
    SynthShape s;
    s.class_id = 1 + i % std::max(1, params.num_classes);
    // class fixes the silhouette so labels are not a pure color lookup
    s.kind = static_cast<ShapeKind>((s.class_id - 1) % 3);
    s.size = rng.uniform(min_side / 12.0, min_side / 7.0);
    s.pos_x = rng.uniform(0.0, params.canvas_w);
    s.pos_y = rng.uniform(0.0, params.canvas_h);
    // relative speeds bounded away from zero so no two shapes travel
    // together and occlusions stay brief
    for (int tries = 0; tries < 1000; ++tries) {
      s.vel_x = rng.uniform(-3.0, 3.0);
      s.vel_y = rng.uniform(-3.0, 3.0);
      bool ok = true;
      for (const auto& prev : scene.shapes)
        ok &= std::hypot(s.vel_x - prev.vel_x, s.vel_y - prev.vel_y) >= 1.5;
      if (ok) break;
    }
    class_color(s.class_id, params.num_classes, &s.color_r, &s.color_g, &s.color_b);
    const double v = rng.uniform(0.85, 1.15);
    s.color_r = std::clamp(s.color_r * v, 0.0, 1.0);
    s.color_g = std::clamp(s.color_g * v, 0.0, 1.0);
    s.color_b = std::clamp(s.color_b * v, 0.0, 1.0);
    s.texture_seed = rng.next_u64();
    scene.shapes.push_back(s);
  }
  rebuild_background(scene);
  return scene;
}

std::pair<Image<float>, MatXi> render_frame(const SynthScene& scene, int t) {
  if (t < 0 || t >= scene.num_frames)
    throw ClipOutOfBounds("frame " + std::to_string(t) + " outside [0, " +
                          std::to_string(scene.num_frames) + ")");
  const int w = scene.canvas_w, h = scene.canvas_h;
  Image<float> img = scene.background;
  MatXi labels = MatXi::Zero(h, w);

  for (const auto& s : scene.shapes) {
    const double cx = s.pos_x + t * s.vel_x;
    const double cy = s.pos_y + t * s.vel_y;
    for (int y = 0; y < h; ++y) {
      const double dy = wrap_delta(y - cy, h);
      if (std::abs(dy) > s.size + 1) continue;
      for (int x = 0; x < w; ++x) {
        const double dx = wrap_delta(x - cx, w);
        if (!covers(s, dx, dy)) continue;
        // texture in shape-local coordinates so it travels with the shape
        const double tex =
            0.8 + 0.4 * value_noise(s.texture_seed, dx + s.size, dy + s.size, 4.0);
        img.ch[0](y, x) = static_cast<float>(std::clamp(s.color_r * tex, 0.0, 1.0));
        img.ch[1](y, x) = static_cast<float>(std::clamp(s.color_g * tex, 0.0, 1.0));
        img.ch[2](y, x) = static_cast<float>(std::clamp(s.color_b * tex, 0.0, 1.0));
        labels(y, x) = s.class_id;
      }
    }
  }

  if (scene.flicker > 0) {
    const double f = 1.0 + scene.flicker * (0.7 * std::sin(2.0 * M_PI * t / 41.0) +
                                            0.3 * (2.0 * hash01(scene.seed, 0x666cULL, t) - 1.0));
    for (auto& c : img.ch) c *= static_cast<float>(f);
    clamp01(img);
  }
  return {std::move(img), std::move(labels)};
}

void materialize(const SynthScene& scene, const std::filesystem::path& out_dir) {
  const auto frames_dir = out_dir / "frames";
  const auto labels_dir = out_dir / "labels";
  std::error_code ec;
  std::filesystem::create_directories(frames_dir, ec);
  std::filesystem::create_directories(labels_dir, ec);
  if (!std::filesystem::is_directory(frames_dir) || !std::filesystem::is_directory(labels_dir))
    throw IoError("cannot create output directories under " + out_dir.string());

  char name[16];
  for (int t = 0; t < scene.num_frames; ++t) {
    auto [img, labels] = render_frame(scene, t);
    std::snprintf(name, sizeof(name), "%06d.png", t + 1);
    save_png(frames_dir / name, to_u8(img));
    save_label_png(labels_dir / name, labels);
  }
  save_scene_manifest(scene, out_dir / "scene.json");
}

void save_scene_manifest(const SynthScene& scene, const std::filesystem::path& path) {
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["canvas"] = {scene.canvas_w, scene.canvas_h};
  j["num_frames"] = scene.num_frames;
  j["num_classes"] = scene.num_classes;
  j["flicker"] = scene.flicker;
  j["fps"] = scene.fps;
  j["shapes"] = nlohmann::json::array();
  for (const auto& s : scene.shapes) {
    j["shapes"].push_back({{"kind", to_string(s.kind)},
                           {"class_id", s.class_id},
                           {"size", s.size},
                           {"pos", {s.pos_x, s.pos_y}},
                           {"vel", {s.vel_x, s.vel_y}},
                           {"color", {s.color_r, s.color_g, s.color_b}},
                           {"texture_seed", s.texture_seed}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

SynthScene load_scene_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  f >> j;
  SynthScene scene;
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.canvas_w = j.at("canvas")[0].get<int>();
  scene.canvas_h = j.at("canvas")[1].get<int>();
  scene.num_frames = j.at("num_frames").get<int>();
  scene.num_classes = j.at("num_classes").get<int>();
  scene.flicker = j.at("flicker").get<double>();
  scene.fps = j.at("fps").get<double>();
  for (const auto& js : j.at("shapes")) {
    SynthShape s;
    s.kind = shape_kind_from_string(js.at("kind").get<std::string>());
    s.class_id = js.at("class_id").get<int>();
    s.size = js.at("size").get<double>();
    s.pos_x = js.at("pos")[0].get<double>();
    s.pos_y = js.at("pos")[1].get<double>();
    s.vel_x = js.at("vel")[0].get<double>();
    s.vel_y = js.at("vel")[1].get<double>();
    s.color_r = js.at("color")[0].get<double>();
    s.color_g = js.at("color")[1].get<double>();
    s.color_b = js.at("color")[2].get<double>();
    s.texture_seed = js.at("texture_seed").get<std::uint64_t>();
    scene.shapes.push_back(s);
  }
  rebuild_background(scene);
  return scene;
}

}  // namespace vsd
