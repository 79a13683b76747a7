#include "vsd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "vsd/distill.hpp"
#include "vsd/errors.hpp"

namespace vsd {

BaselineMode parse_baseline_mode(const std::string& s) {
  if (s == "ours") return BaselineMode::kOurs;
  if (s == "dino_frames") return BaselineMode::kDinoFrames;
  if (s == "dino_precrop") return BaselineMode::kDinoPrecrop;
  if (s == "time_aug") return BaselineMode::kTimeAug;
  throw ConfigError("unknown baseline mode '" + s +
                    "' (expected ours|dino_frames|dino_precrop|time_aug)");
}

std::string to_string(BaselineMode m) {
  switch (m) {
    case BaselineMode::kOurs: return "ours";
    case BaselineMode::kDinoFrames: return "dino_frames";
    case BaselineMode::kDinoPrecrop: return "dino_precrop";
    case BaselineMode::kTimeAug: return "time_aug";
  }
  return "?";
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

/// Single registry of every config field; parsing, listing and hashing all
/// walk this so they cannot drift apart.
template <class C, class F>
void visit_fields(C& cfg, F&& f) {
  f("frames_dir", cfg.frames_dir);
  f("labels_dir", cfg.labels_dir);
  f("out_dir", cfg.out_dir);

  f("image_size", cfg.image_size);
  f("patch_size", cfg.patch_size);
  f("embed_dim", cfg.embed_dim);
  f("depth", cfg.depth);
  f("heads", cfg.heads);
  f("mlp_ratio", cfg.mlp_ratio);

  f("num_prototypes", cfg.num_prototypes);
  f("proj_hidden", cfg.proj_hidden);
  f("proj_bottleneck", cfg.proj_bottleneck);
  f("predictor_hidden", cfg.predictor_hidden);
  f("predictor_blocks", cfg.predictor_blocks);

  f("local_size", cfg.local_size);
  f("local_views", cfg.local_views);
  f("precrop_area_min", cfg.precrop_area_min);
  f("precrop_area_max", cfg.precrop_area_max);
  f("global_area_min", cfg.global_area_min);
  f("global_area_max", cfg.global_area_max);
  f("local_area_min", cfg.local_area_min);
  f("local_area_max", cfg.local_area_max);
  f("aspect_min", cfg.aspect_min);
  f("aspect_max", cfg.aspect_max);
  f("hflip_prob", cfg.hflip_prob);
  f("color_enabled", cfg.color_enabled);
  f("color_jitter_prob", cfg.color_jitter_prob);
  f("color_brightness", cfg.color_brightness);
  f("color_contrast", cfg.color_contrast);
  f("color_saturation", cfg.color_saturation);
  f("color_hue", cfg.color_hue);
  f("color_grayscale_prob", cfg.color_grayscale_prob);
  f("color_blur_prob", cfg.color_blur_prob);
  f("color_blur_sigma_min", cfg.color_blur_sigma_min);
  f("color_blur_sigma_max", cfg.color_blur_sigma_max);
  f("global2_blur_prob", cfg.global2_blur_prob);
  f("global2_solarize_prob", cfg.global2_solarize_prob);
  f("local_blur_prob", cfg.local_blur_prob);

  f("delta", cfg.delta);
  f("clip_frames", cfg.clip_frames);
  f("batch_size", cfg.batch_size);
  f("epochs", cfg.epochs);
  f("clips_per_epoch", cfg.clips_per_epoch);
  f("base_lr", cfg.base_lr);
  f("final_lr", cfg.final_lr);
  f("warmup_epochs", cfg.warmup_epochs);
  f("weight_decay_start", cfg.weight_decay_start);
  f("weight_decay_end", cfg.weight_decay_end);
  f("teacher_temp_start", cfg.teacher_temp_start);
  f("teacher_temp_end", cfg.teacher_temp_end);
  f("teacher_temp_warmup_epochs", cfg.teacher_temp_warmup_epochs);
  f("student_temp", cfg.student_temp);
  f("center_momentum", cfg.center_momentum);
  f("shared_center", cfg.shared_center);
  f("ema_momentum_base", cfg.ema_momentum_base);
  f("grad_clip_norm", cfg.grad_clip_norm);
  f("freeze_output_epochs", cfg.freeze_output_epochs);
  f("loss_mode", cfg.loss_mode);
  f("baseline_mode", cfg.baseline_mode);
  f("time_aug_delta", cfg.time_aug_delta);
  f("precision", cfg.precision);
  f("seed", cfg.seed);
  f("deterministic_timing", cfg.deterministic_timing);

  f("adam_beta1", cfg.adam_beta1);
  f("adam_beta2", cfg.adam_beta2);
  f("adam_eps", cfg.adam_eps);

  f("probe_iters", cfg.probe_iters);
  f("probe_batch", cfg.probe_batch);
  f("probe_lr", cfg.probe_lr);
  f("probe_seed", cfg.probe_seed);
  f("probe_train_frames", cfg.probe_train_frames);
  f("probe_eval_frames", cfg.probe_eval_frames);

  f("synth_frames", cfg.synth_frames);
  f("synth_shapes", cfg.synth_shapes);
  f("synth_classes", cfg.synth_classes);
  f("synth_canvas_w", cfg.synth_canvas_w);
  f("synth_canvas_h", cfg.synth_canvas_h);
  f("synth_flicker", cfg.synth_flicker);
  f("synth_fps", cfg.synth_fps);

  f("sweep_deltas", cfg.sweep_deltas);
}

std::string format_value(const std::string& v) { return v; }
std::string format_value(bool v) { return v ? "true" : "false"; }

template <class T>
std::string format_value(T v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

void parse_value(const std::string& key, const std::string& text, std::string& out) {
  (void)key;
  out = text;
}

void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1")
    out = true;
  else if (text == "false" || text == "0")
    out = false;
  else
    throw ConfigError(key + ": cannot parse '" + text + "' as bool");
}

template <class T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw ConfigError(key + ": cannot parse '" + text + "' as " +
                      (std::is_floating_point_v<T> ? "number" : "integer"));
  out = v;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  bool found = false;
  visit_fields(cfg, [&](const char* name, auto& field) {
    if (key == name) {
      parse_value(key, value, field);
      found = true;
    }
  });
  if (!found) throw ConfigError("unknown key: " + key);
}

std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> pairs;
  visit_fields(cfg, [&](const char* name, const auto& field) {
    pairs.emplace_back(name, format_value(field));
  });
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::string canonical_config_text(const RunConfig& cfg) {
  std::string text;
  for (const auto& [k, v] : config_pairs(cfg)) text += k + "=" + v + "\n";
  return text;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(canonical_config_text(cfg));
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  out << "# config_hash=" << hex << "\n" << canonical_config_text(cfg);
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

RunConfig parse_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());

  RunConfig cfg;
  std::set<std::string> seen;
  std::vector<std::string> problems;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": missing '='");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      problems.push_back("duplicate key: " + key);
      continue;
    }
    try {
      apply_override(cfg, key, value);
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  RunConfig cfg = parse_run_config(path);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + o + "' is not key=value");
    apply_override(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  return cfg;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + s + "'");
    int v = 0;
    parse_value("list entry", item, v);
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

void validate(const RunConfig& cfg) {
  std::vector<std::string> bad;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) bad.push_back(msg);
  };

  check(cfg.image_size > 0 && cfg.patch_size > 0 && cfg.image_size % cfg.patch_size == 0,
        "image_size: must be a positive multiple of patch_size");
  check(cfg.local_size > 0 && cfg.local_size % cfg.patch_size == 0,
        "local_size: must be a positive multiple of patch_size");
  check(cfg.embed_dim > 0 && cfg.heads > 0 && cfg.embed_dim % cfg.heads == 0,
        "embed_dim: must be a positive multiple of heads");
  check(cfg.depth > 0, "depth: must be >= 1");
  check(cfg.mlp_ratio > 0, "mlp_ratio: must be > 0");
  check(cfg.num_prototypes > 0, "num_prototypes: must be >= 1");
  check(cfg.proj_hidden > 0, "proj_hidden: must be >= 1");
  check(cfg.proj_bottleneck > 0, "proj_bottleneck: must be >= 1");
  check(cfg.predictor_hidden > 0, "predictor_hidden: must be >= 1");
  check(cfg.predictor_blocks >= 0, "predictor_blocks: must be >= 0");

  check(cfg.local_views >= 1, "local_views: must be >= 1");
  auto frac_range = [&](double lo, double hi, const std::string& name) {
    check(lo > 0 && hi <= 1.0 && lo <= hi, name + ": need 0 < min <= max <= 1");
  };
  frac_range(cfg.precrop_area_min, cfg.precrop_area_max, "precrop_area_min/max");
  frac_range(cfg.global_area_min, cfg.global_area_max, "global_area_min/max");
  frac_range(cfg.local_area_min, cfg.local_area_max, "local_area_min/max");
  check(cfg.aspect_min > 0 && cfg.aspect_min <= cfg.aspect_max,
        "aspect_min/max: need 0 < min <= max");
  check(cfg.hflip_prob >= 0 && cfg.hflip_prob <= 1, "hflip_prob: must be in [0,1]");
  check(cfg.color_blur_sigma_min > 0 && cfg.color_blur_sigma_min <= cfg.color_blur_sigma_max,
        "color_blur_sigma_min/max: need 0 < min <= max");

  check(cfg.delta >= 1, "delta: must be >= 1");
  check(cfg.clip_frames >= 2, "clip_frames: must be >= 2 (one frame pair)");
  check(cfg.batch_size >= 1, "batch_size: must be >= 1");
  check(cfg.epochs >= 1, "epochs: must be >= 1");
  check(cfg.clips_per_epoch >= cfg.batch_size &&
            (cfg.batch_size < 1 || cfg.clips_per_epoch % cfg.batch_size == 0),
        "clips_per_epoch: must be a positive multiple of batch_size");
  check(cfg.base_lr > 0, "base_lr: must be > 0");
  check(cfg.final_lr > 0, "final_lr: must be > 0");
  check(cfg.warmup_epochs >= 0 && cfg.warmup_epochs <= cfg.epochs,
        "warmup_epochs: must be in [0, epochs]");
  check(cfg.weight_decay_start > 0, "weight_decay_start: must be > 0");
  check(cfg.weight_decay_end > 0, "weight_decay_end: must be > 0");
  check(cfg.teacher_temp_start > 0, "teacher_temp_start: must be > 0");
  check(cfg.teacher_temp_end > 0, "teacher_temp_end: must be > 0");
  check(cfg.teacher_temp_warmup_epochs >= 1, "teacher_temp_warmup_epochs: must be >= 1");
  check(cfg.student_temp > 0, "student_temp: must be > 0");
  check(cfg.center_momentum >= 0 && cfg.center_momentum < 1,
        "center_momentum: must be in [0,1)");
  check(cfg.ema_momentum_base >= 0 && cfg.ema_momentum_base <= 1,
        "ema_momentum_base: must be in [0,1]");
  check(cfg.grad_clip_norm >= 0, "grad_clip_norm: must be >= 0 (0 disables)");
  check(cfg.freeze_output_epochs >= 0, "freeze_output_epochs: must be >= 0");
  try {
    parse_loss_mode(cfg.loss_mode);
  } catch (const ConfigError&) {
    bad.push_back("loss_mode: expected both|dense_only|global_only");
  }
  try {
    parse_baseline_mode(cfg.baseline_mode);
  } catch (const ConfigError&) {
    bad.push_back("baseline_mode: expected ours|dino_frames|dino_precrop|time_aug");
  }
  check(cfg.time_aug_delta >= 1, "time_aug_delta: must be >= 1");
  check(cfg.baseline_mode == "ours" || cfg.loss_mode == "both",
        "loss_mode: baselines have no dense term; only \"both\" is meaningful");
  check(cfg.precision == "single" || cfg.precision == "double",
        "precision: expected single|double");
  check(cfg.adam_beta1 >= 0 && cfg.adam_beta1 < 1, "adam_beta1: must be in [0,1)");
  check(cfg.adam_beta2 >= 0 && cfg.adam_beta2 < 1, "adam_beta2: must be in [0,1)");
  check(cfg.adam_eps > 0, "adam_eps: must be > 0");

  check(cfg.probe_iters >= 0, "probe_iters: must be >= 0");
  check(cfg.probe_batch >= 1, "probe_batch: must be >= 1");
  check(cfg.probe_lr > 0, "probe_lr: must be > 0");
  check(cfg.probe_train_frames >= 1, "probe_train_frames: must be >= 1");
  check(cfg.probe_eval_frames >= 1, "probe_eval_frames: must be >= 1");

  check(cfg.synth_frames >= 1, "synth_frames: must be >= 1");
  check(cfg.synth_shapes >= 0, "synth_shapes: must be >= 0");
  check(cfg.synth_classes >= 1, "synth_classes: must be >= 1");
  check(cfg.synth_canvas_w >= 64 && cfg.synth_canvas_h >= 64,
        "synth_canvas_w/h: must be >= 64");

  try {
    auto deltas = parse_int_list(cfg.sweep_deltas);
    std::set<int> uniq(deltas.begin(), deltas.end());
    if (uniq.size() != deltas.size())
      bad.push_back("sweep_deltas: duplicate entries");
    for (int d : deltas)
      if (d < 1) {
        bad.push_back("sweep_deltas: entries must be >= 1");
        break;
      }
  } catch (const ConfigError&) {
    bad.push_back("sweep_deltas: expected a comma-separated integer list");
  }

  if (!bad.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
}

EncoderConfig encoder_config(const RunConfig& cfg) {
  EncoderConfig e;
  e.image_size = cfg.image_size;
  e.patch_size = cfg.patch_size;
  e.embed_dim = cfg.embed_dim;
  e.depth = cfg.depth;
  e.heads = cfg.heads;
  e.mlp_ratio = cfg.mlp_ratio;
  return e;
}

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.encoder = encoder_config(cfg);
  m.num_prototypes = cfg.num_prototypes;
  m.proj_hidden = cfg.proj_hidden;
  m.proj_bottleneck = cfg.proj_bottleneck;
  m.predictor_hidden = cfg.predictor_hidden;
  m.predictor_blocks = cfg.predictor_blocks;
  return m;
}

AugmentConfig augment_config(const RunConfig& cfg) {
  AugmentConfig a;
  a.global_size = cfg.image_size;
  a.local_size = cfg.local_size;
  a.local_views = cfg.local_views;
  a.precrop_area_min = cfg.precrop_area_min;
  a.precrop_area_max = cfg.precrop_area_max;
  a.global_area_min = cfg.global_area_min;
  a.global_area_max = cfg.global_area_max;
  a.local_area_min = cfg.local_area_min;
  a.local_area_max = cfg.local_area_max;
  a.aspect_min = cfg.aspect_min;
  a.aspect_max = cfg.aspect_max;
  a.hflip_prob = cfg.hflip_prob;
  a.color_enabled = cfg.color_enabled;
  a.color.jitter_prob = cfg.color_jitter_prob;
  a.color.brightness = cfg.color_brightness;
  a.color.contrast = cfg.color_contrast;
  a.color.saturation = cfg.color_saturation;
  a.color.hue = cfg.color_hue;
  a.color.grayscale_prob = cfg.color_grayscale_prob;
  a.color.blur_prob = cfg.color_blur_prob;
  a.color.blur_sigma_min = cfg.color_blur_sigma_min;
  a.color.blur_sigma_max = cfg.color_blur_sigma_max;
  a.global2_blur_prob = cfg.global2_blur_prob;
  a.global2_solarize_prob = cfg.global2_solarize_prob;
  a.local_blur_prob = cfg.local_blur_prob;
  return a;
}

SceneParams scene_params(const RunConfig& cfg) {
  SceneParams p;
  p.canvas_w = cfg.synth_canvas_w;
  p.canvas_h = cfg.synth_canvas_h;
  p.num_frames = cfg.synth_frames;
  p.num_shapes = cfg.synth_shapes;
  p.num_classes = cfg.synth_classes;
  p.flicker = cfg.synth_flicker;
  p.fps = cfg.synth_fps;
  return p;
}

}  // namespace vsd
