#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vsd/augment.hpp"
#include "vsd/model.hpp"
#include "vsd/synthvideo.hpp"

namespace vsd {

enum class BaselineMode { kOurs, kDinoFrames, kDinoPrecrop, kTimeAug };

BaselineMode parse_baseline_mode(const std::string& s);
std::string to_string(BaselineMode m);

/// Everything a run needs, as one flat key=value namespace. A run is
/// reproducible from this plus the data directory alone; the FNV-1a hash of
/// the canonical listing is stamped into every output file.
struct RunConfig {
  // paths
  std::string frames_dir;
  std::string labels_dir;
  std::string out_dir;

  // encoder
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;
  int depth = 4;
  int heads = 4;
  double mlp_ratio = 4.0;

  // heads on top of the encoder
  int num_prototypes = 256;
  int proj_hidden = 256;
  int proj_bottleneck = 64;
  int predictor_hidden = 128;
  int predictor_blocks = 2;

  // view pipeline
  int local_size = 32;
  int local_views = 5;
  double precrop_area_min = 0.05;
  double precrop_area_max = 0.20;
  double global_area_min = 0.4;
  double global_area_max = 1.0;
  double local_area_min = 0.05;
  double local_area_max = 0.4;
  double aspect_min = 0.75;
  double aspect_max = 4.0 / 3.0;
  double hflip_prob = 0.5;
  bool color_enabled = true;
  double color_jitter_prob = 0.8;
  double color_brightness = 0.4;
  double color_contrast = 0.4;
  double color_saturation = 0.2;
  double color_hue = 0.1;
  double color_grayscale_prob = 0.2;
  double color_blur_prob = 0.5;
  double color_blur_sigma_min = 0.1;
  double color_blur_sigma_max = 2.0;
  double global2_blur_prob = 0.1;
  double global2_solarize_prob = 0.2;
  double local_blur_prob = 0.5;

  // training
  int delta = 30;
  int clip_frames = 3;
  int batch_size = 8;
  int epochs = 100;
  int clips_per_epoch = 256;
  double base_lr = 5e-4;  // peak lr = base_lr * batch_size / 256
  double final_lr = 1e-6;
  int warmup_epochs = 10;
  double weight_decay_start = 0.04;
  double weight_decay_end = 0.4;
  double teacher_temp_start = 0.04;
  double teacher_temp_end = 0.07;
  int teacher_temp_warmup_epochs = 30;
  double student_temp = 0.1;
  double center_momentum = 0.9;
  bool shared_center = false;
  double ema_momentum_base = 0.996;
  double grad_clip_norm = 3.0;
  int freeze_output_epochs = 1;
  std::string loss_mode = "both";
  std::string baseline_mode = "ours";
  int time_aug_delta = 5;
  std::string precision = "double";
  std::uint64_t seed = 0;
  bool deterministic_timing = false;

  // optimizer
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // linear probe
  int probe_iters = 1000;
  int probe_batch = 64;
  double probe_lr = 0.01;
  std::uint64_t probe_seed = 0;
  int probe_train_frames = 96;
  int probe_eval_frames = 48;

  // synthetic video generator
  int synth_frames = 600;
  int synth_shapes = 6;
  int synth_classes = 4;
  int synth_canvas_w = 160;
  int synth_canvas_h = 160;
  double synth_flicker = 0.0;
  double synth_fps = 30.0;

  // stride sweep
  std::string sweep_deltas = "1,5,15,30";
};

std::uint64_t fnv1a64(std::string_view s);

/// Set one field from its key and textual value; throws ConfigError on an
/// unknown key or unparsable value.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// The full key=value listing, sorted by key, one entry per field.
std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& cfg);

/// Sorted "key=value\n" lines; what the config hash is computed over.
std::string canonical_config_text(const RunConfig& cfg);

std::uint64_t config_hash(const RunConfig& cfg);

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Parse a flat key=value file ('#' starts a comment). Unknown and duplicate
/// keys are all collected and reported in one ConfigError.
RunConfig parse_run_config(const std::filesystem::path& path);

/// parse_run_config plus key=value override strings applied in order.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides);

/// Range/consistency checks; one ConfigError naming every offending key.
void validate(const RunConfig& cfg);

EncoderConfig encoder_config(const RunConfig& cfg);
ModelConfig model_config(const RunConfig& cfg);
AugmentConfig augment_config(const RunConfig& cfg);
SceneParams scene_params(const RunConfig& cfg);

/// Parse "1,5,15,30" into ints; used for sweep_deltas.
std::vector<int> parse_int_list(const std::string& s);

}  // namespace vsd
