#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "vsd/probe.hpp"
#include "vsd/sweep.hpp"
#include "vsd/trainer.hpp"

namespace {

using namespace vsd;

/// A config file plus overrides. --set entries apply first, convenience
/// flags afterwards, so the flags win on conflicts.
struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::string> flags;

  std::vector<std::string> overrides() const {
    std::vector<std::string> v = sets;
    v.insert(v.end(), flags.begin(), flags.end());
    return v;
  }
};

void add_config_options(CLI::App& cmd, ConfigArgs& a) {
  cmd.add_option("--config", a.config_file, "flat key=value config file")
      ->check(CLI::ExistingFile);
  cmd.add_option("--set", a.sets, "KEY=VALUE config override (repeatable)");
  const auto flag = [&cmd, &a](const std::string& name, const std::string& key,
                               const std::string& help) {
    cmd.add_option_function<std::string>(
        name, [&a, key](const std::string& v) { a.flags.push_back(key + "=" + v); }, help);
  };
  flag("--frames", "frames_dir", "frame image directory");
  flag("--labels", "labels_dir", "label map directory");
  flag("--out", "out_dir", "output directory");
  flag("--seed", "seed", "run seed");
  flag("--loss-mode", "loss_mode", "both | dense_only | global_only");
  flag("--baseline-mode", "baseline_mode", "ours | dino_frames | dino_precrop | time_aug");
  flag("--time-aug-delta", "time_aug_delta", "frame gap for the time_aug baseline");
  flag("--precision", "precision", "single | double");
}

RunConfig build_config(const ConfigArgs& a) {
  if (!a.config_file.empty()) return load_run_config(a.config_file, a.overrides());
  RunConfig cfg;
  for (const std::string& s : a.overrides()) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must be KEY=VALUE, got \"" + s + "\"");
    apply_override(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  return cfg;
}

/// Fill an unset out_dir from $VSD_OUT_ROOT/<leaf> before anything is hashed.
void resolve_out_dir(RunConfig& cfg, const std::string& leaf) {
  if (!cfg.out_dir.empty()) return;
  const char* root = std::getenv("VSD_OUT_ROOT");
  if (root == nullptr || *root == '\0')
    throw ConfigError("out_dir: not set (use --out, key out_dir, or VSD_OUT_ROOT)");
  apply_override(cfg, "out_dir", (std::filesystem::path(root) / leaf).string());
}

std::filesystem::path require_dir(const std::string& value, const std::string& key) {
  if (value.empty()) throw ConfigError(key + ": not set");
  const std::filesystem::path p(value);
  if (!std::filesystem::is_directory(p))
    throw IoError(key + ": " + p.string() + " is not a directory");
  return p;
}

int cmd_synthgen(const ConfigArgs& args) {
  RunConfig cfg = build_config(args);
  resolve_out_dir(cfg, "synthgen");
  validate(cfg);
  const SynthScene scene = generate_scene(cfg.seed, scene_params(cfg));
  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  materialize(scene, out);
  save_run_config(cfg, out / "config_resolved.cfg");
  std::cout << "scene manifest: " << (out / "scene.json").string() << "\n";
  std::cout << "frames: " << (out / "frames").string() << "\n";
  std::cout << "labels: " << (out / "labels").string() << "\n";
  return 0;
}

int cmd_pretrain(const ConfigArgs& args, const std::string& resume) {
  RunConfig cfg = build_config(args);
  // Index the data before any output directory exists, so a bad data path
  // leaves no partial outputs behind.
  const FrameStore store = index_frames(require_dir(cfg.frames_dir, "frames_dir"));
  resolve_out_dir(cfg, "pretrain");
  const PretrainResult res = run_pretraining(cfg, store, resume);
  std::cout << "checkpoint: " << res.checkpoint.string() << "\n";
  std::cout << "metrics: " << res.metrics_csv.string() << "\n";
  std::cout << "final loss: " << res.final_loss << "\n";
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(res.config_hash));
  std::cout << "config hash: " << hex << "\n";
  return 0;
}

template <class S>
double probe_once(const RunConfig& cfg, const LabeledFrames& data, int num_classes,
                  const std::string& checkpoint, bool random_baseline,
                  const std::filesystem::path& report_path) {
  std::uint64_t hash = config_hash(cfg);
  TeacherModel<S> teacher =
      random_baseline ? random_teacher<S>(cfg) : load_teacher<S>(checkpoint, cfg, &hash);
  const ProbeRun<S> run = run_probe_t(cfg, teacher, data, num_classes);
  write_probe_report(report_path, run.result, hash);
  return run.result.miou;
}

double dispatch_probe(const RunConfig& cfg, const LabeledFrames& data, int num_classes,
                      const std::string& checkpoint, bool random_baseline,
                      const std::filesystem::path& report_path) {
  if (cfg.precision == "single")
    return probe_once<float>(cfg, data, num_classes, checkpoint, random_baseline, report_path);
  return probe_once<double>(cfg, data, num_classes, checkpoint, random_baseline, report_path);
}

int cmd_probe(const ConfigArgs& args, const std::string& checkpoint, bool random_baseline) {
  RunConfig cfg = build_config(args);
  if (!random_baseline && checkpoint.empty())
    throw ConfigError("--checkpoint: required unless --random-baseline is given");
  const LabeledFrames data = index_labeled_frames(require_dir(cfg.frames_dir, "frames_dir"),
                                                  require_dir(cfg.labels_dir, "labels_dir"));
  resolve_out_dir(cfg, "probe");
  validate(cfg);
  const int num_classes =
      label_class_count(data, cfg.probe_train_frames, cfg.probe_eval_frames);
  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  save_run_config(cfg, out / "config_resolved.cfg");
  const std::filesystem::path report = out / "probe_report.txt";
  const double miou =
      dispatch_probe(cfg, data, num_classes, checkpoint, random_baseline, report);
  std::cout << "miou: " << miou << "\n";
  std::cout << "report: " << report.string() << "\n";
  return 0;
}

int cmd_sweep(const ConfigArgs& args) {
  RunConfig cfg = build_config(args);
  const std::vector<int> deltas = sweep_deltas(cfg);
  const FrameStore store = index_frames(require_dir(cfg.frames_dir, "frames_dir"));
  const LabeledFrames data = index_labeled_frames(require_dir(cfg.frames_dir, "frames_dir"),
                                                  require_dir(cfg.labels_dir, "labels_dir"));
  resolve_out_dir(cfg, "sweep");
  validate(cfg);
  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  save_run_config(cfg, out / "config_resolved.cfg");

  std::vector<SweepRow> rows;
  for (const int d : deltas) {
    RunConfig sub = cfg;
    sub.delta = d;
    sub.out_dir = (out / ("delta_" + std::to_string(d))).string();
    SweepRow row;
    row.delta = d;
    try {
      const PretrainResult res = run_pretraining(sub, store);
      const int num_classes =
          label_class_count(data, sub.probe_train_frames, sub.probe_eval_frames);
      row.miou = dispatch_probe(sub, data, num_classes, res.checkpoint.string(), false,
                                std::filesystem::path(sub.out_dir) / "probe_report.txt");
      row.loss_final = res.final_loss;
    } catch (const Error& e) {
      std::cerr << "stride " << d << " failed: " << e.what() << "\n";
      row.miou = std::nan("");
      row.loss_final = std::nan("");
      row.ok = false;
    }
    rows.push_back(row);
  }

  const std::uint64_t hash = config_hash(cfg);
  write_sweep_csv(out / "sweep.csv", rows, hash);
  write_sweep_plot(out / "sweep.svg", rows, hash);
  std::cout << "sweep csv: " << (out / "sweep.csv").string() << "\n";
  std::cout << "sweep plot: " << (out / "sweep.svg").string() << "\n";
  for (const SweepRow& r : rows)
    if (!r.ok) return 1;
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  std::uint64_t hash = 0;
  const std::vector<SweepRow> rows = read_sweep_csv(csv, &hash);
  write_sweep_plot(out, rows, hash);
  std::cout << "sweep plot: " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video self-distillation for single-image encoders"};
  app.require_subcommand(1);
  int rc = 0;

  ConfigArgs gen_args;
  CLI::App* gen = app.add_subcommand("synthgen", "render a synthetic labeled video to disk");
  add_config_options(*gen, gen_args);
  gen->callback([&] { rc = cmd_synthgen(gen_args); });

  ConfigArgs pre_args;
  std::string resume;
  CLI::App* pre = app.add_subcommand("pretrain", "run self-distillation pretraining");
  add_config_options(*pre, pre_args);
  pre->add_option("--resume", resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  pre->callback([&] { rc = cmd_pretrain(pre_args, resume); });

  ConfigArgs probe_args;
  std::string checkpoint;
  bool random_baseline = false;
  CLI::App* probe = app.add_subcommand("probe", "train and score the dense linear probe");
  add_config_options(*probe, probe_args);
  probe->add_option("--checkpoint", checkpoint, "training checkpoint with teacher weights")
      ->check(CLI::ExistingFile);
  probe->add_flag("--random-baseline", random_baseline,
                  "probe a freshly initialized encoder instead of a checkpoint");
  probe->callback([&] { rc = cmd_probe(probe_args, checkpoint, random_baseline); });

  ConfigArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep-stride", "pretrain + probe across strides");
  add_config_options(*sweep, sweep_args);
  sweep->add_option_function<std::string>(
      "--deltas",
      [&sweep_args](const std::string& v) { sweep_args.flags.push_back("sweep_deltas=" + v); },
      "comma-separated strides, e.g. 1,5,15,30");
  sweep->callback([&] { rc = cmd_sweep(sweep_args); });

  std::string plot_csv, plot_out;
  CLI::App* plot = app.add_subcommand("plot", "redraw the sweep plot from its CSV");
  plot->add_option("--csv", plot_csv, "sweep CSV file")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "output SVG path")->required();
  plot->callback([&] { rc = cmd_plot(plot_csv, plot_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const vsd::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
