#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "pvg/config.hpp"
#include "pvg/image_io.hpp"
#include "pvg/point_io.hpp"
#include "pvg/synthetic.hpp"
#include "pvg/trainer.hpp"

#ifndef PVG_GIT_HASH
#define PVG_GIT_HASH "unknown"
#endif

namespace fs = std::filesystem;
using namespace pvg;

namespace {

enum Exit { kOk = 0, kSpec = 2, kIo = 3, kEval = 4, kNumeric = 5 };

class EmptySplit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int verbosity = 1;

void info(const std::string& msg) {
  if (verbosity > 0) std::fprintf(stderr, "%s\n", msg.c_str());
}

void write_run_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                        std::uint64_t seed, const std::string& digest) {
  fs::create_directories(dir);
  nlohmann::json j = {{"command", command}, {"args", args},          {"seed", seed},
                      {"git_hash", PVG_GIT_HASH}, {"config_digest", digest}, {"threads", omp_get_max_threads()}};
  std::ofstream out(dir / "run.json");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write '" + (dir / "run.json").string() + "'");
}

TrainConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  if (!path.empty()) apply_config(cfg, parse_config_file(path));
  ConfigValues extra;
  for (const auto& o : overrides) extra.insert_or_assign(parse_override(o).first, parse_override(o).second);
  apply_config(cfg, extra);
  cfg.validate();
  return cfg;
}

std::vector<std::size_t> select_frames(const SceneDataset& ds, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> all(ds.frames.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  const DatasetSplit s = split_every_fourth(ds.frames);
  if (split == "train") return s.train;
  if (split == "test") return s.test;
  throw ConfigError("unknown split '" + split + "' (train, test or all)");
}

std::size_t find_frame(const SceneDataset& ds, const std::string& key) {
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    if (ds.frames[i].name == key) return i;
  char* end = nullptr;
  const long v = std::strtol(key.c_str(), &end, 10);
  if (!key.empty() && *end == '\0' && v >= 0 && static_cast<std::size_t>(v) < ds.frames.size())
    return static_cast<std::size_t>(v);
  throw ConfigError("no frame named or numbered '" + key + "'");
}

void write_channels_out(const fs::path& dir, const std::string& stem, const RenderOutput<double>& out,
                        const std::vector<std::string>& channels, double velocity_scale) {
  fs::create_directories(dir);
  for (const auto& ch : channels) {
    if (ch == "color") {
      write_png(dir / (stem + "_color.png"), image_cast<float>(out.color));
    } else if (ch == "opacity") {
      write_png(dir / (stem + "_opacity.png"), image_cast<float>(out.opacity));
    } else if (ch == "depth") {
      ImageF inv(out.height(), out.width(), 1);
      double hi = 0.0;
      for (std::size_t i = 0; i < inv.size(); ++i) {
        const double z = out.depth.values()[i];
        inv.values()[i] = z > 0 ? static_cast<float>(1.0 / z) : 0.0f;
        hi = std::max(hi, static_cast<double>(inv.values()[i]));
      }
      if (hi > 0)
        for (float& v : inv.values()) v = static_cast<float>(v / hi);
      write_png(dir / (stem + "_depth.png"), inv);
      write_channels(dir / (stem + "_depth.pvgc"), image_cast<float>(out.depth));
    } else if (ch == "velocity") {
      write_png(dir / (stem + "_velocity.png"), colorize_velocity(out, velocity_scale));
    } else {
      throw ConfigError("unknown channel '" + ch + "' (color, opacity, depth, velocity)");
    }
  }
}

int cmd_synth(const std::string& spec_path, const std::string& preset, const fs::path& out,
              std::optional<std::uint64_t> seed) {
  SyntheticSceneSpec spec = spec_path.empty() ? mover_1_spec() : load_synthetic_spec(spec_path);
  if (spec_path.empty() && preset != "mover-1") throw SpecInvalid("preset", "unknown preset '" + preset + "'");
  if (seed) spec.seed = *seed;
  const SyntheticScene scene = generate_synthetic(spec);
  save_synthetic(scene, out);
  info("wrote " + std::to_string(scene.dataset.frames.size()) + " frames and " +
       std::to_string(scene.dataset.lidar.size()) + " LiDAR points to " + out.string());
  return kOk;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const fs::path& data_dir,
              const fs::path& out, const std::string& resume, const std::string& split, int checkpoint_every,
              const std::vector<std::string>& argv) {
  TrainConfig cfg;
  TrainState state;
  std::optional<Checkpoint> ck;
  if (!resume.empty()) {
    ck = load_checkpoint(resume);
    cfg = ck->config;
    ConfigValues extra;
    for (const auto& o : overrides) extra.insert_or_assign(parse_override(o).first, parse_override(o).second);
    apply_config(cfg, extra);
    cfg.validate();
  } else {
    cfg = build_config(config_path, overrides);
  }
  LoadOptions lo;
  lo.frame_dt = cfg.scene.frame_dt;
  const SceneDataset ds = load_dataset(data_dir, lo);
  const auto frames = select_frames(ds, split);
  if (frames.empty()) throw IoError("dataset '" + data_dir.string() + "' has no training frames");
  state = ck ? std::move(ck->state) : initialize_state(ds, frames, cfg);

  fs::create_directories(out);
  write_run_manifest(out, "train", argv, cfg.seed, config_digest(cfg));
  {
    std::ofstream c(out / "config.cfg");
    c << dump_config(cfg);
  }
  const fs::path trace = out / "loss.csv";
  const bool fresh = !ck || !fs::exists(trace);
  std::ofstream csv(trace, fresh ? std::ios::trunc : std::ios::app);
  if (fresh) csv << kLossTraceHeader << "\n";
  std::ofstream events(out / "events.log", fresh ? std::ios::trunc : std::ios::app);

  Trainer trainer(ds, frames, cfg, std::move(state));
  info("training " + std::to_string(trainer.state().points.size()) + " points on " + std::to_string(frames.size()) +
       " frames from iteration " + std::to_string(trainer.state().iteration));
  const auto start = std::chrono::steady_clock::now();
  while (!trainer.done()) {
    const StepRecord rec = trainer.step();
    csv << loss_trace_row(rec) << "\n";
    if (rec.event) events << rec.event->to_string() << "\n";
    if (rec.opacity_reset) events << "opacity_reset iteration=" << rec.iteration << "\n";
    if (verbosity > 1 || (verbosity > 0 && rec.iteration % 500 == 0)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[200];
      std::snprintf(buf, sizeof buf, "iter %lld loss %.5f points %zu level %d (%.1fs)",
                    static_cast<long long>(rec.iteration), rec.loss.total, rec.points, rec.level, secs);
      info(buf);
    }
    if (checkpoint_every > 0 && rec.iteration % checkpoint_every == 0)
      save_checkpoint(out / ("checkpoint_" + std::to_string(rec.iteration) + ".pvgk"), trainer.state(), cfg);
  }
  csv.flush();
  save_checkpoint(out / "checkpoint.pvgk", trainer.state(), cfg);
  info("wrote " + (out / "checkpoint.pvgk").string());
  return kOk;
}

int cmd_render(const std::string& checkpoint, const fs::path& data_dir, const std::vector<std::string>& frame_keys,
               std::optional<double> time, double focal_scale, std::vector<double> shift,
               const std::vector<std::string>& channels, double velocity_scale, const fs::path& out,
               const std::vector<std::string>& argv) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  LoadOptions lo;
  lo.frame_dt = ck.config.scene.frame_dt;
  const SceneDataset ds = load_dataset(data_dir, lo);
  std::vector<std::size_t> idx;
  if (frame_keys.empty())
    for (std::size_t i = 0; i < ds.frames.size(); ++i) idx.push_back(i);
  for (const auto& k : frame_keys) idx.push_back(find_frame(ds, k));
  if (shift.size() != 2) shift = {0.0, 0.0};
  write_run_manifest(out, "render", argv, ck.config.seed, config_digest(ck.config));
  for (std::size_t i : idx) {
    const CameraFrame& f = ds.frames[i];
    Camera cam = f.camera;
    cam.intrinsics.fx *= focal_scale;
    cam.intrinsics.fy *= focal_scale;
    cam.intrinsics.cx += shift[0];
    cam.intrinsics.cy += shift[1];
    const double t = time ? ds.time_map.to_scene(*time) : f.timestamp;
    const auto res = render_view(ck.state.points, &ck.state.cube, cam, t, ck.state.scene);
    write_channels_out(out, f.name, res, channels, velocity_scale);
  }
  info("rendered " + std::to_string(idx.size()) + " views to " + out.string());
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const fs::path& data_dir, const std::string& split, const fs::path& report,
             const std::vector<std::string>& argv) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  LoadOptions lo;
  lo.frame_dt = ck.config.scene.frame_dt;
  const SceneDataset ds = load_dataset(data_dir, lo);
  const auto idx = select_frames(ds, split);
  if (idx.empty()) throw EmptySplit("the '" + split + "' split of '" + data_dir.string() + "' is empty");
  const EvalReport rep =
      evaluate_frames(ck.state.points, ck.state.cube, ck.state.scene, ds.frames, idx, ck.config.double_precision);
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& m : rep.frames)
    frames.push_back({{"frame", m.name}, {"time", m.timestamp}, {"psnr", m.psnr}, {"ssim", m.ssim}});
  nlohmann::json j = {{"split", split},          {"frames", frames},        {"mean_psnr", rep.mean_psnr},
                      {"mean_ssim", rep.mean_ssim}, {"points", ck.state.points.size()}, {"iteration", ck.state.iteration}};
  if (!report.empty()) {
    if (report.has_parent_path()) {
      fs::create_directories(report.parent_path());
      write_run_manifest(report.parent_path(), "eval", argv, ck.config.seed, config_digest(ck.config));
    }
    std::ofstream o(report);
    o << j.dump(2) << "\n";
    if (!o) throw IoError("cannot write '" + report.string() + "'");
  }
  std::printf("split=%s frames=%zu psnr=%.4f ssim=%.5f\n", split.c_str(), rep.frames.size(), rep.mean_psnr,
              rep.mean_ssim);
  return kOk;
}

int cmd_separate(const std::string& checkpoint, double threshold, const fs::path& out, const std::string& data_dir,
                 const std::vector<std::string>& argv) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const SplitExport ex = export_split(ck.state.points, ck.state.scene, threshold, out);
  write_run_manifest(out, "separate", argv, ck.config.seed, config_digest(ck.config));
  info("static " + std::to_string(ex.static_count) + " dynamic " + std::to_string(ex.dynamic_count));
  if (!data_dir.empty()) {
    LoadOptions lo;
    lo.frame_dt = ck.config.scene.frame_dt;
    const SceneDataset ds = load_dataset(data_dir, lo);
    const StaticPartition part = classify_static(ck.state.points, ck.state.scene, threshold);
    std::vector<PvgPoint> stat;
    for (std::size_t i : part.static_indices) stat.push_back(ck.state.points[i]);
    fs::create_directories(out / "renders");
    for (const auto& f : ds.frames) {
      const auto full = render_view(ck.state.points, &ck.state.cube, f.camera, f.timestamp, ck.state.scene);
      const auto only = render_view(stat, &ck.state.cube, f.camera, f.timestamp, ck.state.scene);
      write_png(out / "renders" / (f.name + "_full.png"), image_cast<float>(full.color));
      write_png(out / "renders" / (f.name + "_static.png"), image_cast<float>(only.color));
    }
  }
  std::printf("static=%zu dynamic=%zu\n", ex.static_count, ex.dynamic_count);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic vibration Gaussian reconstruction"};
  app.require_subcommand(1);
  int threads = 0;
  bool quiet = false, verbose = false;
  app.add_option("--threads", threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_flag("-q,--quiet", quiet, "Only print results and errors");
  app.add_flag("-v,--verbose", verbose, "Log every iteration");

  std::string spec_path, preset = "mover-1";
  std::string out_dir, data_dir, config_path, resume, checkpoint, split = "train", eval_split = "test", report;
  std::vector<std::string> overrides, frames, channels{"color"};
  std::optional<std::uint64_t> seed;
  std::optional<double> eta, time;
  std::optional<int> iters;
  int checkpoint_every = 0;
  double focal_scale = 1.0, threshold = 1.0, velocity_scale = 1.0;
  std::vector<double> shift;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  synth->add_option("--spec", spec_path, "Scene spec file")->check(CLI::ExistingFile);
  synth->add_option("--preset", preset, "Built-in scene when no spec is given")->capture_default_str();
  synth->add_option("--seed", seed, "Override the spec seed");
  synth->add_option("-o,--out", out_dir, "Output dataset directory")->required();

  auto* train = app.add_subcommand("train", "Optimize a model on a dataset");
  train->add_option("-d,--data", data_dir, "Dataset directory")->required();
  train->add_option("-o,--out", out_dir, "Output directory")->required();
  train->add_option("-c,--config", config_path, "Config file")->check(CLI::ExistingFile);
  train->add_option("-s,--set", overrides, "Override, key=value (repeatable)");
  train->add_option("--seed", seed, "Shorthand for --set train.seed=N");
  train->add_option("--eta", eta, "Shorthand for --set train.eta=X");
  train->add_option("--iters", iters, "Shorthand for --set train.total_iters=N");
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--split", split, "Training frames: train (every-4th held out) or all")->capture_default_str();
  train->add_option("--checkpoint-every", checkpoint_every, "Extra checkpoints every N iterations");

  auto* render = app.add_subcommand("render", "Render a trained model");
  render->add_option("-k,--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  render->add_option("-d,--data", data_dir, "Dataset supplying camera poses")->required();
  render->add_option("-f,--frame", frames, "Frame names or indices (default: all)");
  render->add_option("-t,--time", time, "Raw timestamp to render at instead of the frame's");
  render->add_option("--focal-scale", focal_scale, "Multiply the focal length")->check(CLI::PositiveNumber);
  render->add_option("--shift", shift, "Principal point shift in pixels (dx dy)")->expected(2);
  render->add_option("--channels", channels, "color, opacity, depth, velocity")->delimiter(',');
  render->add_option("--velocity-scale", velocity_scale, "Flow magnitude that saturates the color wheel");
  render->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "PSNR and SSIM on a split");
  eval->add_option("-k,--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("-d,--data", data_dir, "Dataset directory")->required();
  eval->add_option("--split", eval_split, "test (every 4th frame), train or all")->capture_default_str();
  eval->add_option("-r,--report", report, "JSON report path");

  auto* separate = app.add_subcommand("separate", "Export static and dynamic points");
  separate->add_option("-k,--checkpoint", checkpoint, "Checkpoint")->required()->check(CLI::ExistingFile);
  separate->add_option("--threshold", threshold, "Points with beta / l below this are dynamic")->capture_default_str();
  separate->add_option("-d,--data", data_dir, "Dataset for full vs static comparison renders");
  separate->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* config = app.add_subcommand("config", "Print every config key with its default and meaning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kSpec;
  }
  if (threads > 0) omp_set_num_threads(threads);
  verbosity = quiet ? 0 : verbose ? 2 : 1;
  const std::vector<std::string> args(argv + 1, argv + argc);

  try {
    if (*synth) return cmd_synth(spec_path, preset, out_dir, seed);
    if (*train) {
      if (seed) overrides.push_back("train.seed=" + std::to_string(*seed));
      if (eta) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "train.eta=%.17g", *eta);
        overrides.push_back(buf);
      }
      if (iters) overrides.push_back("train.total_iters=" + std::to_string(*iters));
      if (!fs::exists(fs::path(data_dir) / kManifestName))
        throw ManifestMissing("no dataset at '" + data_dir + "'");
      return cmd_train(config_path, overrides, data_dir, out_dir, resume, split, checkpoint_every, args);
    }
    if (*render)
      return cmd_render(checkpoint, data_dir, frames, time, focal_scale, shift, channels, velocity_scale, out_dir, args);
    if (*eval) return cmd_eval(checkpoint, data_dir, eval_split, report, args);
    if (*separate) return cmd_separate(checkpoint, threshold, out_dir, data_dir, args);
    if (*config) {
      const std::string defaults = dump_config(TrainConfig{});
      std::printf("# key: meaning\n");
      for (const auto& [key, doc] : config_reference()) std::printf("# %s: %s\n", key.c_str(), doc.c_str());
      std::printf("\n%s", defaults.c_str());
      return kOk;
    }
  } catch (const SpecInvalid& e) {
    std::fprintf(stderr, "error: invalid spec: %s\n", e.what());
    return kSpec;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: invalid config: %s\n", e.what());
    return kSpec;
  } catch (const EmptySplit& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kEval;
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumeric;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const BadPose& e) {
    std::fprintf(stderr, "error: bad pose: %s\n", e.what());
    return kIo;
  } catch (const TimestampDisorder& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSpec;
  }
  return kOk;
}
