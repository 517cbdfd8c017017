#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pvg/adaptive_control.hpp"
#include "pvg/config.hpp"
#include "pvg/cubemap.hpp"
#include "pvg/dataset.hpp"
#include "pvg/optimizer.hpp"

namespace pvg {

struct TrainState {
  std::vector<PvgPoint> points;
  CubeMap cube;
  AdamState adam;
  DensifyStats stats;
  /// Completed optimization steps.
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
  TimeMap time_map;
  /// Scene constants with the radius and center resolved against the dataset.
  GlobalConfig scene;

  bool operator==(const TrainState&) const = default;
};

/// Scene constants from the config, with r and the center taken from the
/// dataset unless the config sets a radius.
GlobalConfig resolve_scene(const TrainConfig& cfg, const SceneDataset& data);

/// Seeds LiDAR, near and far points plus a uniform sky cube. Colors come from
/// the frame closest in time that sees the point.
TrainState initialize_state(const SceneDataset& data, std::span<const std::size_t> frames, const TrainConfig& cfg);

/// Root of the mean squared distance to the three nearest neighbours.
std::vector<double> nearest_neighbour_scale(std::span<const Vec3> positions);

struct StepSample {
  std::size_t frame = 0;  // index into the training frame list
  double dt = 0.0;
};

/// Uniform frame; dt = 0 with probability eta, otherwise U(-delta, delta).
StepSample sample_step(std::size_t frame_count, const TrainConfig& cfg, std::mt19937_64& rng);

/// Downsample factor: coarse_start_downsample halved every coarse_step_iters, floored at 1.
int coarse_level(std::int64_t iteration, const TrainConfig& cfg);

/// Step sizes at an iteration; the position and tau steps decay exponentially.
LearningRates learning_rates(const TrainConfig& cfg, const GlobalConfig& scene, std::int64_t iteration);

/// Last iteration that densifies.
std::int64_t densify_stop(const TrainConfig& cfg);

RenderSettings training_render_settings(const TrainConfig& cfg, std::int64_t iteration);

struct StepRecord {
  std::int64_t iteration = 0;  // after the step
  LossBreakdown loss;
  std::size_t points = 0;
  int level = 1;
  std::size_t frame = 0;
  double dt = 0.0;
  std::optional<ControlEvent> event;
  bool opacity_reset = false;
};

inline constexpr const char* kLossTraceHeader = "iteration,total,l1,ssim,depth,opacity,velocity,points,level";
std::string loss_trace_row(const StepRecord& r);

class Trainer {
 public:
  /// `frames` selects the training views of `data`, which must outlive the trainer.
  Trainer(const SceneDataset& data, std::vector<std::size_t> frames, TrainConfig cfg, TrainState state);

  const TrainConfig& config() const { return cfg_; }
  const TrainState& state() const { return state_; }
  TrainState& state() { return state_; }
  bool done() const { return state_.iteration >= cfg_.total_iters; }

  /// sample_step followed by train_step.
  StepRecord step();
  /// One optimization step on training frame `frame` rendered at its
  /// timestamp from states estimated dt earlier.
  StepRecord train_step(std::size_t frame, double dt);

  /// Training views at a downsample factor, built on first use.
  const std::vector<CameraFrame>& frames_at(int factor);

 private:
  template <typename Real>
  LossBreakdown forward_backward(const CameraFrame& frame, double dt, GradientBuffer& grads);

  const SceneDataset* data_;
  std::vector<std::size_t> frames_;
  TrainConfig cfg_;
  TrainState state_;
  std::map<int, std::vector<CameraFrame>> levels_;
};

/// A view at a lower resolution: area-averaged image, thresholded sky mask and
/// LiDAR depth re-projected with the scaled intrinsics.
CameraFrame downsample_frame(const CameraFrame& frame, int factor, std::span<const LidarPoint> lidar, double frame_dt);

inline constexpr const char* kCheckpointMagic = "PVGK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Config, iteration, RNG, time map, points, sky, moments and statistics,
/// followed by a CRC-32 of everything before it.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg);

struct Checkpoint {
  TrainState state;
  TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct FrameMetrics {
  std::string name;
  double timestamp = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

/// Full-resolution renders at each frame's pose and time, no sky jitter.
EvalReport evaluate_frames(std::span<const PvgPoint> points, const CubeMap& cube, const GlobalConfig& scene,
                           std::span<const CameraFrame> frames, std::span<const std::size_t> indices,
                           bool double_precision);

/// Plain render of a trained model for output; colors in [0, 1].
RenderOutput<double> render_view(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                                 const GlobalConfig& scene);

}  // namespace pvg
