#include "pvg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pvg/backward.hpp"
#include "pvg/camera.hpp"
#include "pvg/rasterizer.hpp"

namespace pvg {

GlobalConfig resolve_scene(const TrainConfig& cfg, const SceneDataset& data) {
  GlobalConfig g = cfg.scene;
  g.scene_radius = cfg.scene.scene_radius > 0.0 ? cfg.scene.scene_radius : data.scene_radius;
  g.scene_center = data.scene_center;
  g.validate();
  return g;
}

std::vector<double> nearest_neighbour_scale(std::span<const Vec3> positions) {
  const std::size_t n = positions.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return positions[a].x() < positions[b].x() || (positions[a].x() == positions[b].x() && a < b);
  });
  std::vector<double> out(n, 0.0);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t k = 0; k < count; ++k) {
    const Vec3& p = positions[order[k]];
    double best[3] = {INFINITY, INFINITY, INFINITY};
    auto offer = [&](std::int64_t j) {
      const double d = (positions[order[j]] - p).squaredNorm();
      if (d >= best[2]) return;
      best[2] = d;
      if (best[2] < best[1]) std::swap(best[1], best[2]);
      if (best[1] < best[0]) std::swap(best[0], best[1]);
    };
    for (std::int64_t j = k - 1; j >= 0; --j) {
      const double dx = p.x() - positions[order[j]].x();
      if (dx * dx >= best[2]) break;
      offer(j);
    }
    for (std::int64_t j = k + 1; j < count; ++j) {
      const double dx = positions[order[j]].x() - p.x();
      if (dx * dx >= best[2]) break;
      offer(j);
    }
    double sum = 0.0;
    int found = 0;
    for (double d : best)
      if (std::isfinite(d)) {
        sum += d;
        ++found;
      }
    out[order[k]] = found ? std::sqrt(sum / found) : 1.0;
  }
  return out;
}

namespace {

Vec3 random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const Vec3 d(normal(rng), normal(rng), normal(rng));
    const double len = d.norm();
    if (len > 1e-12) return d / len;
  }
}

Vec3 observed_color(const Vec3& x, double t, std::span<const CameraFrame* const> frames) {
  std::vector<std::pair<double, const CameraFrame*>> by_time;
  by_time.reserve(frames.size());
  for (const CameraFrame* f : frames) by_time.emplace_back(std::abs(f->timestamp - t), f);
  std::stable_sort(by_time.begin(), by_time.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [gap, f] : by_time) {
    const auto& intr = f->camera.intrinsics;
    const auto proj = project_point(world_to_camera(x, f->camera.extrinsics), intr);
    if (!proj) continue;
    const int u = static_cast<int>(std::floor(proj->pixel.x()));
    const int v = static_cast<int>(std::floor(proj->pixel.y()));
    if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) continue;
    return Vec3(f->image.at(v, u, 0), f->image.at(v, u, 1), f->image.at(v, u, 2));
  }
  return Vec3::Constant(0.5);
}

}  // namespace

TrainState initialize_state(const SceneDataset& data, std::span<const std::size_t> frames, const TrainConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("initialization needs at least one training frame");
  TrainState s;
  s.scene = resolve_scene(cfg, data);
  s.rng.seed(cfg.seed);
  s.time_map = data.time_map;

  std::vector<const CameraFrame*> views;
  double t_min = INFINITY, t_max = -INFINITY;
  for (std::size_t i : frames) {
    views.push_back(&data.frames.at(i));
    t_min = std::min(t_min, data.frames[i].timestamp);
    t_max = std::max(t_max, data.frames[i].timestamp);
  }

  std::vector<Vec3> pos;
  std::vector<double> tau;
  std::vector<std::size_t> pick(data.lidar.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  const std::size_t lidar_count = std::min<std::size_t>(pick.size(), static_cast<std::size_t>(cfg.init.lidar_points));
  for (std::size_t i = 0; i < lidar_count; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, pick.size() - 1);
    std::swap(pick[i], pick[d(s.rng)]);
    pos.push_back(data.lidar[pick[i]].position);
    tau.push_back(data.lidar[pick[i]].timestamp);
  }

  const double r = s.scene.scene_radius;
  const Vec3& c = s.scene.scene_center;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_time = [&] { return t_min + (t_max - t_min) * unit(s.rng); };
  for (int i = 0; i < cfg.init.near_points; ++i) {
    const Vec3 dir = random_direction(s.rng);
    pos.push_back(c + r * unit(s.rng) * dir);
    tau.push_back(random_time());
  }
  const double inv_lo = 1.0 / (cfg.init.far_limit * r);
  const double inv_hi = 1.0 / r;
  for (int i = 0; i < cfg.init.far_points; ++i) {
    const Vec3 dir = random_direction(s.rng);
    const double inv = inv_lo + (inv_hi - inv_lo) * unit(s.rng);
    pos.push_back(c + dir / inv);
    tau.push_back(random_time());
  }

  const std::vector<double> nn = nearest_neighbour_scale(pos);
  s.points.resize(pos.size());
  const auto count = static_cast<std::int64_t>(pos.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    PvgPoint& p = s.points[i];
    p.mu = pos[i];
    p.log_scale = Vec3::Constant(std::log(std::max(nn[i], 1e-7)));
    p.opacity_logit = logit(cfg.init.opacity);
    p.color = observed_color(pos[i], tau[i], views);
    p.tau = tau[i];
    p.log_beta = std::log(cfg.init.beta);
  }
  s.cube = CubeMap(cfg.init.cube_resolution, Vec3::Constant(cfg.init.cube_init));
  s.adam.resize(s.points.size(), s.cube.texel_count());
  s.stats.resize(s.points.size());
  return s;
}

StepSample sample_step(std::size_t frame_count, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (frame_count == 0) throw std::invalid_argument("sample_step needs at least one frame");
  StepSample out;
  out.frame = std::uniform_int_distribution<std::size_t>(0, frame_count - 1)(rng);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (!(u < cfg.eta)) {
    const double delta = cfg.delta();
    out.dt = std::uniform_real_distribution<double>(-delta, delta)(rng);
  }
  return out;
}

int coarse_level(std::int64_t iteration, const TrainConfig& cfg) {
  int factor = std::max(1, cfg.coarse_start_downsample);
  for (std::int64_t k = std::max<std::int64_t>(0, iteration) / cfg.coarse_step_iters; k > 0 && factor > 1; --k)
    factor /= 2;
  return std::max(1, factor);
}

LearningRates learning_rates(const TrainConfig& cfg, const GlobalConfig& scene, std::int64_t iteration) {
  const double frac = std::clamp(static_cast<double>(iteration) / cfg.total_iters, 0.0, 1.0);
  LearningRates lr;
  lr.mu = std::exp((1.0 - frac) * std::log(cfg.lr.mu_init) + frac * std::log(cfg.lr.mu_final)) * scene.scene_radius;
  lr.tau = lr.mu * (cfg.lr.tau_scale > 0.0 ? cfg.lr.tau_scale : scene.frame_dt);
  lr.rot = cfg.lr.rot;
  lr.log_scale = cfg.lr.log_scale;
  lr.opacity = cfg.lr.opacity;
  lr.color = cfg.lr.color;
  lr.log_beta = cfg.lr.log_beta;
  lr.vel = cfg.lr.vel;
  lr.cube = cfg.lr.cube;
  return lr;
}

std::int64_t densify_stop(const TrainConfig& cfg) {
  return cfg.control.stop_iters < 0 ? cfg.total_iters / 2 : cfg.control.stop_iters;
}

RenderSettings training_render_settings(const TrainConfig& cfg, std::int64_t iteration) {
  RenderSettings s;
  s.sky_jitter = cfg.sky_jitter;
  s.jitter_seed = cfg.seed;
  s.jitter_stream = static_cast<std::uint64_t>(iteration);
  return s;
}

std::string loss_trace_row(const StepRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%d", static_cast<long long>(r.iteration),
                r.loss.total, r.loss.l1, r.loss.ssim, r.loss.depth, r.loss.opacity, r.loss.velocity, r.points,
                r.level);
  return buf;
}

CameraFrame downsample_frame(const CameraFrame& frame, int factor, std::span<const LidarPoint> lidar,
                             double frame_dt) {
  if (factor <= 1) return frame;
  CameraFrame out;
  out.name = frame.name;
  out.camera_id = frame.camera_id;
  out.timestamp = frame.timestamp;
  out.camera = frame.camera;
  out.camera.intrinsics = frame.camera.intrinsics.downsampled(factor);
  out.image = downsample_area(frame.image, factor);
  if (frame.sky_mask) {
    ImageF m = downsample_area(*frame.sky_mask, factor);
    for (float& v : m.values()) v = v > 0.5f ? 1.0f : 0.0f;
    out.sky_mask = std::move(m);
  }
  out.sparse_inv_depth = project_lidar_depth(lidar, out, frame_dt);
  return out;
}

Trainer::Trainer(const SceneDataset& data, std::vector<std::size_t> frames, TrainConfig cfg, TrainState state)
    : data_(&data), frames_(std::move(frames)), cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
  if (frames_.empty()) throw std::invalid_argument("no training frames");
  for (std::size_t i : frames_)
    if (i >= data.frames.size()) throw std::out_of_range("training frame index out of range");
}

const std::vector<CameraFrame>& Trainer::frames_at(int factor) {
  auto it = levels_.find(factor);
  if (it != levels_.end()) return it->second;
  std::vector<CameraFrame> views(frames_.size());
  const auto count = static_cast<std::int64_t>(frames_.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < count; ++k)
    views[k] = downsample_frame(data_->frames[frames_[k]], factor, data_->lidar, state_.scene.frame_dt);
  return levels_.emplace(factor, std::move(views)).first->second;
}

template <typename Real>
LossBreakdown Trainer::forward_backward(const CameraFrame& frame, double dt, GradientBuffer& grads) {
  Supervision sup;
  sup.image = &frame.image;
  sup.sparse_inv_depth = &frame.sparse_inv_depth;
  sup.sky_mask = frame.sky_mask ? &*frame.sky_mask : nullptr;
  return loss_and_gradients<Real>(state_.points, &state_.cube, frame.camera, frame.timestamp, dt, state_.scene,
                                  training_render_settings(cfg_, state_.iteration), sup, cfg_.loss, grads,
                                  cfg_.paths);
}

StepRecord Trainer::step() {
  const StepSample s = sample_step(frames_.size(), cfg_, state_.rng);
  return train_step(s.frame, s.dt);
}

StepRecord Trainer::train_step(std::size_t frame, double dt) {
  StepRecord rec;
  rec.level = coarse_level(state_.iteration, cfg_);
  rec.frame = frame;
  rec.dt = dt;
  const CameraFrame& view = frames_at(rec.level).at(frame);

  GradientBuffer grads;
  grads.reset(state_.points.size(), state_.cube.texel_count());
  rec.loss = cfg_.double_precision ? forward_backward<double>(view, dt, grads) : forward_backward<float>(view, dt, grads);

  auto diagnose = [&](const char* what) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "non-finite %s at iteration %lld, frame '%s' (t=%.9g, dt=%.9g)", what,
                  static_cast<long long>(state_.iteration), view.name.c_str(), view.timestamp, dt);
    throw NonFiniteLoss(buf);
  };
  const std::pair<const char*, double> terms[] = {{"l1 loss", rec.loss.l1},
                                                  {"ssim loss", rec.loss.ssim},
                                                  {"depth loss", rec.loss.depth},
                                                  {"opacity loss", rec.loss.opacity},
                                                  {"velocity loss", rec.loss.velocity},
                                                  {"total loss", rec.loss.total}};
  for (const auto& [name, value] : terms)
    if (!std::isfinite(value)) diagnose(name);
  if (!grads.all_finite()) diagnose("gradient");

  state_.stats.accumulate(grads);
  adam_step(state_.points, &state_.cube, grads, state_.adam, learning_rates(cfg_, state_.scene, state_.iteration));
  ++state_.iteration;

  const std::int64_t it = state_.iteration;
  const auto& cc = cfg_.control;
  if (it <= densify_stop(cfg_)) {
    if (it >= cc.start_iters && it % cc.interval_iters == 0) {
      const ControlResult res = densify_and_prune(state_.points, state_.stats, state_.scene, cc, it, state_.rng);
      state_.adam.remap(res.origin);
      state_.stats.resize(state_.points.size());
      rec.event = res.event;
    }
    if (reset_opacity(state_.points, cc, it)) {
      state_.adam.zero_opacity_moments();
      rec.opacity_reset = true;
    }
  }
  if (state_.adam.m.size() != state_.points.size() || state_.adam.v.size() != state_.points.size() ||
      state_.stats.grad_sum.size() != state_.points.size())
    throw std::logic_error("optimizer state no longer matches the point set");
  rec.iteration = it;
  rec.points = state_.points.size();
  return rec;
}

EvalReport evaluate_frames(std::span<const PvgPoint> points, const CubeMap& cube, const GlobalConfig& scene,
                           std::span<const CameraFrame> frames, std::span<const std::size_t> indices,
                           bool double_precision) {
  EvalReport rep;
  const RenderSettings settings;
  for (std::size_t i : indices) {
    const CameraFrame& f = frames[i];
    FrameMetrics m;
    m.name = f.name;
    m.timestamp = f.timestamp;
    if (double_precision) {
      const auto res = render<double>(points, &cube, f.camera, f.timestamp, scene, settings);
      m.psnr = psnr(res.out.color, f.image);
      m.ssim = ssim_metric(res.out.color, f.image);
    } else {
      const auto res = render<float>(points, &cube, f.camera, f.timestamp, scene, settings);
      m.psnr = psnr(res.out.color, f.image);
      m.ssim = ssim_metric(res.out.color, f.image);
    }
    rep.mean_psnr += m.psnr;
    rep.mean_ssim += m.ssim;
    rep.frames.push_back(std::move(m));
  }
  if (!rep.frames.empty()) {
    rep.mean_psnr /= static_cast<double>(rep.frames.size());
    rep.mean_ssim /= static_cast<double>(rep.frames.size());
  }
  return rep;
}

RenderOutput<double> render_view(std::span<const PvgPoint> points, const CubeMap* cube, const Camera& cam, double t,
                                 const GlobalConfig& scene) {
  return render<double>(points, cube, cam, t, scene, RenderSettings{}).out;
}

}  // namespace pvg
