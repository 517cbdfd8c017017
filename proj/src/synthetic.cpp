#include "pvg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "pvg/config.hpp"
#include "pvg/image_io.hpp"
#include "pvg/random.hpp"

namespace pvg {

namespace fs = std::filesystem;

namespace {

constexpr double kFrameDt = 0.02;
constexpr double kBackgroundAlpha = 0.95;
constexpr double kMoverAlpha = 0.98;
constexpr int kSkyResolution = 64;

bool finite(const Vec3& v) { return v.allFinite(); }

Vec3 parse_vec3(const std::string& key, std::string text) {
  std::replace_if(text.begin(), text.end(), [](char c) { return c == '[' || c == ']' || c == ','; }, ' ');
  std::istringstream in(text);
  Vec3 v;
  std::string extra;
  if (!(in >> v.x() >> v.y() >> v.z()) || (in >> extra)) throw SpecInvalid(key, "expected three numbers");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') throw SpecInvalid(key, "expected a number, got '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0') throw SpecInvalid(key, "expected an integer, got '" + text + "'");
  return v;
}

Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

std::pair<double, double> raw_span(const SyntheticSceneSpec& s) { return {0.0, (s.frames - 1) * s.frame_interval}; }

Camera camera_at(const SyntheticSceneSpec& s, int k) {
  const double u = s.frames > 1 ? static_cast<double>(k) / (s.frames - 1) : 0.0;
  const Vec3 eye = lerp(s.camera_start, s.camera_end, u);
  Camera cam;
  cam.extrinsics = CameraExtrinsics::look_at(eye, eye + s.camera_direction);
  cam.intrinsics = {s.focal, s.focal, 0.5 * s.width, 0.5 * s.height, s.width, s.height};
  return cam;
}

GaussianSnapshot splat(const Vec3& center, const Vec3& scale, double alpha, const Vec3& color) {
  GaussianSnapshot g;
  g.center = center;
  g.cov_scale = scale;
  g.alpha0 = alpha;
  g.color = color.cwiseMax(0.0).cwiseMin(1.0);
  return g;
}

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(lo + i * step);
  return out;
}

std::vector<GaussianSnapshot> build_background(const SyntheticSceneSpec& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> shade(-0.04, 0.04);
  std::vector<GaussianSnapshot> out;
  const double gs = s.ground_spacing;
  for (double z : grid(s.ground_near, s.ground_far, gs))
    for (double x : grid(-s.ground_half_width, s.ground_half_width, gs)) {
      const bool odd = (static_cast<long>(std::floor(x / s.ground_tile)) + static_cast<long>(std::floor(z / s.ground_tile))) & 1;
      const Vec3 c = (odd ? s.ground_color_a : s.ground_color_b) + Vec3::Constant(shade(rng));
      out.push_back(splat(Vec3(x, s.ground_height, z), Vec3(0.6 * gs, 0.05 * gs, 0.6 * gs), kBackgroundAlpha, c));
    }
  const double bs = s.backdrop_spacing;
  for (double y : grid(s.backdrop_top, s.ground_height, bs))
    for (double x : grid(-s.backdrop_half_width, s.backdrop_half_width, bs)) {
      const bool odd = static_cast<long>(std::floor(x / s.backdrop_stripe)) & 1;
      const double fade = (y - s.backdrop_top) / std::max(1e-9, s.ground_height - s.backdrop_top);
      const Vec3 c = (odd ? s.backdrop_color_a : s.backdrop_color_b) * (1.0 - 0.3 * fade) + Vec3::Constant(shade(rng));
      out.push_back(splat(Vec3(x, y, s.backdrop_distance), Vec3(0.6 * bs, 0.6 * bs, 0.05 * bs), kBackgroundAlpha, c));
    }
  return out;
}

std::vector<GaussianSnapshot> build_mover(const SyntheticSceneSpec& s, const MoverSpec& m) {
  std::vector<GaussianSnapshot> out;
  const Vec3 h = 0.5 * m.size;
  const double sp = s.mover_spacing;
  for (int axis = 0; axis < 3; ++axis) {
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    for (int side = -1; side <= 1; side += 2) {
      int i = 0;
      for (double u : grid(-h[a], h[a], sp)) {
        int j = 0;
        for (double v : grid(-h[b], h[b], sp)) {
          Vec3 p, sc;
          p[axis] = side * h[axis];
          p[a] = u;
          p[b] = v;
          sc[axis] = 0.05 * sp;
          sc[a] = sc[b] = 0.6 * sp;
          const double tone = ((i / 2 + j / 2) & 1) ? 1.0 : 0.7;
          out.push_back(splat(p, sc, kMoverAlpha, m.color * tone));
          ++j;
        }
        ++i;
      }
    }
  }
  return out;
}

Vec3 sky_color(const SyntheticSceneSpec& s, const Vec3& dir) {
  return lerp(s.sky_horizon, s.sky_zenith, std::clamp(-dir.y(), 0.0, 1.0));
}

std::vector<GaussianSnapshot> snapshots_raw(const SyntheticScene& sc, double raw_time, const Vec3& marker) {
  std::vector<GaussianSnapshot> out = sc.background;
  for (std::size_t m = 0; m < sc.mover_parts.size(); ++m) {
    const MoverSpec& mv = sc.spec.movers[m];
    const Vec3 c = mv.position + raw_time * mv.velocity;
    for (GaussianSnapshot g : sc.mover_parts[m]) {
      g.center += c;
      g.avg_vel = marker;
      out.push_back(g);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].source_index = static_cast<std::int64_t>(i);
  return out;
}

bool frustum_contains(const Camera& cam, const Vec3& x) {
  const auto p = project_point(world_to_camera(x, cam.extrinsics), cam.intrinsics);
  return p && p->pixel.x() >= 0 && p->pixel.y() >= 0 && p->pixel.x() < cam.intrinsics.width &&
         p->pixel.y() < cam.intrinsics.height;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  auto need = [](bool ok, const char* field, const char* msg) {
    if (!ok) throw SpecInvalid(field, msg);
  };
  need(frames >= 2, "scene.frames", "must be at least 2");
  need(width >= 16 && height >= 16, "scene.width", "image must be at least 16x16");
  need(focal > 0 && std::isfinite(focal), "scene.focal", "must be positive");
  need(frame_interval > 0 && std::isfinite(frame_interval), "scene.frame_interval", "must be positive");
  need(noise >= 0 && std::isfinite(noise), "scene.noise", "must be non-negative");
  need(scene_radius > 0 && std::isfinite(scene_radius), "scene.radius", "must be positive");
  need(lidar_fraction >= 0 && lidar_fraction <= 1, "scene.lidar_fraction", "must lie in [0, 1]");
  need(finite(camera_start) && finite(camera_end), "camera.start", "must be finite");
  need(finite(camera_direction) && camera_direction.norm() > 1e-9, "camera.direction", "must be a non-zero vector");
  need(ground_spacing > 0 && ground_tile > 0, "ground.spacing", "spacing and tile must be positive");
  need(ground_far > ground_near && ground_half_width > 0, "ground.far", "ground extent is empty");
  need(backdrop_spacing > 0 && backdrop_stripe > 0, "backdrop.spacing", "spacing and stripe must be positive");
  need(backdrop_distance > 0 && backdrop_half_width > 0, "backdrop.distance", "must be positive");
  need(backdrop_top < ground_height, "backdrop.top", "must lie above the ground (smaller y)");
  need(mover_spacing > 0, "scene.mover_spacing", "must be positive");
  for (const MoverSpec& m : movers) {
    need(finite(m.position), "mover.position", "must be finite");
    need(finite(m.velocity), "mover.velocity", "speed must be finite");
    need(finite(m.size) && (m.size.array() > 0).all(), "mover.size", "extents must be positive");
    need(finite(m.color) && (m.color.array() >= 0).all() && (m.color.array() <= 1).all(), "mover.color",
         "must lie in [0, 1]");
    int seen = 0;
    for (int k = 0; k < frames; ++k)
      if (frustum_contains(camera_at(*this, k), m.position + k * frame_interval * m.velocity)) ++seen;
    need(2 * seen >= frames, "mover.position", "mover is inside the view for fewer than half the frames");
  }
}

SyntheticSceneSpec parse_synthetic_spec(const std::string& text, const std::string& origin) {
  ConfigValues values;
  try {
    values = parse_config_text(text, origin);
  } catch (const ConfigError& e) {
    throw SpecInvalid(origin, e.what());
  }
  SyntheticSceneSpec s;
  s.movers.clear();
  std::map<std::string, MoverSpec> movers;
  for (const auto& [key, raw] : values) {
    const std::string v = raw.size() >= 2 && raw.front() == '"' ? raw.substr(1, raw.size() - 2) : raw;
    const auto dot = key.find('.');
    const std::string table = key.substr(0, dot);
    const std::string field = dot == std::string::npos ? "" : key.substr(dot + 1);
    if (table.rfind("mover", 0) == 0) {
      MoverSpec& m = movers[table];
      if (field == "position") m.position = parse_vec3(key, v);
      else if (field == "velocity") m.velocity = parse_vec3(key, v);
      else if (field == "size") m.size = parse_vec3(key, v);
      else if (field == "color") m.color = parse_vec3(key, v);
      else throw SpecInvalid(key, "unknown field");
      continue;
    }
    if (key == "scene.name") s.name = v;
    else if (key == "scene.frames") s.frames = static_cast<int>(parse_int(key, v));
    else if (key == "scene.width") s.width = static_cast<int>(parse_int(key, v));
    else if (key == "scene.height") s.height = static_cast<int>(parse_int(key, v));
    else if (key == "scene.focal") s.focal = parse_real(key, v);
    else if (key == "scene.frame_interval") s.frame_interval = parse_real(key, v);
    else if (key == "scene.noise") s.noise = parse_real(key, v);
    else if (key == "scene.seed") s.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "scene.radius") s.scene_radius = parse_real(key, v);
    else if (key == "scene.lidar_fraction") s.lidar_fraction = parse_real(key, v);
    else if (key == "scene.mover_spacing") s.mover_spacing = parse_real(key, v);
    else if (key == "camera.start") s.camera_start = parse_vec3(key, v);
    else if (key == "camera.end") s.camera_end = parse_vec3(key, v);
    else if (key == "camera.direction") s.camera_direction = parse_vec3(key, v);
    else if (key == "ground.height") s.ground_height = parse_real(key, v);
    else if (key == "ground.half_width") s.ground_half_width = parse_real(key, v);
    else if (key == "ground.near") s.ground_near = parse_real(key, v);
    else if (key == "ground.far") s.ground_far = parse_real(key, v);
    else if (key == "ground.spacing") s.ground_spacing = parse_real(key, v);
    else if (key == "ground.tile") s.ground_tile = parse_real(key, v);
    else if (key == "ground.color_a") s.ground_color_a = parse_vec3(key, v);
    else if (key == "ground.color_b") s.ground_color_b = parse_vec3(key, v);
    else if (key == "backdrop.distance") s.backdrop_distance = parse_real(key, v);
    else if (key == "backdrop.half_width") s.backdrop_half_width = parse_real(key, v);
    else if (key == "backdrop.top") s.backdrop_top = parse_real(key, v);
    else if (key == "backdrop.spacing") s.backdrop_spacing = parse_real(key, v);
    else if (key == "backdrop.stripe") s.backdrop_stripe = parse_real(key, v);
    else if (key == "backdrop.color_a") s.backdrop_color_a = parse_vec3(key, v);
    else if (key == "backdrop.color_b") s.backdrop_color_b = parse_vec3(key, v);
    else if (key == "sky.zenith") s.sky_zenith = parse_vec3(key, v);
    else if (key == "sky.horizon") s.sky_horizon = parse_vec3(key, v);
    else throw SpecInvalid(key, "unknown field");
  }
  for (auto& [name, m] : movers) s.movers.push_back(m);
  s.validate();
  return s;
}

SyntheticSceneSpec load_synthetic_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read spec '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str(), path.string());
}

SyntheticSceneSpec mover_1_spec() {
  SyntheticSceneSpec s;
  s.name = "mover-1";
  MoverSpec m;
  m.position = Vec3(-3.0, -1.6, 6.0);
  m.velocity = Vec3(6.0 / 3.9, 0.0, 0.0);
  m.size = Vec3(1.2, 0.8, 0.8);
  m.color = Vec3(0.85, 0.2, 0.15);
  s.movers.push_back(m);
  return s;
}

Vec3 SyntheticScene::mover_center(std::size_t mover, double scene_time) const {
  const MoverSpec& m = spec.movers.at(mover);
  return m.position + dataset.time_map.to_raw(scene_time) * m.velocity;
}

bool SyntheticScene::inside_mover(std::size_t mover, const Vec3& x, double scene_time, double margin) const {
  const Vec3 d = (x - mover_center(mover, scene_time)).cwiseAbs();
  return (d.array() <= (0.5 * spec.movers.at(mover).size.array() + margin)).all();
}

bool SyntheticScene::inside_swept(std::size_t mover, const Vec3& x, double margin) const {
  const MoverSpec& m = spec.movers.at(mover);
  auto [lo, hi] = raw_span(spec);
  for (int k = 0; k < 3; ++k) {
    const double h = 0.5 * m.size[k] + margin;
    const double d = x[k] - m.position[k];
    if (m.velocity[k] == 0.0) {
      if (std::abs(d) > h) return false;
      continue;
    }
    double a = (d - h) / m.velocity[k], b = (d + h) / m.velocity[k];
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
  }
  return lo <= hi;
}

std::vector<GaussianSnapshot> SyntheticScene::snapshots_at(double scene_time, const Vec3& marker) const {
  return snapshots_raw(*this, dataset.time_map.to_raw(scene_time), marker);
}

SyntheticScene generate_synthetic(const SyntheticSceneSpec& spec) {
  spec.validate();
  SyntheticScene sc;
  sc.spec = spec;
  std::mt19937_64 rng(spec.seed);
  sc.background = build_background(spec, rng);
  for (const MoverSpec& m : spec.movers) sc.mover_parts.push_back(build_mover(spec, m));
  sc.sky = CubeMap::from_function(kSkyResolution, [&](const Vec3& d) { return sky_color(spec, d); });

  SceneDataset& ds = sc.dataset;
  const RenderSettings settings;
  const Vec3 marker = Vec3::UnitX();
  std::vector<LidarPoint> lidar;
  for (int k = 0; k < spec.frames; ++k) {
    std::mt19937_64 frame_rng(splitmix64(spec.seed ^ splitmix64(static_cast<std::uint64_t>(k) + 1)));
    const double raw_t = k * spec.frame_interval;
    CameraFrame f;
    char name[32];
    std::snprintf(name, sizeof name, "cam0_%04d", k);
    f.name = name;
    f.timestamp = raw_t;
    f.camera = camera_at(spec, k);
    const auto snaps = snapshots_raw(sc, raw_t, marker);
    const auto res = render_snapshots<double>(snaps, &sc.sky, f.camera, settings);
    const auto& out = res.out;
    const int h = spec.height, w = spec.width;

    f.image = ImageF(h, w, 3);
    std::normal_distribution<double> noise(0.0, spec.noise > 0 ? spec.noise : 1.0);
    for (std::size_t i = 0; i < f.image.size(); ++i) {
      double v = out.color.values()[i];
      if (spec.noise > 0) v += noise(frame_rng);
      f.image.values()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    ImageF sky(h, w, 1), weight(h, w, 1), mask(h, w, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        sky.at(y, x) = out.opacity.at(y, x) < 0.5 ? 1.0f : 0.0f;
        const double wgt = Vec3(out.velocity.at(y, x, 0), out.velocity.at(y, x, 1), out.velocity.at(y, x, 2)).norm();
        weight.at(y, x) = static_cast<float>(wgt);
        mask.at(y, x) = wgt > 0.5 ? 1.0f : 0.0f;
      }
    f.sky_mask = std::move(sky);
    sc.mover_weight.push_back(std::move(weight));
    sc.dynamic_masks.push_back(std::move(mask));

    std::uniform_real_distribution<double> keep(0.0, 1.0);
    for (const auto& g : snaps) {
      const auto p = project_point(world_to_camera(g.center, f.camera.extrinsics), f.camera.intrinsics);
      if (!p) continue;
      const int u = static_cast<int>(std::floor(p->pixel.x()));
      const int v = static_cast<int>(std::floor(p->pixel.y()));
      if (u < 0 || v < 0 || u >= w || v >= h) continue;
      if (!(out.opacity.at(v, u) > 0.5) || p->depth > out.depth.at(v, u) * 1.03) continue;
      if (keep(frame_rng) < spec.lidar_fraction) lidar.push_back({g.center, raw_t});
    }
    ds.frames.push_back(std::move(f));
  }

  ds.frame_dt = kFrameDt;
  ds.time_map = fit_time_map(ds.frames, kFrameDt);
  for (auto& f : ds.frames) f.timestamp = ds.time_map.to_scene(f.timestamp);
  for (auto& p : lidar) p.timestamp = ds.time_map.to_scene(p.timestamp);
  ds.lidar = std::move(lidar);
  for (auto& f : ds.frames) f.sparse_inv_depth = project_lidar_depth(ds.lidar, f, kFrameDt);
  ds.scene_radius = spec.scene_radius;
  ds.scene_center = estimate_scene_center(ds.frames);
  return sc;
}

void save_synthetic(const SyntheticScene& sc, const fs::path& root) {
  save_dataset(sc.dataset, root, ImageFormat::pvgc);
  fs::create_directories(root / "previews");
  fs::create_directories(root / "dynamic");
  nlohmann::json movers = nlohmann::json::array();
  for (std::size_t m = 0; m < sc.spec.movers.size(); ++m) {
    const MoverSpec& mv = sc.spec.movers[m];
    nlohmann::json track = nlohmann::json::array();
    for (const auto& f : sc.dataset.frames) {
      const Vec3 c = sc.mover_center(m, f.timestamp);
      track.push_back({{"frame", f.name}, {"time", f.timestamp}, {"center", {c.x(), c.y(), c.z()}}});
    }
    movers.push_back({{"position", {mv.position.x(), mv.position.y(), mv.position.z()}},
                      {"velocity", {mv.velocity.x(), mv.velocity.y(), mv.velocity.z()}},
                      {"size", {mv.size.x(), mv.size.y(), mv.size.z()}},
                      {"track", track}});
  }
  for (std::size_t k = 0; k < sc.dataset.frames.size(); ++k) {
    const auto& f = sc.dataset.frames[k];
    write_png(root / "previews" / (f.name + ".png"), f.image);
    write_png(root / "dynamic" / (f.name + ".png"), sc.dynamic_masks[k]);
  }
  const nlohmann::json doc = {{"name", sc.spec.name}, {"seed", sc.spec.seed}, {"movers", movers}};
  std::ofstream out(root / "truth.json");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("cannot write '" + (root / "truth.json").string() + "'");
}

}  // namespace pvg
