#include "pvg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "pvg/image_io.hpp"

namespace pvg {

namespace fs = std::filesystem;

namespace {

struct ManifestFrame {
  int camera_id = 0;
  std::string image;
  double raw_time = 0.0;
  CameraExtrinsics ext;
  CameraIntrinsics intr;
  std::string sky_mask;
  int line = 0;
};

struct Manifest {
  std::string lidar;
  double radius = 0.0;
  std::optional<Vec3> center;
  std::vector<ManifestFrame> frames;
};

Manifest parse_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestMissing("manifest not found: '" + path.string() + "'");
  Manifest m;
  std::string line;
  int lineno = 0;
  bool header = false;
  auto fail = [&](const std::string& what) {
    throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (!header) {
      std::string version;
      ls >> version;
      if (key + " " + version != kManifestHeader) fail("expected '" + std::string(kManifestHeader) + "'");
      header = true;
      continue;
    }
    if (key == "lidar") {
      if (!(ls >> m.lidar)) fail("lidar needs a path");
    } else if (key == "radius") {
      if (!(ls >> m.radius) || !(m.radius > 0.0)) fail("radius must be positive");
    } else if (key == "center") {
      Vec3 c;
      if (!(ls >> c.x() >> c.y() >> c.z())) fail("center needs three values");
      m.center = c;
    } else if (key == "frame") {
      ManifestFrame f;
      f.line = lineno;
      double pose[12];
      if (!(ls >> f.camera_id >> f.image >> f.raw_time)) fail("frame needs camera id, image and timestamp");
      for (double& v : pose)
        if (!(ls >> v)) fail("frame needs 12 extrinsic values");
      if (!(ls >> f.intr.fx >> f.intr.fy >> f.intr.cx >> f.intr.cy >> f.intr.width >> f.intr.height))
        fail("frame needs fx fy cx cy width height");
      std::string mask;
      if (ls >> mask && mask != "-") f.sky_mask = mask;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) f.ext.rotation(r, c) = pose[4 * r + c];
        f.ext.translation[r] = pose[4 * r + 3];
      }
      m.frames.push_back(std::move(f));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw IoError(path.string() + ": empty manifest");
  return m;
}

ImageF read_mask(const fs::path& path) {
  if (!fs::exists(path)) throw ManifestMissing("missing sky mask '" + path.string() + "'");
  ImageF raw = path.extension() == ".pvgc" ? read_channels(path) : read_png_gray(path);
  if (raw.channels() != 1) throw IoError("sky mask '" + path.string() + "' must have one channel");
  const float threshold = path.extension() == ".pvgc" ? 0.5f : 127.5f / 255.0f;
  for (float& v : raw.values()) v = v > threshold ? 1.0f : 0.0f;
  return raw;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TimeMap fit_time_map(std::span<const CameraFrame> frames, double frame_dt) {
  TimeMap map;
  if (frames.empty()) return map;
  std::map<int, std::vector<double>> per_camera;
  double earliest = frames.front().timestamp;
  for (const auto& f : frames) {
    per_camera[f.camera_id].push_back(f.timestamp);
    earliest = std::min(earliest, f.timestamp);
  }
  std::vector<double> gaps;
  for (auto& [id, times] : per_camera)
    for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
  map.offset = earliest;
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    const double median = gaps[gaps.size() / 2];
    if (median > 0.0) map.scale = frame_dt / median;
  }
  return map;
}

Vec3 estimate_scene_center(std::span<const CameraFrame> frames) {
  Vec3 centroid = Vec3::Zero();
  if (frames.empty()) return centroid;
  for (const auto& f : frames) centroid += f.camera.extrinsics.camera_center();
  return centroid / static_cast<double>(frames.size());
}

double estimate_scene_radius(std::span<const CameraFrame> frames) {
  if (frames.empty()) return 1.0;
  const Vec3 centroid = estimate_scene_center(frames);
  double r = 0.0;
  for (const auto& f : frames) r = std::max(r, (f.camera.extrinsics.camera_center() - centroid).norm());
  return r > 0.0 ? r : 1.0;
}

ImageF project_lidar_depth(std::span<const LidarPoint> points, const CameraFrame& frame, double frame_dt,
                           double near_clip) {
  const auto& intr = frame.camera.intrinsics;
  ImageF inv_depth(intr.height, intr.width, 1);
  const double window = 0.5 * frame_dt;
  for (const auto& p : points) {
    if (std::abs(p.timestamp - frame.timestamp) > window) continue;
    const auto proj = project_point(world_to_camera(p.position, frame.camera.extrinsics), intr, near_clip);
    if (!proj) continue;
    const double px = std::floor(proj->pixel.x()), py = std::floor(proj->pixel.y());
    if (px < 0 || py < 0 || px >= intr.width || py >= intr.height) continue;
    float& slot = inv_depth.at(static_cast<int>(py), static_cast<int>(px));
    slot = std::max(slot, static_cast<float>(1.0 / proj->depth));
  }
  return inv_depth;
}

std::vector<LidarPoint> read_lidar(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestMissing("missing LiDAR file '" + path.string() + "'");
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, "PVGL", 4) != 0) throw IoError("'" + path.string() + "' is not a PVGL file");
  if (version != 1) throw IoError("'" + path.string() + "': unsupported PVGL version " + std::to_string(version));
  std::vector<float> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in) throw IoError("'" + path.string() + "': truncated LiDAR records");
  std::vector<LidarPoint> pts(count);
  for (std::size_t i = 0; i < count; ++i)
    pts[i] = {Vec3(raw[4 * i], raw[4 * i + 1], raw[4 * i + 2]), raw[4 * i + 3]};
  return pts;
}

void write_lidar(const fs::path& path, std::span<const LidarPoint> points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "'");
  const std::uint32_t version = 1;
  const std::uint64_t count = points.size();
  out.write("PVGL", 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& p : points) {
    const float rec[4] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z()), static_cast<float>(p.timestamp)};
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SceneDataset load_dataset(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw ManifestMissing("dataset directory not found: '" + root.string() + "'");
  const Manifest m = parse_manifest(root / kManifestName);
  if (m.frames.empty()) throw IoError("manifest lists no frames");

  SceneDataset ds;
  ds.frame_dt = options.frame_dt;
  ds.frames.resize(m.frames.size());
  std::map<int, double> last_time;
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    const ManifestFrame& mf = m.frames[i];
    try {
      mf.ext.validate();
    } catch (const std::invalid_argument& e) {
      throw BadPose("manifest line " + std::to_string(mf.line) + ": " + e.what());
    }
    try {
      mf.intr.validate();
    } catch (const std::invalid_argument& e) {
      throw IoError("manifest line " + std::to_string(mf.line) + ": " + e.what());
    }
    if (auto it = last_time.find(mf.camera_id); it != last_time.end() && !(mf.raw_time > it->second))
      throw TimestampDisorder("manifest line " + std::to_string(mf.line) + ": camera " +
                              std::to_string(mf.camera_id) + " timestamps must increase strictly");
    last_time[mf.camera_id] = mf.raw_time;
    CameraFrame& f = ds.frames[i];
    f.name = fs::path(mf.image).stem().string();
    f.camera_id = mf.camera_id;
    f.timestamp = mf.raw_time;
    f.camera = {mf.intr, mf.ext};
  }

  std::vector<std::exception_ptr> errors(m.frames.size());
  const auto n = static_cast<std::int64_t>(m.frames.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const ManifestFrame& mf = m.frames[i];
      const fs::path image_path = root / mf.image;
      if (!fs::exists(image_path)) throw ManifestMissing("missing image '" + image_path.string() + "'");
      ds.frames[i].image = read_image(image_path);
      if (!mf.sky_mask.empty()) ds.frames[i].sky_mask = read_mask(root / mf.sky_mask);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ds.time_map = fit_time_map(ds.frames, ds.frame_dt);
  for (auto& f : ds.frames) f.timestamp = ds.time_map.to_scene(f.timestamp);

  if (!m.lidar.empty()) {
    ds.lidar = read_lidar(root / m.lidar);
    for (auto& p : ds.lidar) p.timestamp = ds.time_map.to_scene(p.timestamp);
  }
  for (auto& f : ds.frames) {
    f.sparse_inv_depth = project_lidar_depth(ds.lidar, f, ds.frame_dt);
    try {
      f.validate();
    } catch (const std::invalid_argument& e) {
      throw IoError(e.what());
    }
  }

  if (options.scene_radius > 0.0)
    ds.scene_radius = options.scene_radius;
  else if (m.radius > 0.0)
    ds.scene_radius = m.radius;
  else
    ds.scene_radius = estimate_scene_radius(ds.frames);
  ds.scene_center = m.center ? *m.center : estimate_scene_center(ds.frames);
  return ds;
}

void save_dataset(const SceneDataset& ds, const fs::path& root, ImageFormat format) {
  fs::create_directories(root / "images");
  const char* ext = format == ImageFormat::png ? ".png" : ".pvgc";
  std::ostringstream manifest;
  manifest << kManifestHeader << "\n";
  manifest << "radius " << format_double(ds.scene_radius) << "\n";
  manifest << "center " << format_double(ds.scene_center.x()) << ' ' << format_double(ds.scene_center.y()) << ' '
           << format_double(ds.scene_center.z()) << "\n";
  if (!ds.lidar.empty()) {
    std::vector<LidarPoint> raw(ds.lidar.begin(), ds.lidar.end());
    for (auto& p : raw) p.timestamp = ds.time_map.to_raw(p.timestamp);
    write_lidar(root / "lidar.pvgl", raw);
    manifest << "lidar lidar.pvgl\n";
  }
  for (const auto& f : ds.frames) {
    const std::string image = "images/" + f.name + ext;
    write_image(root / image, f.image);
    std::string mask = "-";
    if (f.sky_mask) {
      fs::create_directories(root / "masks");
      mask = "masks/" + f.name + ".png";
      write_png(root / mask, *f.sky_mask);
    }
    const auto& e = f.camera.extrinsics;
    const auto& k = f.camera.intrinsics;
    manifest << "frame " << f.camera_id << ' ' << image << ' ' << format_double(ds.time_map.to_raw(f.timestamp));
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) manifest << ' ' << format_double(e.rotation(r, c));
      manifest << ' ' << format_double(e.translation[r]);
    }
    manifest << ' ' << format_double(k.fx) << ' ' << format_double(k.fy) << ' ' << format_double(k.cx) << ' '
             << format_double(k.cy) << ' ' << k.width << ' ' << k.height << ' ' << mask << "\n";
  }
  std::ofstream out(root / kManifestName);
  out << manifest.str();
  if (!out) throw IoError("cannot write manifest under '" + root.string() + "'");
}

DatasetSplit split_every_fourth(std::span<const CameraFrame> frames) {
  DatasetSplit split;
  std::map<int, int> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int k = seen[frames[i].camera_id]++;
    (k % 4 == 2 ? split.test : split.train).push_back(i);
  }
  return split;
}

}  // namespace pvg
