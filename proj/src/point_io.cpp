#include "pvg/point_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace pvg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kProperties[] = {"x",           "y",           "z",           "rot_w",   "rot_x",
                                       "rot_y",       "rot_z",       "log_scale_0", "log_scale_1",
                                       "log_scale_2", "opacity_logit", "red",       "green",   "blue",
                                       "tau",         "log_beta",    "vel_x",       "vel_y",   "vel_z"};
constexpr int kPropertyCount = static_cast<int>(std::size(kProperties));

void pack(const PvgPoint& p, double* v) {
  for (int k = 0; k < 3; ++k) v[k] = p.mu[k];
  for (int k = 0; k < 4; ++k) v[3 + k] = p.rot[k];
  for (int k = 0; k < 3; ++k) v[7 + k] = p.log_scale[k];
  v[10] = p.opacity_logit;
  for (int k = 0; k < 3; ++k) v[11 + k] = p.color[k];
  v[14] = p.tau;
  v[15] = p.log_beta;
  for (int k = 0; k < 3; ++k) v[16 + k] = p.vel[k];
}

PvgPoint unpack(const double* v) {
  PvgPoint p;
  for (int k = 0; k < 3; ++k) p.mu[k] = v[k];
  for (int k = 0; k < 4; ++k) p.rot[k] = v[3 + k];
  for (int k = 0; k < 3; ++k) p.log_scale[k] = v[7 + k];
  p.opacity_logit = v[10];
  for (int k = 0; k < 3; ++k) p.color[k] = v[11 + k];
  p.tau = v[14];
  p.log_beta = v[15];
  for (int k = 0; k < 3; ++k) p.vel[k] = v[16 + k];
  return p;
}

}  // namespace

void write_points_ply(const fs::path& path, std::span<const PvgPoint> points, const GlobalConfig* cfg) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::fprintf(f, "ply\nformat ascii 1.0\ncomment pvg point set\n");
  if (cfg)
    std::fprintf(f,
                 "comment cycle_length %.17g\ncomment frame_dt %.17g\ncomment scene_radius %.17g\n"
                 "comment scene_center %.17g %.17g %.17g\ncomment dynamics %s\n",
                 cfg->cycle_length, cfg->frame_dt, cfg->scene_radius, cfg->scene_center.x(), cfg->scene_center.y(),
                 cfg->scene_center.z(), to_string(cfg->dynamics));
  std::fprintf(f, "element vertex %zu\n", points.size());
  for (const char* name : kProperties) std::fprintf(f, "property double %s\n", name);
  std::fprintf(f, "end_header\n");
  double v[kPropertyCount];
  for (const auto& p : points) {
    pack(p, v);
    for (int k = 0; k < kPropertyCount; ++k) std::fprintf(f, k + 1 < kPropertyCount ? "%.17g " : "%.17g\n", v[k]);
  }
  const bool failed = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || failed) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<PvgPoint> read_points_ply(const fs::path& path, GlobalConfig* cfg) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw IoError("'" + path.string() + "' is not a PLY file");
  std::size_t count = 0;
  std::vector<std::string> props;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw IoError("'" + path.string() + "': only ASCII PLY point sets are supported");
    } else if (key == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw IoError("'" + path.string() + "': unexpected element '" + name + "'");
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (key == "comment" && cfg) {
      std::string field;
      ls >> field;
      if (field == "cycle_length") ls >> cfg->cycle_length;
      else if (field == "frame_dt") ls >> cfg->frame_dt;
      else if (field == "scene_radius") ls >> cfg->scene_radius;
      else if (field == "scene_center") ls >> cfg->scene_center.x() >> cfg->scene_center.y() >> cfg->scene_center.z();
      else if (field == "dynamics") {
        std::string name;
        ls >> name;
        cfg->dynamics = dynamics_model_from_string(name);
      }
    }
  }
  if (line != "end_header") throw IoError("'" + path.string() + "': missing end_header");
  if (static_cast<int>(props.size()) != kPropertyCount)
    throw IoError("'" + path.string() + "': expected " + std::to_string(kPropertyCount) + " vertex properties");
  for (int k = 0; k < kPropertyCount; ++k)
    if (props[k] != kProperties[k]) throw IoError("'" + path.string() + "': unexpected property '" + props[k] + "'");

  std::vector<PvgPoint> points;
  points.reserve(count);
  double v[kPropertyCount];
  for (std::size_t i = 0; i < count; ++i) {
    for (double& x : v) {
      std::string tok;
      if (!(in >> tok)) throw IoError("'" + path.string() + "': truncated vertex data");
      x = std::strtod(tok.c_str(), nullptr);
    }
    points.push_back(unpack(v));
  }
  return points;
}

SplitExport export_split(std::span<const PvgPoint> points, const GlobalConfig& cfg, double threshold,
                         const fs::path& dir) {
  fs::create_directories(dir);
  const StaticPartition part = classify_static(points, cfg, threshold);
  std::vector<PvgPoint> stat, dyn;
  for (std::size_t i : part.static_indices) stat.push_back(points[i]);
  for (std::size_t i : part.dynamic_indices) dyn.push_back(points[i]);
  write_points_ply(dir / "static.ply", stat, &cfg);
  write_points_ply(dir / "dynamic.ply", dyn, &cfg);
  return {stat.size(), dyn.size()};
}

}  // namespace pvg
