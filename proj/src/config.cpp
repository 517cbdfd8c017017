#include "pvg/config.hpp"

#include <zlib.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pvg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string s = unquote(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  const std::string s = unquote(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string s = unquote(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename Access>
Field real(std::string key, std::string doc, Access access) {
  return {key, std::move(doc),
          [access, key](TrainConfig& c, const std::string& v) { access(c) = to_double(key, v); },
          [access](const TrainConfig& c) { return format_double(access(const_cast<TrainConfig&>(c))); }};
}

template <typename Access>
Field integer(std::string key, std::string doc, Access access) {
  return {key, std::move(doc),
          [access, key](TrainConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(access(c))>;
            access(c) = static_cast<T>(to_int(key, v));
          },
          [access](const TrainConfig& c) { return std::to_string(access(const_cast<TrainConfig&>(c))); }};
}

template <typename Access>
Field boolean(std::string key, std::string doc, Access access) {
  return {key, std::move(doc), [access, key](TrainConfig& c, const std::string& v) { access(c) = to_bool(key, v); },
          [access](const TrainConfig& c) { return std::string(access(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
}

#define PVG_REF(expr) [](TrainConfig & c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      integer("train.total_iters", "number of optimization steps", PVG_REF(total_iters)),
      real("train.eta", "probability of dt = 0 (1 disables temporal smoothing)", PVG_REF(eta)),
      real("train.delta_frames", "dt is drawn from U(-delta, delta) with delta = delta_frames * frame_dt",
           PVG_REF(delta_frames)),
      integer("train.coarse_start_downsample", "initial image downsample factor", PVG_REF(coarse_start_downsample)),
      integer("train.coarse_step_iters", "iterations between halvings of the downsample factor",
              PVG_REF(coarse_step_iters)),
      {"train.seed", "random seed",
       [](TrainConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int("train.seed", v)); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      boolean("train.double_precision", "composite in 64-bit floats", PVG_REF(double_precision)),
      boolean("train.sky_jitter", "jitter sky rays inside the pixel while training", PVG_REF(sky_jitter)),
      real("train.static_threshold", "points with beta / l below this are dynamic", PVG_REF(static_threshold)),

      real("scene.cycle_length", "vibration period l", PVG_REF(scene.cycle_length)),
      real("scene.frame_dt", "scene-time spacing of consecutive frames", PVG_REF(scene.frame_dt)),
      real("scene.scene_radius", "scene radius r; 0 takes the dataset's value", PVG_REF(scene.scene_radius)),
      {"scene.dynamics", "periodic, linear or constant",
       [](TrainConfig& c, const std::string& v) {
         try {
           c.scene.dynamics = dynamics_model_from_string(unquote(v));
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("scene.dynamics: ") + e.what());
         }
       },
       [](const TrainConfig& c) { return "\"" + std::string(to_string(c.scene.dynamics)) + "\""; }},

      real("loss.lambda_r", "SSIM weight", PVG_REF(loss.lambda_r)),
      real("loss.lambda_d", "inverse-depth weight", PVG_REF(loss.lambda_d)),
      real("loss.lambda_o", "opacity weight", PVG_REF(loss.lambda_o)),
      real("loss.lambda_v", "average-velocity sparsity weight", PVG_REF(loss.lambda_v)),

      real("control.grad_threshold", "mean view-space gradient that triggers densification",
           PVG_REF(control.grad_threshold)),
      real("control.clone_scale", "clone/split size threshold g as a fraction of r", PVG_REF(control.clone_scale)),
      real("control.prune_scale", "prune size threshold b as a fraction of r", PVG_REF(control.prune_scale)),
      integer("control.interval_iters", "iterations between control events", PVG_REF(control.interval_iters)),
      integer("control.start_iters", "first control event", PVG_REF(control.start_iters)),
      integer("control.stop_iters", "last control event; negative means half the run", PVG_REF(control.stop_iters)),
      integer("control.opacity_reset_iters", "opacity reset interval", PVG_REF(control.opacity_reset_iters)),
      real("control.opacity_reset_value", "opacity cap applied at a reset", PVG_REF(control.opacity_reset_value)),
      real("control.split_scale_decay", "scale factor of split children", PVG_REF(control.split_scale_decay)),
      real("control.min_opacity_prune", "points below this opacity are pruned", PVG_REF(control.min_opacity_prune)),
      integer("control.split_beta_shrink_from", "iteration from which split children shrink beta",
              PVG_REF(control.split_beta_shrink_from)),
      real("control.split_beta_decay", "beta factor of split children once shrinking", PVG_REF(control.split_beta_decay)),
      boolean("control.position_aware", "scale thresholds grow with distance (false: gamma = 1)",
              PVG_REF(control.position_aware)),

      real("lr.mu_init", "initial position step, times r", PVG_REF(lr.mu_init)),
      real("lr.mu_final", "final position step, times r", PVG_REF(lr.mu_final)),
      real("lr.tau_scale", "tau step relative to the position step; 0 means frame_dt", PVG_REF(lr.tau_scale)),
      real("lr.rot", "quaternion step", PVG_REF(lr.rot)),
      real("lr.log_scale", "log-scale step", PVG_REF(lr.log_scale)),
      real("lr.opacity", "opacity logit step", PVG_REF(lr.opacity)),
      real("lr.color", "color step", PVG_REF(lr.color)),
      real("lr.log_beta", "log-beta step", PVG_REF(lr.log_beta)),
      real("lr.vel", "velocity step", PVG_REF(lr.vel)),
      real("lr.cube", "sky texel step", PVG_REF(lr.cube)),

      integer("init.lidar_points", "points seeded from LiDAR", PVG_REF(init.lidar_points)),
      integer("init.near_points", "random points within r", PVG_REF(init.near_points)),
      integer("init.far_points", "random points beyond r, uniform in inverse distance", PVG_REF(init.far_points)),
      real("init.beta", "initial lifespan", PVG_REF(init.beta)),
      real("init.opacity", "initial opacity", PVG_REF(init.opacity)),
      real("init.far_limit", "far points stay within this multiple of r", PVG_REF(init.far_limit)),
      integer("init.cube_resolution", "sky cube face resolution (power of two)", PVG_REF(init.cube_resolution)),
      real("init.cube_init", "initial sky texel value", PVG_REF(init.cube_init)),

      boolean("paths.depth", "backpropagate the depth channel into geometry", PVG_REF(paths.depth_path)),
      boolean("paths.velocity", "backpropagate the velocity channel into geometry", PVG_REF(paths.velocity_path)),
  };
  return table;
}

#undef PVG_REF

}  // namespace

ConfigValues parse_config_text(const std::string& text, const std::string& origin) {
  ConfigValues values;
  std::istringstream in(text);
  std::string raw, table;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated table header");
      table = trim(line.substr(1, line.size() - 2));
      if (table.empty()) throw ConfigError(where() + "empty table name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where() + "expected 'key = value'");
    values[table.empty() ? key : table + "." + key] = value;
  }
  return values;
}

ConfigValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::pair<std::string, std::string> parse_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key.empty() || value.empty()) throw ConfigError("override '" + assignment + "' is not key=value");
  return {key, value};
}

void apply_config(TrainConfig& cfg, const ConfigValues& values) {
  for (const auto& [key, value] : values) {
    const Field* match = nullptr;
    for (const auto& f : fields())
      if (f.key == key) match = &f;
    if (!match) throw ConfigError("unknown config key '" + key + "'");
    match->set(cfg, value);
  }
}

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream out;
  std::string table;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string t = f.key.substr(0, dot);
    if (t != table) {
      out << (table.empty() ? "" : "\n") << "[" << t << "]\n";
      table = t;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << "\n";
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> config_reference() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.doc);
  return out;
}

std::string config_digest(const TrainConfig& cfg) {
  const std::string text = dump_config(cfg);
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (total_iters <= 0) fail("train.total_iters must be positive");
  if (!(eta >= 0.0 && eta <= 1.0)) fail("train.eta must lie in [0, 1]");
  if (!(delta_frames >= 0.0)) fail("train.delta_frames must be non-negative");
  if (coarse_start_downsample < 1) fail("train.coarse_start_downsample must be at least 1");
  if (coarse_step_iters <= 0) fail("train.coarse_step_iters must be positive");
  if (!(static_threshold >= 0.0)) fail("train.static_threshold must be non-negative");
  if (!(scene.cycle_length > 0.0)) fail("scene.cycle_length must be positive");
  if (!(scene.frame_dt > 0.0)) fail("scene.frame_dt must be positive");
  if (!(scene.scene_radius >= 0.0)) fail("scene.scene_radius must be non-negative");
  try {
    loss.validate();
    control.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (init.lidar_points < 0 || init.near_points < 0 || init.far_points < 0) fail("init point counts must be non-negative");
  if (!(init.beta > 0.0)) fail("init.beta must be positive");
  if (!(init.opacity > 0.0 && init.opacity < 1.0)) fail("init.opacity must lie in (0, 1)");
  if (!(init.far_limit > 1.0)) fail("init.far_limit must exceed 1");
  if (init.cube_resolution <= 0 || (init.cube_resolution & (init.cube_resolution - 1)) != 0)
    fail("init.cube_resolution must be a power of two");
}

}  // namespace pvg
