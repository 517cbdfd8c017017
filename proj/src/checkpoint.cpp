#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pvg/trainer.hpp"

namespace pvg {

namespace fs = std::filesystem;

namespace {

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void text(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  void vec(const Vec3& v) {
    for (int k = 0; k < 3; ++k) pod(v[k]);
  }
  void quat(const Quat& q) {
    for (int k = 0; k < 4; ++k) pod(q[k]);
  }
  void reals(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string where) : buf_(buf), end_(end), where_(std::move(where)) {}

  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof v);
    return v;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    if (n > end_ - pos_) fail();
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Vec3 vec() {
    Vec3 v;
    for (int k = 0; k < 3; ++k) v[k] = pod<double>();
    return v;
  }
  Quat quat() {
    Quat q;
    for (int k = 0; k < 4; ++k) q[k] = pod<double>();
    return q;
  }
  std::vector<double> reals() {
    const auto n = pod<std::uint64_t>();
    if (n > (end_ - pos_) / sizeof(double)) fail();
    std::vector<double> v(n);
    take(v.data(), n * sizeof(double));
    return v;
  }
  std::size_t count(std::size_t record_bytes) {
    const auto n = pod<std::uint64_t>();
    if (record_bytes && n > (end_ - pos_) / record_bytes) fail();
    return static_cast<std::size_t>(n);
  }
  bool at_end() const { return pos_ == end_; }
  [[noreturn]] void fail() const { throw IoError("'" + where_ + "': malformed checkpoint body"); }

 private:
  void take(void* dst, std::size_t n) {
    if (n > end_ - pos_) fail();
    std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string where_;
};

constexpr std::size_t kPointDoubles = 19;

void put_point(Writer& w, const PvgPoint& p) {
  w.vec(p.mu);
  w.quat(p.rot);
  w.vec(p.log_scale);
  w.pod(p.opacity_logit);
  w.vec(p.color);
  w.pod(p.tau);
  w.pod(p.log_beta);
  w.vec(p.vel);
}

PvgPoint get_point(Reader& r) {
  PvgPoint p;
  p.mu = r.vec();
  p.rot = r.quat();
  p.log_scale = r.vec();
  p.opacity_logit = r.pod<double>();
  p.color = r.vec();
  p.tau = r.pod<double>();
  p.log_beta = r.pod<double>();
  p.vel = r.vec();
  return p;
}

void put_grad(Writer& w, const PointGradient& g) {
  w.vec(g.mu);
  w.quat(g.rot);
  w.vec(g.log_scale);
  w.pod(g.opacity_logit);
  w.vec(g.color);
  w.pod(g.tau);
  w.pod(g.log_beta);
  w.vec(g.vel);
}

PointGradient get_grad(Reader& r) {
  PointGradient g;
  g.mu = r.vec();
  g.rot = r.quat();
  g.log_scale = r.vec();
  g.opacity_logit = r.pod<double>();
  g.color = r.vec();
  g.tau = r.pod<double>();
  g.log_beta = r.pod<double>();
  g.vel = r.vec();
  return g;
}

std::uint32_t checksum(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& s, const TrainConfig& cfg) {
  Writer w;
  w.bytes().append(kCheckpointMagic, 4);
  w.pod(kCheckpointVersion);
  w.text(dump_config(cfg));
  w.pod<std::int64_t>(s.iteration);
  std::ostringstream rng;
  rng << s.rng;
  w.text(rng.str());
  w.pod(s.time_map.offset);
  w.pod(s.time_map.scale);
  w.pod(s.scene.cycle_length);
  w.pod(s.scene.frame_dt);
  w.pod(s.scene.scene_radius);
  w.vec(s.scene.scene_center);
  w.pod(static_cast<std::uint8_t>(s.scene.dynamics));

  w.pod<std::uint64_t>(s.points.size());
  for (const auto& p : s.points) put_point(w, p);
  w.pod<std::int32_t>(s.cube.resolution());
  w.reals(s.cube.values());

  w.pod<std::int64_t>(s.adam.step);
  w.pod<std::uint64_t>(s.adam.m.size());
  for (std::size_t i = 0; i < s.adam.m.size(); ++i) {
    put_grad(w, s.adam.m[i]);
    put_grad(w, s.adam.v[i]);
  }
  w.reals(s.adam.cube_m);
  w.reals(s.adam.cube_v);

  w.reals(s.stats.grad_sum);
  w.pod<std::uint64_t>(s.stats.views.size());
  for (std::int32_t v : s.stats.views) w.pod(v);

  w.pod(checksum(w.bytes().data(), w.bytes().size()));

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint to '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || buf.compare(0, 4, kCheckpointMagic) != 0)
    throw IoError("'" + path.string() + "' is not a checkpoint");
  if (buf.size() < 8) throw ChecksumMismatch("'" + path.string() + "': truncated checkpoint");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + 4, 4);
  if (version != kCheckpointVersion)
    throw VersionMismatch("'" + path.string() + "': checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  if (buf.size() < 12) throw ChecksumMismatch("'" + path.string() + "': truncated checkpoint");
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  if (stored != checksum(buf.data(), body))
    throw ChecksumMismatch("'" + path.string() + "': checksum mismatch (truncated or corrupted)");

  Reader r(buf, body, path.string());
  r.pod<std::uint32_t>();
  r.pod<std::uint32_t>();
  Checkpoint ck;
  try {
    apply_config(ck.config, parse_config_text(r.text(), path.string()));
  } catch (const ConfigError& e) {
    throw IoError("'" + path.string() + "': bad embedded config: " + e.what());
  }
  TrainState& s = ck.state;
  s.iteration = r.pod<std::int64_t>();
  std::istringstream rng(r.text());
  rng >> s.rng;
  if (!rng) r.fail();
  s.time_map.offset = r.pod<double>();
  s.time_map.scale = r.pod<double>();
  s.scene.cycle_length = r.pod<double>();
  s.scene.frame_dt = r.pod<double>();
  s.scene.scene_radius = r.pod<double>();
  s.scene.scene_center = r.vec();
  const auto dyn = r.pod<std::uint8_t>();
  if (dyn > static_cast<std::uint8_t>(DynamicsModel::constant)) r.fail();
  s.scene.dynamics = static_cast<DynamicsModel>(dyn);

  s.points.resize(r.count(kPointDoubles * sizeof(double)));
  for (auto& p : s.points) p = get_point(r);
  const auto res = r.pod<std::int32_t>();
  if (res <= 0 || (res & (res - 1)) != 0) r.fail();
  s.cube = CubeMap(res);
  s.cube.values() = r.reals();
  if (static_cast<std::int64_t>(s.cube.values().size()) != 3 * s.cube.texel_count()) r.fail();

  s.adam.step = r.pod<std::int64_t>();
  const std::size_t moments = r.count(2 * kPointDoubles * sizeof(double));
  s.adam.m.resize(moments);
  s.adam.v.resize(moments);
  for (std::size_t i = 0; i < moments; ++i) {
    s.adam.m[i] = get_grad(r);
    s.adam.v[i] = get_grad(r);
  }
  s.adam.cube_m = r.reals();
  s.adam.cube_v = r.reals();

  s.stats.grad_sum = r.reals();
  s.stats.views.resize(r.count(sizeof(std::int32_t)));
  for (auto& v : s.stats.views) v = r.pod<std::int32_t>();
  if (!r.at_end()) r.fail();
  if (moments != s.points.size() || s.stats.views.size() != s.points.size() ||
      s.stats.grad_sum.size() != s.points.size())
    r.fail();
  return ck;
}

}  // namespace pvg
