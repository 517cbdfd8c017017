#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "pvg/dataset.hpp"
#include "pvg/image_io.hpp"
#include "pvg/point_io.hpp"
#include "pvg/rasterizer.hpp"
#include "support.hpp"

using namespace pvg;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("pvg_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kPose = "1 0 0 0 0 1 0 0 0 0 1 0";

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

void toy_dataset(const fs::path& root, const std::string& pose1 = kPose, double t2 = 101.0) {
  ImageF img(4, 6, 3, 0.5f);
  for (int i = 0; i < 3; ++i) write_png(root / ("f" + std::to_string(i) + ".png"), img);
  std::ostringstream m;
  m << "pvg-manifest 1\n# three frames, one camera\n";
  m << "frame 0 f0.png 100.0 " << kPose << " 5 5 3 2 6 4\n";
  m << "frame 0 f1.png 100.5 " << pose1 << " 5 5 3 2 6 4\n";
  m << "frame 0 f2.png " << t2 << " " << kPose << " 5 5 3 2 6 4\n";
  write_text(root / kManifestName, m.str());
}

CameraFrame frame_at(double t, int w = 100, int h = 100) {
  CameraFrame f;
  f.timestamp = t;
  f.camera.intrinsics = {100, 100, 50, 50, w, h};
  f.image = ImageF(h, w, 3);
  return f;
}

}  // namespace

TEST_CASE("dataset loading") {
  TempDir dir("dataset");

  SUBCASE("well-formed toy dataset") {
    toy_dataset(dir.path);
    const SceneDataset ds = load_dataset(dir.path);
    REQUIRE(ds.frames.size() == 3);
    CHECK(ds.frames[0].timestamp == Approx(0.0));
    CHECK(ds.frames[1].timestamp == Approx(0.02));
    CHECK(ds.frames[2].timestamp == Approx(0.04));
    CHECK(ds.time_map.to_raw(ds.frames[2].timestamp) == Approx(101.0));
    CHECK(ds.frames[1].image.at(1, 1, 0) == Approx(0.5f).epsilon(0.01));
  }
  SUBCASE("non-orthonormal pose") {
    toy_dataset(dir.path, "1 0 0 0 0 2 0 0 0 0 1 0");
    CHECK_THROWS_AS(load_dataset(dir.path), BadPose);
  }
  SUBCASE("missing image names the path") {
    toy_dataset(dir.path);
    fs::remove(dir.path / "f1.png");
    try {
      load_dataset(dir.path);
      FAIL("expected an error");
    } catch (const ManifestMissing& e) {
      CHECK(std::string(e.what()).find("f1.png") != std::string::npos);
    }
  }
  SUBCASE("timestamps out of order") {
    toy_dataset(dir.path, kPose, 100.2);
    CHECK_THROWS_AS(load_dataset(dir.path), TimestampDisorder);
  }
  SUBCASE("no manifest") { CHECK_THROWS_AS(load_dataset(dir.path), ManifestMissing); }
  SUBCASE("missing directory") { CHECK_THROWS_AS(load_dataset(dir.path / "nope"), ManifestMissing); }
}

TEST_CASE("dataset save/load round trip") {
  TempDir dir("roundtrip");
  SceneDataset ds;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = 0; i < 4; ++i) {
    CameraFrame f = frame_at(0.02 * i, 8, 6);
    f.name = "frame" + std::to_string(i);
    f.camera.intrinsics = {7, 7, 4, 3, 8, 6};
    f.camera.extrinsics = CameraExtrinsics::look_at(Vec3(0.1 * i, 0, 0), Vec3(0, 0, 5));
    for (auto& v : f.image.values()) v = u(rng);
    f.sparse_inv_depth = ImageF(6, 8, 1);
    f.sky_mask = ImageF(6, 8, 1);
    f.sky_mask->at(0, 3) = 1.0f;
    ds.frames.push_back(f);
  }
  ds.lidar = {{Vec3(0.1, 0.2, 5.0), 0.0}, {Vec3(-0.3, 0.1, 4.0), 0.02}};
  ds.time_map = {12.5, 0.2};
  ds.scene_radius = 3.0;
  ds.scene_center = Vec3(0.1, 0.2, 0.3);
  save_dataset(ds, dir.path);
  const SceneDataset back = load_dataset(dir.path);
  REQUIRE(back.frames.size() == 4);
  CHECK(back.time_map.offset == Approx(ds.time_map.offset));
  CHECK(back.scene_radius == 3.0);
  CHECK(back.scene_center == ds.scene_center);
  CHECK(back.lidar.size() == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.frames[i].timestamp == Approx(ds.frames[i].timestamp).epsilon(1e-12));
    CHECK(std::equal(back.frames[i].image.values().begin(), back.frames[i].image.values().end(),
                     ds.frames[i].image.values().begin()));
    CHECK((back.frames[i].camera.extrinsics.rotation - ds.frames[i].camera.extrinsics.rotation).norm() < 1e-15);
    REQUIRE(back.frames[i].sky_mask);
    CHECK(back.frames[i].sky_mask->at(0, 3) == 1.0f);
    CHECK(back.frames[i].sky_mask->at(0, 2) == 0.0f);
  }
}

TEST_CASE("LiDAR to sparse inverse depth") {
  const CameraFrame f = frame_at(0.0);
  std::vector<LidarPoint> pts{{Vec3(0, 0, 10), 0.0}};
  ImageF d = project_lidar_depth(pts, f, 0.02);
  CHECK(d.at(50, 50) == Approx(0.1f));

  pts = {{Vec3(0.0, 0.0, 5.0), 0.0}, {Vec3(0.0, 0.0, 10.0), 0.005}};
  d = project_lidar_depth(pts, f, 0.02);
  CHECK(d.at(50, 50) == Approx(0.2f));

  pts = {{Vec3(0, 0, -10), 0.0}, {Vec3(0, 0, 10), 0.03}};
  d = project_lidar_depth(pts, f, 0.02);
  for (float v : d.values()) CHECK(v == 0.0f);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 x(u(rng) * 3, u(rng) * 3, 6 + u(rng));
    const ImageF one = project_lidar_depth(std::vector<LidarPoint>{{x, 0.0}}, f, 0.02);
    const auto p = project_point(x, f.camera.intrinsics);
    const int px = static_cast<int>(std::floor(p->pixel.x())), py = static_cast<int>(std::floor(p->pixel.y()));
    if (px < 0 || py < 0 || px >= 100 || py >= 100) continue;
    CHECK(one.at(py, px) == Approx(1.0 / x.z()));
  }
}

TEST_CASE("LiDAR files") {
  TempDir dir("lidar");
  const std::vector<LidarPoint> pts{{Vec3(1, 2, 3), 0.5}, {Vec3(-1, 0.25, 8), 1.5}};
  write_lidar(dir.path / "a.pvgl", pts);
  const auto back = read_lidar(dir.path / "a.pvgl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].position == Vec3(-1, 0.25, 8));
  CHECK(back[1].timestamp == 1.5);
  write_text(dir.path / "b.pvgl", "nope");
  CHECK_THROWS_AS(read_lidar(dir.path / "b.pvgl"), IoError);
}

TEST_CASE("held-out split") {
  std::vector<CameraFrame> frames;
  for (int i = 0; i < 40; ++i) frames.push_back(frame_at(0.02 * i, 4, 4));
  const DatasetSplit s = split_every_fourth(frames);
  CHECK(s.test.size() == 10);
  CHECK(s.train.size() == 30);
  CHECK(s.test.front() == 2);
}

TEST_CASE("images") {
  TempDir dir("images");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF img(5, 7, 3);
  for (auto& v : img.values()) v = u(rng);

  write_channels(dir.path / "a.pvgc", img);
  const ImageF raw = read_channels(dir.path / "a.pvgc");
  CHECK(std::equal(raw.values().begin(), raw.values().end(), img.values().begin(), img.values().end()));
  std::ifstream in(dir.path / "a.pvgc", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "PVGC");
  CHECK(fs::file_size(dir.path / "a.pvgc") == 16 + 5 * 7 * 3 * 4);

  write_png(dir.path / "a.png", img);
  write_ppm(dir.path / "a.ppm", img);
  const ImageF png = read_png(dir.path / "a.png");
  const ImageF ppm = read_ppm(dir.path / "a.ppm");
  CHECK(std::equal(png.values().begin(), png.values().end(), ppm.values().begin(), ppm.values().end()));
  for (std::size_t i = 0; i < img.values().size(); ++i)
    CHECK(std::abs(png.values()[i] - img.values()[i]) < 0.02f);
  for (float v : {0.0f, 0.001f, 0.2f, 0.5f, 1.0f}) CHECK(srgb_decode(srgb_encode(v)) == Approx(v).epsilon(1e-5));
  CHECK_THROWS_AS(read_png(dir.path / "missing.png"), IoError);
}

TEST_CASE("point export") {
  TempDir dir("points");
  std::mt19937_64 rng(5);
  GlobalConfig cfg;
  auto points = testing::random_points(rng, 30);
  write_points_ply(dir.path / "all.ply", points, &cfg);
  GlobalConfig back_cfg;
  back_cfg.cycle_length = 9;
  const auto back = read_points_ply(dir.path / "all.ply", &back_cfg);
  CHECK(back == points);
  CHECK(back_cfg.cycle_length == cfg.cycle_length);

  SUBCASE("static scenes export nothing dynamic") {
    for (auto& p : points) p.log_beta = std::log(0.5);
    const SplitExport s = export_split(points, cfg, 1.0, dir.path / "split");
    CHECK(s.dynamic_count == 0);
    CHECK(read_points_ply(dir.path / "split" / "dynamic.ply").empty());
    CHECK(read_points_ply(dir.path / "split" / "static.ply").size() == 30);
  }

  SUBCASE("recombined halves render the original") {
    for (std::size_t i = 0; i < points.size(); i += 2) points[i].log_beta = std::log(0.05);
    const SplitExport s = export_split(points, cfg, 1.0, dir.path / "split");
    CHECK(s.dynamic_count == 15);
    CHECK(s.static_count == 15);
    auto merged = read_points_ply(dir.path / "split" / "static.ply");
    const auto dyn = read_points_ply(dir.path / "split" / "dynamic.ply");
    merged.insert(merged.end(), dyn.begin(), dyn.end());
    // The renderer breaks depth ties by index, so restore the original order.
    std::vector<PvgPoint> ordered;
    for (const auto& p : points) ordered.push_back(*std::find(merged.begin(), merged.end(), p));
    const Camera cam = testing::small_camera();
    const auto a = render<double>(points, nullptr, cam, 0.1, cfg, RenderSettings{}).out;
    const auto b = render<double>(ordered, nullptr, cam, 0.1, cfg, RenderSettings{}).out;
    double worst = 0;
    for (std::size_t i = 0; i < a.color.values().size(); ++i)
      worst = std::max(worst, std::abs(a.color.values()[i] - b.color.values()[i]));
    CHECK(worst < 1e-6);
  }

  CHECK_THROWS_AS(read_points_ply(dir.path / "missing.ply"), IoError);
}
