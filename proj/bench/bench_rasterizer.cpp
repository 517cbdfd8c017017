#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>

#include "pvg/backward.hpp"
#include "pvg/rasterizer.hpp"

using namespace pvg;

namespace {

struct Scene {
  std::vector<PvgPoint> points;
  std::vector<GaussianSnapshot> snaps;
  CubeMap cube{16};
  Camera cam;
};

Scene make_scene(int count) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s;
  s.cam.intrinsics = {140, 140, 80, 60, 160, 120};
  s.points.resize(count);
  for (auto& p : s.points) {
    const double z = 2.0 + 8.0 * u(rng);
    p.mu = Vec3((u(rng) - 0.5) * 1.2 * z, (u(rng) - 0.5) * 0.9 * z, z);
    p.log_scale = Vec3::Constant(std::log(0.02 + 0.05 * u(rng)));
    p.opacity_logit = logit(0.2 + 0.6 * u(rng));
    p.color = Vec3(u(rng), u(rng), u(rng));
    p.vel = Vec3(u(rng) - 0.5, 0, 0);
  }
  s.snaps = snapshot_all(s.points, 0.0, 0.0, GlobalConfig{});
  return s;
}

void tiled(benchmark::State& state) {
  const Scene s = make_scene(static_cast<int>(state.range(0)));
  const int threads = static_cast<int>(state.range(1));
  const int before = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : before);
  for (auto _ : state) benchmark::DoNotOptimize(render_snapshots<double>(s.snaps, &s.cube, s.cam, RenderSettings{}));
  omp_set_num_threads(before);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void reference(benchmark::State& state) {
  const Scene s = make_scene(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(render_reference<double>(s.snaps, &s.cube, s.cam, RenderSettings{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void forward_backward(benchmark::State& state) {
  const Scene s = make_scene(static_cast<int>(state.range(0)));
  ImageF target(120, 160, 3, 0.5f);
  const Supervision sup{&target, nullptr, nullptr};
  GradientBuffer grads;
  for (auto _ : state) {
    grads.reset(s.points.size(), s.cube.texel_count());
    benchmark::DoNotOptimize(loss_and_gradients<float>(s.points, &s.cube, s.cam, 0.0, 0.0, GlobalConfig{},
                                                       RenderSettings{}, sup, LossWeights{}, grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(tiled)->ArgsProduct({{1000, 10000, 50000}, {1, 0}})->ArgNames({"points", "threads"})->Unit(benchmark::kMillisecond);
BENCHMARK(reference)->Arg(1000)->Arg(10000)->ArgName("points")->Unit(benchmark::kMillisecond);
BENCHMARK(forward_backward)->Arg(10000)->Arg(50000)->ArgName("points")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
