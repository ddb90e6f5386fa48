#include <benchmark/benchmark.h>

#include <memory>

#include "lodstream/io.hpp"
#include "lodstream/render.hpp"
#include "lodstream/update.hpp"

using namespace lodstream;

namespace {

struct Scene {
  std::vector<Point> points;
  std::unique_ptr<Octree> tree;
  Camera camera;
};

const Scene& scene() {
  static const Scene s = [] {
    Scene out;
    out.points = make_synthetic(SyntheticKind::Surface, 1'000'000, 3);
    const CubeBounds bounds = bounds_of(out.points);
    out.tree = std::make_unique<Octree>(bounds);
    Updater(*out.tree).insert_batch(out.points);
    out.camera = overview_camera(bounds, 1024, 768);
    return out;
  }();
  return s;
}

void BM_SelectVisible(benchmark::State& state) {
  const Scene& s = scene();
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_visible(*s.tree, s.camera, static_cast<double>(state.range(0))).nodes.size());
  }
}

void BM_RasterizeLod(benchmark::State& state) {
  const Scene& s = scene();
  const VisibleSet visible = select_visible(*s.tree, s.camera, static_cast<double>(state.range(0)));
  RenderStats stats;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rasterize(visible, s.camera, &stats).covered_pixels());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(stats.samples_processed));
}

void BM_RasterizeBrute(benchmark::State& state) {
  const Scene& s = scene();
  for (auto _ : state) {
    benchmark::DoNotOptimize(brute_force_render(s.points, s.camera).covered_pixels());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.points.size()));
}

}  // namespace

BENCHMARK(BM_SelectVisible)->Arg(128)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RasterizeLod)->Arg(128)->Arg(32)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RasterizeBrute)->Unit(benchmark::kMillisecond);
