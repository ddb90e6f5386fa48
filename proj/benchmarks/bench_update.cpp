#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "lodstream/io.hpp"
#include "lodstream/update.hpp"

using namespace lodstream;

namespace {

const std::vector<Point>& uniform_points() {
  static const auto points = make_synthetic(SyntheticKind::Uniform, 1'000'000, 7);
  return points;
}

void run_inserts(benchmark::State& state, const std::vector<Point>& points) {
  const CubeBounds bounds = bounds_of(points);
  const auto batch = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Octree tree(bounds);
    Updater updater(tree);
    for (std::size_t first = 0; first < points.size(); first += batch) {
      updater.insert_batch(std::span<const Point>(points).subspan(first, std::min(batch, points.size() - first)));
    }
    benchmark::DoNotOptimize(tree.node_count());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(points.size()));
}

void BM_InsertShuffled(benchmark::State& state) {
  auto points = uniform_points();
  std::shuffle(points.begin(), points.end(), std::mt19937_64(1));
  run_inserts(state, points);
}

void BM_InsertMorton(benchmark::State& state) {
  auto points = uniform_points();
  morton_order(points, bounds_of(points));
  run_inserts(state, points);
}

void BM_InsertSurface(benchmark::State& state) {
  static const auto points = make_synthetic(SyntheticKind::Surface, 1'000'000, 7);
  run_inserts(state, points);
}

void BM_MortonSort(benchmark::State& state) {
  const auto& base = uniform_points();
  const CubeBounds bounds = bounds_of(base);
  for (auto _ : state) {
    auto points = base;
    morton_order(points, bounds);
    benchmark::DoNotOptimize(points.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(base.size()));
}

}  // namespace

BENCHMARK(BM_InsertShuffled)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InsertMorton)->Arg(100'000)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InsertSurface)->Arg(1'000'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MortonSort)->Unit(benchmark::kMillisecond);
