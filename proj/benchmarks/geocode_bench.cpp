#include <benchmark/benchmark.h>

#include <random>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"
#include "vulnmap/geocode.hpp"

namespace {

using namespace vulnmap;

struct Scene {
  std::vector<geocode::PlanarFootprint> footprints;
  std::vector<geocode::ViewRay> rays;
};

Scene make_scene(std::size_t n) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double extent = 30.0 * std::sqrt(static_cast<double>(n));
  Scene s{testing::random_scene(rng, n, extent), {}};
  for (int i = 0; i < 1024; ++i) {
    s.rays.push_back({{extent * (u(rng) - 0.5), extent * (u(rng) - 0.5)}, 360.0 * u(rng), 50.0});
  }
  return s;
}

void BM_MatchIndexed(benchmark::State& state) {
  auto s = make_scene(static_cast<std::size_t>(state.range(0)));
  std::vector<geocode::BoundingBox> boxes;
  for (const auto& f : s.footprints) boxes.push_back(f.bounds);
  geocode::SpatialIndex index(boxes);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(geocode::match_footprint(s.rays[i++ % s.rays.size()], index, s.footprints));
  }
}
BENCHMARK(BM_MatchIndexed)->RangeMultiplier(4)->Range(64, 16384);

void BM_MatchLinearScan(benchmark::State& state) {
  auto s = make_scene(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(testing::linear_scan_match(s.rays[i++ % s.rays.size()], s.footprints));
  }
}
BENCHMARK(BM_MatchLinearScan)->RangeMultiplier(4)->Range(64, 16384);

void BM_GeocodePlanted(benchmark::State& state) {
  auto data = testing::make_planted({.households = 10, .buildings = static_cast<std::size_t>(state.range(0))});
  for (auto _ : state) benchmark::DoNotOptimize(geocode::geocode(data.detections, data.footprints));
}
BENCHMARK(BM_GeocodePlanted)->Arg(1500)->Arg(15000)->Unit(benchmark::kMillisecond);

}  // namespace
