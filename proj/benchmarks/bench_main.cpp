#include <benchmark/benchmark.h>

#include "mirrorlab/analytics.hpp"
#include "mirrorlab/environment.hpp"
#include "mirrorlab/exact_oracle.hpp"
#include "mirrorlab/lattice.hpp"
#include "mirrorlab/rng.hpp"
#include "mirrorlab/walks.hpp"

using namespace mirrorlab;

static void BM_EnumerateMatchings(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_matchings(d).size());
}
BENCHMARK(BM_EnumerateMatchings)->DenseRange(2, 5);

static void BM_CoupledStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const double p = 0.05;
  const MirrorFamily& fam = mirror_family(d);
  CounterRng rng(1);
  CoupledWalk walk(fam, p, WalkStart{}, true, draw_driving(fam, p, rng));
  for (auto _ : state) benchmark::DoNotOptimize(walk.step(rng));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CoupledStep)->DenseRange(2, 4);

static void BM_RayQuery(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  MirrorIndex idx(3, 20);
  CounterRng rng(2);
  auto coord = [&] { return static_cast<std::int64_t>(rng.uniform_index(2001)) - 1000; };
  for (std::int64_t i = 0; i < n; ++i) {
    Site s;
    for (int j = 0; j < 3; ++j) s.coords[static_cast<std::size_t>(j)] = coord();
    idx.insert(s);
  }
  for (auto _ : state) {
    Site x;
    for (int j = 0; j < 3; ++j) x.coords[static_cast<std::size_t>(j)] = coord();
    benchmark::DoNotOptimize(idx.ray_query(x, Direction::e1(), 400));
  }
}
BENCHMARK(BM_RayQuery)->Range(1 << 8, 1 << 16);

static void BM_ExactOracle(benchmark::State& state) {
  const auto t = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(compare_quenched_driven(2, 3, 10, t, OracleMode::kRational).tv);
  }
}
BENCHMARK(BM_ExactOracle)->DenseRange(2, 5)->Unit(benchmark::kMillisecond);

static void BM_DrivingMsd(benchmark::State& state) {
  const std::vector<std::int64_t> times = {1000};
  for (auto _ : state) {
    benchmark::DoNotOptimize(driving_msd(3, 0.1, times, MonteCarlo{100, 3, 1}).msd[0].mean());
  }
}
BENCHMARK(BM_DrivingMsd)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
