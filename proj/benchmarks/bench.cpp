#include <benchmark/benchmark.h>

#include <vector>

#include "convexecg/kernel.hpp"
#include "convexecg/preprocess.hpp"
#include "convexecg/solver.hpp"
#include "convexecg/synth.hpp"

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  convexecg::SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_BuildK(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(convexecg::build_k(x));
}
BENCHMARK(BM_BuildK)->Arg(125)->Arg(500);

void BM_Fit(benchmark::State& state) {
  const auto x = normals(125, 2);
  const auto y = normals(125, 3);
  const auto k = convexecg::build_k(x);
  convexecg::SolverConfig cfg;
  cfg.lambda = 0.1;
  cfg.algorithm = state.range(0) == 0 ? convexecg::Algorithm::kAcceleratedProximal
                                      : convexecg::Algorithm::kCoordinateDescent;
  for (auto _ : state) benchmark::DoNotOptimize(convexecg::fit(k, y, cfg));
}
BENCHMARK(BM_Fit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SyntheticFit(benchmark::State& state) {
  const auto record = convexecg::generate_record(convexecg::default_synth_config(),
                                                 convexecg::piecewise_preset("strong"));
  const auto x = convexecg::decimate(record.channel("ICM"), 2);
  const auto y = convexecg::decimate(record.channel("I"), 2);
  const std::vector<double> xs(x.begin(), x.begin() + 125), ys(y.begin(), y.begin() + 125);
  const auto k = convexecg::build_k(xs);
  for (auto _ : state) benchmark::DoNotOptimize(convexecg::fit(k, ys, {}));
}
BENCHMARK(BM_SyntheticFit)->Unit(benchmark::kMillisecond);

void BM_Bandpass(benchmark::State& state) {
  const auto x = normals(static_cast<std::size_t>(state.range(0)), 4);
  const convexecg::FilterSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(convexecg::bandpass(x, 500.0, spec));
}
BENCHMARK(BM_Bandpass)->Arg(2500)->Arg(25000);

}  // namespace

BENCHMARK_MAIN();
