// Serial vs OpenMP timings for the two parallel paths: chunked Monte Carlo and
// the per-seed scenario fan-out.

#include <algorithm>

#include <benchmark/benchmark.h>

#include "rrlab/labs.hpp"
#include "rrlab/parallel.hpp"

using namespace rrlab;

namespace {

double min_of_five(Rng& rng) {
  double m = rng.normal();
  for (int i = 1; i < 5; ++i) m = std::min(m, rng.normal());
  return m;
}

void monte_carlo(benchmark::State& state, Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(monte_carlo_moments(n, 7, min_of_five, exec).sum);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}

void fan_out(benchmark::State& state, Exec exec) {
  json overlay{{"seeds", {0, 1, 2, 3}}, {"steps", 40}, {"short_steps", 20}, {"warmup", {{"steps", 20}}}};
  const auto cfg = load_scenario_config(Scenario::stochastic, overlay);
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(cfg, exec).arms.size());
}

}  // namespace

BENCHMARK_CAPTURE(monte_carlo, serial, Exec::serial)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(monte_carlo, parallel, Exec::parallel)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(fan_out, serial, Exec::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(fan_out, parallel, Exec::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
