#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "ionaddr/chip_model.hpp"
#include "ionaddr/ion_chain.hpp"
#include "ionaddr/ion_sensor.hpp"
#include "ionaddr/measurement_analysis.hpp"
#include "ionaddr/mode_solver.hpp"
#include "ionaddr/propagation.hpp"

using namespace ionaddr;

namespace {

constexpr double kLambda = 0.532;

void BM_SlabModes(benchmark::State& st) {
  const auto p = slab_step_profile(3.0, 1.525, 1.51, Grid::centered_1d(2.5, 0.05 / static_cast<double>(st.range(0))));
  for (auto _ : st) benchmark::DoNotOptimize(solve_modes(p, kLambda, 3));
}
BENCHMARK(BM_SlabModes)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_CircularFundamental(benchmark::State& st) {
  const auto p = circular_step_profile(1.8, 1.525, 1.51, Grid::centered_2d(1.9, 1.9, 0.05, 0.05));
  for (auto _ : st) benchmark::DoNotOptimize(solve_modes(p, kLambda, 1));
}
BENCHMARK(BM_CircularFundamental)->Unit(benchmark::kMillisecond);

void BM_BpmStraight(benchmark::State& st) {
  const auto g = reduce_guide(spim_output_design(), kLambda);
  const Grid grid = Grid::centered_1d(g.half_width() + 15.0, 0.05);
  const double c = 0.0;
  const auto prof = place_guides(g, grid, std::span<const double>(&c, 1));
  const auto u0 = place_mode(guide_fundamental(g, kLambda), grid);
  for (auto _ : st) benchmark::DoNotOptimize(propagate(prof, u0, kLambda, 100.0));
  st.SetItemsProcessed(st.iterations() * 400);
}
BENCHMARK(BM_BpmStraight)->Unit(benchmark::kMillisecond);

void BM_RpeShots(benchmark::State& st) {
  RPEConfig cfg;
  NoiseModel nm;
  nm.shots = static_cast<int>(st.range(0));
  std::uint64_t seed = 0;
  for (auto _ : st) {
    nm.seed = ++seed;
    benchmark::DoNotOptimize(rpe_estimate(stark_oracle(1.0, cfg, nm), cfg));
  }
}
BENCHMARK(BM_RpeShots)->Arg(100)->Arg(1000);

void BM_EightPeakFit(benchmark::State& st) {
  std::vector<double> x, y;
  for (double v = -35.0; v <= 35.0; v += 0.1) {
    x.push_back(v);
    double s = 0.01;
    for (int k = 0; k < 8; ++k) s += std::exp(-2.0 * std::pow((v - (k - 3.5) * 8.0) / 1.5, 2));
    y.push_back(s);
  }
  for (auto _ : st) benchmark::DoNotOptimize(multi_gauss_fit(x, y, 8));
}
BENCHMARK(BM_EightPeakFit)->Unit(benchmark::kMicrosecond);

void BM_UniformDesign(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(design_uniform_spacing(static_cast<int>(st.range(0)), 3.95));
}
BENCHMARK(BM_UniformDesign)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
