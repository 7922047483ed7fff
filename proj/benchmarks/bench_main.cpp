#include <random>

#include <benchmark/benchmark.h>

#include "expomatch/dapsm.hpp"
#include "expomatch/glm.hpp"
#include "expomatch/matching.hpp"
#include "expomatch/pipeline.hpp"
#include "expomatch/synth.hpp"

using namespace expomatch;

namespace {

std::vector<PsUnit> units(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ps(0.05, 0.95), lat(38.0, 45.0), lon(-80.0, -70.0);
  std::vector<PsUnit> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(make_unit("z" + std::to_string(100000 + i), Region::Northeast, i % 3 == 0, ps(rng), lat(rng),
                            lon(rng)));
  return out;
}

void BM_FitLogistic(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  Eigen::MatrixXd x(n, 17);
  std::vector<double> y;
  std::vector<std::string> names;
  for (int j = 0; j < 17; ++j) names.push_back("x" + std::to_string(j));
  for (Eigen::Index i = 0; i < n; ++i) {
    double eta = -1.0;
    for (int j = 0; j < 17; ++j) {
      x(i, j) = nd(rng);
      eta += 0.1 * x(i, j);
    }
    y.push_back(ud(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0);
  }
  const auto design = DesignMatrix::with_intercept(names, x);
  for (auto _ : state) benchmark::DoNotOptimize(fit_logistic(design, y));
}
BENCHMARK(BM_FitLogistic)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_NnMatch(benchmark::State& state) {
  const auto u = units(static_cast<std::size_t>(state.range(0)));
  const double cal = compute_caliper(u);
  for (auto _ : state) benchmark::DoNotOptimize(nn_match(u, cal));
}
BENCHMARK(BM_NnMatch)->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_DapsMatch(benchmark::State& state) {
  const auto u = units(static_cast<std::size_t>(state.range(0)));
  const auto dist = standardized_distance(u);
  const double cal = compute_caliper(u);
  for (auto _ : state) benchmark::DoNotOptimize(daps_match(u, dist, 0.5, cal));
}
BENCHMARK(BM_DapsMatch)->Arg(600)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_PrimaryAnalysis(benchmark::State& state) {
  SynthParams p;
  p.n_per_region = static_cast<int>(state.range(0));
  const Dataset ds = generate(p).data;
  for (auto _ : state) benchmark::DoNotOptimize(run_primary(RunConfig{}, ds));
}
BENCHMARK(BM_PrimaryAnalysis)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
