#include <benchmark/benchmark.h>

#include <cmath>

#include "perco/analysis.hpp"
#include "perco/partition.hpp"
#include "perco/solver.hpp"

using namespace perco;

namespace {

Environment sample_env(int dim, int scale, double p) {
  EnvironmentSpec s;
  s.dim = dim;
  s.scale = scale;
  s.open_probability = p;
  s.seed = 42;
  return Environment::generate(s);
}

void BM_Generate(benchmark::State& state) {
  const int scale = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_env(2, scale, 0.75));
}
BENCHMARK(BM_Generate)->Arg(4)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_MaximalCluster(benchmark::State& state) {
  const Environment env = sample_env(2, static_cast<int>(state.range(0)), 0.75);
  for (auto _ : state) benchmark::DoNotOptimize(maximal_cluster(env, env.box()));
}
BENCHMARK(BM_MaximalCluster)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_GoodnessMap(benchmark::State& state) {
  const Environment env = sample_env(2, static_cast<int>(state.range(0)), 0.75);
  WellConnectedOptions wc;
  wc.min_resolution = 13;
  for (auto _ : state) benchmark::DoNotOptimize(GoodnessMap(env, wc));
}
BENCHMARK(BM_GoodnessMap)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_BuildPartition(benchmark::State& state) {
  const Environment env = sample_env(2, static_cast<int>(state.range(0)), 0.9);
  PartitionOptions opts;
  opts.goodness.min_resolution = 9;
  const GoodnessMap gm(env, opts.goodness);
  for (auto _ : state) benchmark::DoNotOptimize(build_partition(env, gm, opts));
}
BENCHMARK(BM_BuildPartition)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Corrector2d(benchmark::State& state) {
  const Environment env = sample_env(2, static_cast<int>(state.range(0)), 0.75);
  int iterations = 0;
  for (auto _ : state) {
    const auto c = corrector(env, env.box(), {1.0, 0.0, 0.0});
    iterations = c.report.iterations;
  }
  state.counters["cg_iterations"] = iterations;
}
BENCHMARK(BM_Corrector2d)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Corrector3d(benchmark::State& state) {
  const Environment env = sample_env(3, static_cast<int>(state.range(0)), 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(corrector(env, env.box(), {1.0, 0.0, 0.0}));
}
BENCHMARK(BM_Corrector3d)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_GreensGradient(benchmark::State& state) {
  const Environment env = sample_env(2, static_cast<int>(state.range(0)), 0.75);
  const ClusterGraph g = maximal_cluster(env, env.box());
  const EdgeRef e = g.edge_ref(g.num_edges() / 2);
  for (auto _ : state) benchmark::DoNotOptimize(greens_gradient(g, e));
}
BENCHMARK(BM_GreensGradient)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_MultiscaleRhs(benchmark::State& state) {
  const double R = static_cast<double>(state.range(0));
  GridField u(GridSpec::centered(2, {0.0, 0.0, 0.0}, 24.0 * R, 1.0), 1);
  for (std::int64_t k = 0; k < u.grid.size(); ++k) {
    const auto y = u.grid.position(k);
    u.at(k) = std::sin(0.3 * y[0]) * std::cos(0.2 * y[1]);
  }
  for (auto _ : state) benchmark::DoNotOptimize(multiscale_rhs(u, R, 2.0));
}
BENCHMARK(BM_MultiscaleRhs)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
