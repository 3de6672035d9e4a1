// Serial reference versus OpenMP for the hot kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mowst/graph.hpp"
#include "mowst/kernels.hpp"
#include "mowst/theory.hpp"

using namespace mowst;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::matmul(a, b, c, n, n, n);
    else
      kernels::matmul_serial(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_Propagate(benchmark::State& state) {
  const auto per_group = static_cast<std::size_t>(state.range(0));
  const Graph g = generate_specialization_graph(per_group, 8, 0.1, 3).graph;
  const auto adj = g.normalized_adjacency();
  const std::size_t width = 64;
  const auto in = random_values(g.num_nodes() * width, 4);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::propagate(*adj, in, out, width);
    else
      kernels::propagate_serial(*adj, in, out, width);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_GridArgmin(benchmark::State& state) {
  const SimplexGrid grid(3, static_cast<std::size_t>(state.range(0)));
  const GroupProblem problem{{0.6, 0.3, 0.1}, 1.2, {Dispersion::neg_entropy, CappedLinearG{2.0}}};
  auto f = [&](std::span<const double> p) { return group_objective(problem, p); };
  for (auto _ : state) {
    auto best = Parallel ? grid_argmin(grid, f) : grid_argmin_serial(grid, f);
    benchmark::DoNotOptimize(best.index);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(grid.size()));
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Propagate<false>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_Propagate<true>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_GridArgmin<false>)->Arg(100)->Arg(300);
BENCHMARK(BM_GridArgmin<true>)->Arg(100)->Arg(300);

BENCHMARK_MAIN();
