// OpenMP kernels against the serial reference versions.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "topoloc/kernels.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Parallel)
      topoloc::kernels::gemm_nn(a, b, c, n, n, n);
    else
      topoloc::kernels::reference::gemm_nn(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

template <bool Parallel>
void BM_neighbor_sum(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 32;
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    adj[i].push_back(i + 1);
    adj[i + 1].push_back(i);
  }
  const auto x = random_vec(n * d, 3);
  std::vector<double> out(n * d);
  for (auto _ : state) {
    std::fill(out.begin(), out.end(), 0.0);
    if constexpr (Parallel)
      topoloc::kernels::neighbor_sum(x, adj, out, d);
    else
      topoloc::kernels::reference::neighbor_sum(x, adj, out, d);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm_nn<true>)->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm_nn<false>)->Arg(32)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_neighbor_sum<true>)->Arg(64)->Arg(1024)->Arg(8192);
BENCHMARK(BM_neighbor_sum<false>)->Arg(64)->Arg(1024)->Arg(8192);

BENCHMARK_MAIN();
