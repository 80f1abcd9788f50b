// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moescore/kernels.hpp"
#include "moescore/model.hpp"

using namespace moescore;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    if constexpr (Parallel) {
      kernels::matmul(a, b, c, n, n, n);
    } else {
      kernels::reference::matmul(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_CountPairs(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(n, 3), y = random_values(n, 4);
  for (auto _ : state) {
    const auto c = Parallel ? kernels::count_pairs(x, y) : kernels::reference::count_pairs(x, y);
    benchmark::DoNotOptimize(c);
  }
}

template <bool Parallel>
void BM_PredictAll(benchmark::State& state) {
  Config config;
  config.expert4 = {16, 2, 16, 0.1};
  Model model(config);
  const Expert4Dims dims{2, 8, 8};
  model.create_expert(4, dims);
  model.set_gate_experts({4});
  std::mt19937_64 gen(5);
  std::normal_distribution<double> dist;
  std::vector<FeatureRecord> records(static_cast<std::size_t>(state.range(0)));
  for (auto& r : records) {
    r.audio_layers = Tensor({2, 6, 8});
    r.text_seq = Tensor({4, 8});
    for (double& v : r.audio_layers->data()) v = dist(gen);
    for (double& v : r.text_seq->data()) v = dist(gen);
  }
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_all(records, Parallel));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/openmp")->Arg(64)->Arg(256);
BENCHMARK(BM_CountPairs<false>)->Name("count_pairs/reference")->Arg(500)->Arg(4000);
BENCHMARK(BM_CountPairs<true>)->Name("count_pairs/openmp")->Arg(500)->Arg(4000);
BENCHMARK(BM_PredictAll<false>)->Name("predict_all/serial")->Arg(500);
BENCHMARK(BM_PredictAll<true>)->Name("predict_all/parallel")->Arg(500);

BENCHMARK_MAIN();
