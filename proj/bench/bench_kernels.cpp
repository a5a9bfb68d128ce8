#include <cstddef>
#include <vector>

#include <benchmark/benchmark.h>

#include "enmdap/kernels.hpp"
#include "enmdap/rng.hpp"

namespace {

namespace k = enmdap::kernels;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  enmdap::SplitMix64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Kernel>
void bm_matmul_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(a, b, out, n, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <auto Kernel>
void bm_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 10;
  const auto logits = random_values(rows * cols, 3);
  std::vector<int> labels(rows);
  for (std::size_t i = 0; i < rows; ++i) labels[i] = static_cast<int>(i % cols);
  std::vector<double> probs(rows * cols), loss(rows);
  for (auto _ : state) {
    Kernel(logits, labels, probs, loss, rows, cols);
    benchmark::DoNotOptimize(loss.data());
  }
}

}  // namespace

BENCHMARK(bm_matmul_nn<k::serial::matmul_nn>)->Name("matmul_nn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_matmul_nn<k::parallel::matmul_nn>)->Name("matmul_nn/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_softmax<k::serial::softmax_xent_rows>)->Name("softmax_xent/serial")->Range(256, 16384);
BENCHMARK(bm_softmax<k::parallel::softmax_xent_rows>)->Name("softmax_xent/parallel")->Range(256, 16384);

BENCHMARK_MAIN();
