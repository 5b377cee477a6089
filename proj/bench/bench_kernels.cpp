// Serial versus OpenMP throughput of the GEMM and convolution kernels. The
// thread count is the benchmark argument; 1 is the serial baseline. The
// `reference` variants are the plain triple loops.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mmbeam/kernels/conv.hpp"
#include "mmbeam/kernels/gemm.hpp"

namespace {

namespace k = mmbeam::kernels;

const int kAllThreads = k::max_threads();

std::vector<float> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

void thread_args(benchmark::internal::Benchmark* b) {
  b->Arg(1);
  if (kAllThreads > 1) b->Arg(kAllThreads);
}

// Conv layer shaped like a mid-backbone stage: batch 16, 32 -> 32 channels, 24x32.
k::ConvGeometry stage_geometry() {
  k::ConvGeometry g;
  g.batch = 16;
  g.in_channels = 32;
  g.out_channels = 32;
  g.height = 24;
  g.width = 32;
  g.kernel = 3;
  g.pad = 1;
  return g;
}

void BM_GemmNN(benchmark::State& state) {
  k::set_threads(static_cast<int>(state.range(0)));
  const int n = 256;
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    k::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n) * n * n);
  k::set_threads(kAllThreads);
}
BENCHMARK(BM_GemmNN)->Apply(thread_args)->UseRealTime();

void BM_GemmNNReference(benchmark::State& state) {
  const int n = 256;
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    k::reference::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n) * n * n);
}
BENCHMARK(BM_GemmNNReference)->UseRealTime();

void BM_ConvForward(benchmark::State& state) {
  k::set_threads(static_cast<int>(state.range(0)));
  const auto g = stage_geometry();
  const auto x = random_vector(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 3);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel, 4);
  std::vector<float> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    k::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * g.macs());
  k::set_threads(kAllThreads);
}
BENCHMARK(BM_ConvForward)->Apply(thread_args)->UseRealTime();

void BM_ConvForwardReference(benchmark::State& state) {
  const auto g = stage_geometry();
  const auto x = random_vector(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 3);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel, 4);
  std::vector<float> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    k::reference::conv2d_forward(g, x.data(), w.data(), static_cast<const float*>(nullptr), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * g.macs());
}
BENCHMARK(BM_ConvForwardReference)->UseRealTime();

void BM_ConvBackward(benchmark::State& state) {
  k::set_threads(static_cast<int>(state.range(0)));
  const auto g = stage_geometry();
  const auto x = random_vector(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 5);
  const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel, 6);
  const auto gy = random_vector(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width(), 7);
  std::vector<float> gx(x.size()), gw(w.size()), gb(g.out_channels);
  for (auto _ : state) {
    k::conv2d_backward_input(g, w.data(), gy.data(), gx.data());
    k::conv2d_backward_weight(g, x.data(), gy.data(), gw.data(), gb.data());
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * g.macs());
  k::set_threads(kAllThreads);
}
BENCHMARK(BM_ConvBackward)->Apply(thread_args)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
