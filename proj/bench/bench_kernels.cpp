// Serial reference kernels against the OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "m2s/kernels.hpp"

namespace k = m2s::kernels;

namespace {

std::vector<double> noise(std::size_t n) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = noise(std::size_t(n) * n), b = noise(std::size_t(n) * n);
  std::vector<double> c(std::size_t(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0, a, b, 0.0, c);
    else
      k::reference::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0, a, b, 0.0, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(n) * n * n);
}

k::ConvGeometry conv3x3(int channels, int size) {
  k::ConvGeometry g;
  g.in_channels = g.out_channels = channels;
  g.height = g.width = size;
  g.kernel_h = g.kernel_w = 3;
  g.padding = 1;
  return g;
}

template <bool Parallel>
void BM_conv(benchmark::State& state) {
  const auto g = conv3x3(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const auto x = noise(std::size_t(g.in_channels) * g.height * g.width);
  const auto w = noise(std::size_t(g.weight_count()));
  const auto bias = noise(std::size_t(g.out_channels));
  std::vector<double> y(std::size_t(g.out_channels) * g.out_height() * g.out_width());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(g, x, w, bias, y);
    else
      k::reference::conv2d_forward(g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_resize(benchmark::State& state) {
  const int c = 16, in = static_cast<int>(state.range(0)), out = 4 * in;
  const auto x = noise(std::size_t(c) * in * in);
  std::vector<double> y(std::size_t(c) * out * out);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::resize_bilinear_forward(c, in, in, out, out, x, y);
    else
      k::reference::resize_bilinear_forward(c, in, in, out, out, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_conv<false>)->Args({32, 32})->Args({64, 64});
BENCHMARK(BM_conv<true>)->Args({32, 32})->Args({64, 64});
BENCHMARK(BM_resize<false>)->Arg(16)->Arg(64);
BENCHMARK(BM_resize<true>)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
