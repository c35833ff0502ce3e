// Reference vs parallel kernels on the layer shapes of the default 64x64 generator.
//
//   ./build/bench/bench_kernels --benchmark_filter=conv
//   OMP_NUM_THREADS=4 ./build/bench/bench_kernels

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "deblur/kernels.hpp"

namespace {

using deblur::Real;
using deblur::kernels::ConvGeometry;

ConvGeometry encoder_layer(std::size_t in_ch, std::size_t out_ch, std::size_t in_size) {
  ConvGeometry g;
  g.in_channels = in_ch;
  g.out_channels = out_ch;
  g.in_h = g.in_w = in_size;
  g.kernel = 5;
  g.stride = 2;
  g.padding = 2;
  g.out_h = g.out_w = (in_size + 4 - 5) / 2 + 1;
  return g;
}

std::vector<Real> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return v;
}

ConvGeometry geometry_from(const benchmark::State& state) {
  return encoder_layer(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                       static_cast<std::size_t>(state.range(2)));
}

template <auto Kernel>
void BM_forward(benchmark::State& state) {
  const auto g = geometry_from(state);
  const auto x = random_vector(g.input_size(), 1);
  const auto w = random_vector(g.weight_size(), 2);
  std::vector<Real> y(g.output_size());
  for (auto _ : state) {
    Kernel(g, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(g.output_size() * g.in_channels * 25),
                                               benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Kernel>
void BM_backward_input(benchmark::State& state) {
  const auto g = geometry_from(state);
  const auto dy = random_vector(g.output_size(), 1);
  const auto w = random_vector(g.weight_size(), 2);
  std::vector<Real> dx(g.input_size());
  for (auto _ : state) {
    Kernel(g, dy, w, dx);
    benchmark::DoNotOptimize(dx.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(g.output_size() * g.in_channels * 25),
                                               benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Kernel>
void BM_backward_weight(benchmark::State& state) {
  const auto g = geometry_from(state);
  const auto x = random_vector(g.input_size(), 1);
  const auto dy = random_vector(g.output_size(), 2);
  std::vector<Real> dw(g.weight_size());
  for (auto _ : state) {
    Kernel(g, x, dy, dw);
    benchmark::DoNotOptimize(dw.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(g.output_size() * g.in_channels * 25),
                                               benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Kernel>
void BM_min_pool(benchmark::State& state) {
  deblur::kernels::MinPoolGeometry g;
  g.channels = 3;
  g.height = g.width = static_cast<std::size_t>(state.range(0));
  g.window = static_cast<std::size_t>(state.range(1));
  const auto x = random_vector(g.channels * g.height * g.width, 3);
  std::vector<Real> out(g.height * g.width);
  std::vector<deblur::kernels::ArgminIndex> argmin(out.size());
  for (auto _ : state) {
    Kernel(g, x, out, argmin);
    benchmark::DoNotOptimize(out.data());
  }
}

// (in_channels, out_channels, input size)
void layer_args(benchmark::internal::Benchmark* b) {
  b->Args({3, 64, 64})->Args({64, 128, 32})->Args({128, 256, 16})->Args({256, 512, 8})->Unit(benchmark::kMillisecond);
}

namespace ref = deblur::kernels::reference;
namespace par = deblur::kernels::parallel;

BENCHMARK(BM_forward<ref::conv2d_forward>)->Name("conv_forward/reference")->Apply(layer_args);
BENCHMARK(BM_forward<par::conv2d_forward>)->Name("conv_forward/parallel")->Apply(layer_args);
BENCHMARK(BM_backward_input<ref::conv2d_backward_input>)->Name("conv_backward_input/reference")->Apply(layer_args);
BENCHMARK(BM_backward_input<par::conv2d_backward_input>)->Name("conv_backward_input/parallel")->Apply(layer_args);
BENCHMARK(BM_backward_weight<ref::conv2d_backward_weight>)->Name("conv_backward_weight/reference")->Apply(layer_args);
BENCHMARK(BM_backward_weight<par::conv2d_backward_weight>)->Name("conv_backward_weight/parallel")->Apply(layer_args);
BENCHMARK(BM_min_pool<ref::min_pool_channels_window>)->Name("min_pool/reference")->Args({64, 15})->Args({256, 15});
BENCHMARK(BM_min_pool<par::min_pool_channels_window>)->Name("min_pool/parallel")->Args({64, 15})->Args({256, 15});

}  // namespace

BENCHMARK_MAIN();
