// Serial reference vs SIMD/OpenMP kernels on the layer shapes the default
// U-net actually runs, plus one batch gradient step.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ippg/kernels.hpp"
#include "ippg/trainer.hpp"
#include "ippg/unet_model.hpp"

using namespace ippg;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Args: out channels, in channels, kernel, input length.
kernels::ConvShape shape_of(const benchmark::State& st) {
  return {static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)),
          static_cast<std::size_t>(st.range(2)), 1};
}

template <bool Parallel>
void conv_forward(benchmark::State& st) {
  const auto s = shape_of(st);
  const auto len = static_cast<std::size_t>(st.range(3));
  const auto w = random_vector(s.weight_count(), 1), b = random_vector(s.out_ch, 2);
  const auto x = random_vector(s.in_ch * len, 3);
  std::vector<double> y(s.out_ch * s.out_len(len));
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::parallel::conv1d_forward(s, w, b, x, len, y);
    } else {
      kernels::reference::conv1d_forward(s, w, b, x, len, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  st.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(s.weight_count() * s.out_len(len)), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void conv_backward(benchmark::State& st) {
  const auto s = shape_of(st);
  const auto len = static_cast<std::size_t>(st.range(3));
  const auto w = random_vector(s.weight_count(), 1), x = random_vector(s.in_ch * len, 3);
  const auto g = random_vector(s.out_ch * s.out_len(len), 4);
  std::vector<double> gi(s.in_ch * len), gw(w.size()), gb(s.out_ch);
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::parallel::conv1d_backward(s, w, x, len, g, gi, gw, gb);
    } else {
      kernels::reference::conv1d_backward(s, w, x, len, g, gi, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
  st.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(2 * s.weight_count() * s.out_len(len)), benchmark::Counter::kIsIterationInvariantRate);
}

void layer_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 23, 5, 300})->Args({32, 32, 5, 150})->Args({64, 64, 5, 75})->Args({32, 96, 5, 150})
      ->Args({16, 48, 5, 300});
}

std::vector<WindowPair> batch_windows(std::size_t n) {
  std::vector<WindowPair> ws(n);
  for (std::size_t i = 0; i < n; ++i) {
    ws[i].input = Matrix(kRoiCount, 300);
    const auto v = random_vector(kRoiCount * 300, 10 + i);
    std::copy(v.begin(), v.end(), ws[i].input.flat().begin());
    ws[i].label = random_vector(300, 100 + i);
  }
  return ws;
}

template <bool Parallel>
void batch_gradient(benchmark::State& st) {
  const auto params = init_params(UnetSpec{}, 1);
  const auto ws = batch_windows(static_cast<std::size_t>(st.range(0)));
  std::vector<const WindowPair*> ptrs;
  for (const auto& w : ws) ptrs.push_back(&w);
  std::vector<double> grad(params.size());
  const LossConfig loss;
  for (auto _ : st) {
    if constexpr (Parallel) {
      benchmark::DoNotOptimize(unet_batch_gradient(params, ptrs, loss, grad, Exec::parallel));
    } else {
      benchmark::DoNotOptimize(unet_batch_gradient_serial(params, ptrs, loss, grad));
    }
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv_forward/reference")->Apply(layer_args);
BENCHMARK(conv_forward<true>)->Name("conv_forward/parallel")->Apply(layer_args);
BENCHMARK(conv_backward<false>)->Name("conv_backward/reference")->Apply(layer_args);
BENCHMARK(conv_backward<true>)->Name("conv_backward/parallel")->Apply(layer_args);
BENCHMARK(batch_gradient<false>)->Name("batch_gradient/serial")->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(batch_gradient<true>)->Name("batch_gradient/parallel")->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
