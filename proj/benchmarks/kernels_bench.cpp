#include <benchmark/benchmark.h>

#include <random>

#include "ocsb/kernels.hpp"

using namespace ocsb;

namespace {

Tensor random_tensor(Shape4 s, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor t(s);
  for (float& v : t.values()) v = d(rng);
  return t;
}

// Args: channels in, channels out, spatial size, kernel, stride, groups.
void BM_Conv2d(benchmark::State& state) {
  const int64_t cin = state.range(0), cout = state.range(1), hw = state.range(2), k = state.range(3);
  ConvParams p;
  p.stride_h = p.stride_w = static_cast<int>(state.range(4));
  p.groups = static_cast<int>(state.range(5));
  p.kernel = random_tensor({cout, cin / p.groups, k, k}, 1);
  p.bias.assign(static_cast<size_t>(cout), 0.1f);
  p.pad = Padding::uniform(static_cast<int>(k / 2));
  const Tensor x = random_tensor({1, cin, hw, hw}, 2);
  const Shape4 os = conv2d_output_shape(x.shape(), p);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p, Epilogue{Activation::kRelu, {}}));
  const double macs = static_cast<double>(os.size()) * static_cast<double>(cin / p.groups * k * k);
  state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

}  // namespace

BENCHMARK(BM_Conv2d)
    ->ArgNames({"cin", "cout", "hw", "k", "s", "g"})
    ->Args({3, 64, 113, 3, 1, 1})      // first conv, stride 1
    ->Args({16, 64, 55, 3, 1, 1})      // fire expand 3x3
    ->Args({128, 16, 55, 1, 1, 1})     // fire squeeze
    ->Args({512, 1000, 13, 1, 1, 1})   // classifier conv
    ->Args({64, 128, 56, 1, 1, 1})     // expansion
    ->Args({128, 128, 56, 3, 2, 128})  // depthwise, stride 2
    ->Args({256, 256, 14, 3, 1, 256})  // depthwise
    ->Args({32, 32, 28, 3, 1, 4})      // grouped
    ->Unit(benchmark::kMicrosecond);

static void BM_MaxPool(benchmark::State& state) {
  const Tensor x = random_tensor({1, 64, 111, 111}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(max_pool(x, {3, 3, 2, 2, {}}));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMicrosecond);

static void BM_GlobalDepthwise(benchmark::State& state) {
  const Tensor x = random_tensor({1, 512, 7, 7}, 4);
  const Tensor k = random_tensor({512, 1, 7, 7}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(global_depthwise_conv(x, k));
}
BENCHMARK(BM_GlobalDepthwise)->Unit(benchmark::kMicrosecond);

static void BM_FullyConnected(benchmark::State& state) {
  const auto in = state.range(0), out = state.range(1);
  const Tensor x = random_tensor({1, in, 1, 1}, 6);
  const Tensor w = random_tensor({out, in, 1, 1}, 7);
  const std::vector<float> b(static_cast<size_t>(out), 0.0f);
  for (auto _ : state) benchmark::DoNotOptimize(fully_connected(x, w.values(), b, out));
}
BENCHMARK(BM_FullyConnected)->Args({25088, 512})->Args({1280, 1000})->Unit(benchmark::kMicrosecond);
