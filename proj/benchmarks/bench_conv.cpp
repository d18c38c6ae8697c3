#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "canopy/layers.hpp"
#include "canopy/unet.hpp"

using namespace canopy::nn;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Tensor4<float> random_tensor(Shape4 s, std::uint64_t seed) { return Tensor4<float>(s, random_values(s.size(), seed)); }

// Args: channels, spatial extent.
void BM_Conv3x3Forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const auto spec = conv3x3(c, c);
  const auto x = random_tensor({8, c, hw, hw}, 1);
  const auto w = random_values(spec.weight_count(), 2);
  const std::vector<float> b(c, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward<float>(x, spec, w, b));
  state.SetItemsProcessed(state.iterations() * 8 * 2 * static_cast<std::int64_t>(spec.weight_count()) * hw * hw);
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const auto spec = conv3x3(c, c);
  const auto x = random_tensor({8, c, hw, hw}, 1);
  const auto dy = random_tensor({8, c, hw, hw}, 3);
  const auto w = random_values(spec.weight_count(), 2);
  std::vector<float> dw(w.size()), db(c);
  Tensor4<float> dx;
  for (auto _ : state) {
    conv2d_backward<float>(x, spec, w, dy, &dx, dw, db);
    benchmark::DoNotOptimize(dx.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 4 * static_cast<std::int64_t>(spec.weight_count()) * hw * hw);
}
BENCHMARK(BM_Conv3x3Backward)->Args({8, 64})->Args({32, 32})->Args({64, 16})->Unit(benchmark::kMillisecond);

UNetConfig bench_model() {
  UNetConfig c;
  c.in_channels = 14;
  c.base_channels = 8;
  c.depth = 3;
  c.use_batchnorm = true;
  return c;
}

// One training step of the desk-sized network on a 8 x 14 x 64 x 64 batch.
void BM_UNetTrainStep(benchmark::State& state) {
  const auto cfg = bench_model();
  auto model = init_params(cfg, 1);
  UNet<float> net(cfg);
  const auto x = random_tensor({8, 14, 64, 64}, 4);
  for (auto _ : state) {
    const auto y = net.forward_train(model.params, model.buffers, x);
    Tensor4<float> dy(y.shape(), 1.0f / static_cast<float>(y.size()));
    benchmark::DoNotOptimize(net.backward(model.params, dy));
  }
}
BENCHMARK(BM_UNetTrainStep)->Unit(benchmark::kMillisecond);

void BM_UNetInference(benchmark::State& state) {
  const int tile = static_cast<int>(state.range(0));
  const auto cfg = bench_model();
  const auto model = init_params(cfg, 1);
  const UNet<float> net(cfg);
  const auto x = random_tensor({1, 14, tile, tile}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(model.params, model.buffers, x));
  state.SetItemsProcessed(state.iterations() * tile * tile);
}
BENCHMARK(BM_UNetInference)->Arg(128)->Arg(384)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
