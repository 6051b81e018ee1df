#include <benchmark/benchmark.h>

#include "osmseg/labelgen.hpp"
#include "osmseg/layers.hpp"
#include "osmseg/network.hpp"
#include "osmseg/synth.hpp"
#include "osmseg/train.hpp"

using namespace osmseg;

namespace {

Tensor filled(std::vector<int> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_ConvForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor in = filled({c, hw, hw}, 1), w = filled({c, c, 3, 3}, 2), b = filled({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(in, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 2LL * c * c * 9 * hw * hw);
}
BENCHMARK(BM_ConvForward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const Tensor in = filled({c, hw, hw}, 1), w = filled({c, c, 3, 3}, 2), g = filled({c, hw, hw}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv_backward(g, in, w, 1, 1, true));
}
BENCHMARK(BM_ConvBackward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMicrosecond);

// One SGD iteration of the desk network on a 64x64 patch.
void BM_DeskTrainingIteration(benchmark::State& state) {
  Network net = build_network(Variant::desk);
  net.initialize(1);
  TrainConfig cfg;
  OptimizerState opt = OptimizerState::fresh(net, cfg);
  const Tensor input = filled({3, 64, 64}, 5);
  std::vector<std::uint8_t> labels(64 * 64);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>(i % 3);
  std::uint64_t it = 0;
  for (auto _ : state) {
    const auto fwd = net_forward(net, input, true, ++it);
    const auto loss = multinomial_loss(fwd.probs, labels);
    sgd_momentum_step(net, net_backward(net, fwd.cache, loss.grad_scores), opt, cfg);
  }
}
BENCHMARK(BM_DeskTrainingIteration)->Unit(benchmark::kMillisecond);

void BM_RasterizeScene(benchmark::State& state) {
  const Scene s = generate_scene(SceneParams::for_style(Style::B, 1));
  const auto widths = RoadWidthTable::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_labels(s.buildings, s.roads, widths, s.image.georef));
}
BENCHMARK(BM_RasterizeScene)->Unit(benchmark::kMicrosecond);

void BM_GenerateScene(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(SceneParams::for_style(Style::A, ++seed)));
}
BENCHMARK(BM_GenerateScene)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
