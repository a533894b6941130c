#include <random>

#include <benchmark/benchmark.h>

#include "drconv/conv.hpp"
#include "drconv/dataset.hpp"
#include "drconv/drconv_layer.hpp"
#include "drconv/model.hpp"
#include "drconv/trainer.hpp"

namespace drconv {
namespace {

Tensor4 random_input(const Shape4& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor4 t = Tensor4::zeros(s);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

// Args: spatial size, channels, k.
void BM_StandardConvForward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  std::mt19937_64 rng(1);
  const ConvSpec spec{k, 1, Padding::same_zero, c, c};
  StandardFilter f{Kernel::zeros(c, c, k), std::vector<double>(c)};
  std::uniform_real_distribution<double> dist(-0.5, 0.5);
  for (double& v : f.weights.values) v = dist(rng);
  const Tensor4 x = random_input({8, s, s, c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, f, spec));
  state.counters["madds"] = static_cast<double>(8 * standard_conv_cost(spec, true, s, s).madds);
}
BENCHMARK(BM_StandardConvForward)->Args({12, 16, 3})->Args({24, 8, 3})->Args({8, 16, 1});

// Args: spatial size, channels, k, m.
void BM_DRConvForward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto m = static_cast<std::size_t>(state.range(3));
  std::mt19937_64 rng(2);
  const DRConvLayer layer = DRConvLayer::create({k, 1, Padding::same_zero, c, c}, m, 0, rng);
  const Tensor4 x = random_input({8, s, s, c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(drconv_forward(layer, x).y);
  state.counters["madds"] = static_cast<double>(8 * count_layer_cost(layer, s, s).madds);
}
BENCHMARK(BM_DRConvForward)->Args({12, 16, 3, 4})->Args({24, 8, 3, 4})->Args({8, 16, 1, 8});

void BM_DRConvForwardBackward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto m = static_cast<std::size_t>(state.range(3));
  std::mt19937_64 rng(3);
  const DRConvLayer layer = DRConvLayer::create({k, 1, Padding::same_zero, c, c}, m, 0, rng);
  const Tensor4 x = random_input({8, s, s, c}, rng);
  const Tensor4 dy = random_input(layer.spec.output_shape(x.shape()), rng);
  for (auto _ : state) {
    DRConvForward f = drconv_forward(layer, x);
    benchmark::DoNotOptimize(drconv_backward(layer, f.ctx, dy).dx);
  }
}
BENCHMARK(BM_DRConvForwardBackward)->Args({12, 16, 3, 4})->Args({8, 16, 1, 8});

void BM_SelectionPath(benchmark::State& state) {
  const auto path = state.range(0) == 0 ? SelectionPath::fused : SelectionPath::materialized;
  std::mt19937_64 rng(4);
  const DRConvLayer layer = DRConvLayer::create({3, 1, Padding::same_zero, 16, 16}, 4, 0, rng);
  const Tensor4 x = random_input({8, 12, 12, 16}, rng);
  const Tensor4 dy = random_input(layer.spec.output_shape(x.shape()), rng);
  for (auto _ : state) {
    DRConvForward f = drconv_forward(layer, x);
    benchmark::DoNotOptimize(drconv_backward(layer, f.ctx, dy, path).dfeature);
  }
  state.SetLabel(state.range(0) == 0 ? "fused" : "materialized");
}
BENCHMARK(BM_SelectionPath)->Arg(0)->Arg(1);

// One SGD step of the acceptance-sized models, batch 32.
void BM_TrainStep(benchmark::State& state) {
  const std::string config = state.range(0) == 0 ? "drconv_synth.json" : "standard_synth.json";
  const RunConfig run = load_run_config(std::string(DRCONV_CONFIG_DIR) + "/" + config);
  const Dataset data = synth_region_dataset(32, run.model.input_h, run.model.input_w,
                                            run.model.classes, 1);
  TrainConfig tc = run.train;
  tc.epochs = 1;
  tc.batch_size = 32;
  for (auto _ : state) {
    state.PauseTiming();
    Model model = Model::build(run.model, 1);
    state.ResumeTiming();
    benchmark::DoNotOptimize(train(model, data, nullptr, tc).epochs.back().train_loss);
  }
  state.SetLabel(config);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace drconv

BENCHMARK_MAIN();
