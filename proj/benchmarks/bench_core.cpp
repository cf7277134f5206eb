#include <benchmark/benchmark.h>

#include <random>

#include "cgam/click_sim.hpp"
#include "cgam/dataset.hpp"
#include "cgam/distance_transform.hpp"
#include "cgam/refine.hpp"

using namespace cgam;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::shared_ptr<const SegModel> model(int channels, std::size_t size) {
  ModelConfig cfg;
  cfg.channels = channels;
  cfg.encoder_depth = 6;
  cfg.input_size = size;
  return std::make_shared<SegModel>(SegModel::build(cfg, 1));
}

}  // namespace

static void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({1, c, size, size}, 1);
  const Tensor w = random_tensor({c, c, 3, 3}, 2);
  const Tensor b = random_tensor({c}, 3);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(ops::conv2d(tape, x, w, b, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * 9 * size * size));
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 16})->Args({16, 32})->Args({32, 32})->Args({32, 64});

static void BM_DistanceTransform(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  Mask m = Mask::zeros(size, size);
  for (auto& p : m.pixels) p = rng() % 8 != 0;
  for (auto _ : state) benchmark::DoNotOptimize(squared_distance_transform(m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(size * size));
}
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(256)->Arg(512);

static void BM_NextClick(benchmark::State& state) {
  const Sample s = synth_sample(0, static_cast<std::size_t>(state.range(0)), 5, 0.5);
  const Mask empty = Mask::zeros(s.mask.height, s.mask.width);
  for (auto _ : state) benchmark::DoNotOptimize(generate_next_click(empty, s.mask));
}
BENCHMARK(BM_NextClick)->Arg(64)->Arg(256);

// One interactive click: feature pass plus 20 attention iterations.
static void BM_AddClick(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(1));
  auto m = model(static_cast<int>(state.range(0)), size);
  const Sample s = synth_sample(0, size, 5, 0.5);
  const auto click = generate_next_click(Mask::zeros(size, size), s.mask);
  RefineOptions options;
  options.mode = state.range(2) ? RefineMode::kCgam : RefineMode::kNone;
  RefinementSession session(m, s.image, options, s.mask);
  for (auto _ : state) {
    benchmark::DoNotOptimize(session.add_click(*click));
    state.PauseTiming();
    session.undo();
    state.ResumeTiming();
  }
}
BENCHMARK(BM_AddClick)
    ->Args({16, 64, 0})
    ->Args({16, 64, 1})
    ->Args({32, 64, 1})
    ->Args({16, 128, 1})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
