#include <benchmark/benchmark.h>

#include <vector>

#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/ops.hpp"
#include "lano/rng.hpp"

using namespace lano;

namespace {

Tensor<float> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({r, c});
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

ModelConfig bench_config() {
  ModelConfig c;
  c.layers = 4;
  c.channels = 32;
  c.heads = 4;
  c.latent_tokens = 16;
  c.history = 4;
  return c;
}

std::vector<float> random_frames(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> f(c.history * n * c.physical_channels);
  for (auto& v : f) v = static_cast<float>(rng.normal());
  return f;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  NoGradScope<float> off(nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

static void BM_PartialConv(benchmark::State& state) {
  const auto g = static_cast<std::size_t>(state.range(0));
  const auto cfg = bench_config();
  const auto params = init_params<float>(cfg, 7);
  const auto mask = gen_patchwise_mask(g, g, 0.5, 4, 3);
  std::vector<float> m(mask.bits.begin(), mask.bits.end());
  Rng rng(5);
  Tensor<float> slice({cfg.heads, g * g, cfg.latent_tokens});
  for (auto& v : slice.values()) v = static_cast<float>(rng.uniform());
  NoGradScope<float> off(nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(pconv_propagate(slice, m, g, g, params.layers[0], cfg));
}
BENCHMARK(BM_PartialConv)->Arg(32)->Arg(64);

// Forward pass over grid sizes: cost should grow roughly linearly in points.
static void BM_Forward(benchmark::State& state) {
  const auto g = static_cast<std::size_t>(state.range(0));
  const auto cfg = bench_config();
  const auto params = init_params<float>(cfg, 7);
  const auto frames = random_frames(cfg, g * g, 9);
  const auto mask = gen_patchwise_mask(g, g, 0.25, 4, 3);
  NoGradScope<float> off(nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(lano_forward(g, g, frames, mask.bits, params, cfg));
  state.counters["points"] = static_cast<double>(g * g);
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto g = static_cast<std::size_t>(state.range(0));
  const auto cfg = bench_config();
  auto params = init_params<float>(cfg, 7);
  params.set_requires_grad(true);
  const auto frames = random_frames(cfg, g * g, 9);
  const auto mask = gen_patchwise_mask(g, g, 0.25, 4, 3);
  for (auto _ : state) {
    GradientTape<float> tape;
    TapeScope<float> scope(tape);
    tape.backward(sum(square(lano_forward(g, g, frames, mask.bits, params, cfg))));
    params.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
