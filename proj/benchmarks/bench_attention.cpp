#include <benchmark/benchmark.h>

#include "ctn/autograd.hpp"
#include "ctn/rng.hpp"
#include "ctn/swin3d.hpp"

using namespace ctn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

void bm_window_attention(benchmark::State& state) {
  const int64_t side = state.range(0), dim = state.range(1);
  const std::array<int64_t, 3> grid{side, side, side}, window{4, 4, 4};
  const bool shifted = state.range(2) != 0;
  std::array<int64_t, 3> shift{0, 0, 0};
  if (shifted) shift = {2, 2, 2};

  nn::ParamStore ps;
  Rng rng(1);
  WindowAttention attn(ps, "attn", dim, dim / 16, window, true, rng);
  const WindowGeom geom = WindowGeom::make(grid, window, shift);
  const Tensor mask = attention_mask(geom);
  Var x = make_leaf(random_tensor({1, side * side * side, dim}, rng));
  for (auto _ : state) {
    Var y = window_unpartition(attn(window_partition(x, geom), mask), geom, 1);
    benchmark::DoNotOptimize(y->value.data());
  }
}

void bm_swin_forward(benchmark::State& state) {
  const int64_t side = state.range(0);
  SwinConfig cfg;
  cfg.stage_channels = {16, 32, 64, 128};
  cfg.stage_depths = {2, 2, 2, 2};
  cfg.num_heads = {2, 4, 4, 8};
  nn::ParamStore ps;
  Rng rng(1);
  Swin3d net(ps, cfg, rng);
  Var x = make_leaf(random_tensor({1, 1, side, side, side}, rng));
  for (auto _ : state) {
    auto feats = net.forward(x);
    benchmark::DoNotOptimize(feats.back()->value.data());
  }
}

}  // namespace

BENCHMARK(bm_window_attention)
    ->Args({8, 32, 0})
    ->Args({8, 32, 1})
    ->Args({16, 32, 0})
    ->Args({16, 32, 1});
BENCHMARK(bm_swin_forward)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
