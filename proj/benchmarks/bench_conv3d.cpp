#include <benchmark/benchmark.h>

#include "ctn/autograd.hpp"
#include "ctn/nn.hpp"
#include "ctn/ops.hpp"
#include "ctn/rng.hpp"

using namespace ctn;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

void bm_conv3d_forward(benchmark::State& state) {
  const int64_t side = state.range(0), ch = state.range(1);
  nn::ParamStore ps;
  Rng rng(1);
  nn::Conv3d conv(ps, "conv", ch, ch, 3, 1, 1, rng);
  Var x = make_leaf(random_tensor({1, ch, side, side, side}, rng));
  for (auto _ : state) {
    Var y = conv(x);
    benchmark::DoNotOptimize(y->value.data());
  }
  state.SetItemsProcessed(state.iterations() * side * side * side * ch * ch * 27);
}

void bm_conv3d_train_step(benchmark::State& state) {
  const int64_t side = state.range(0), ch = state.range(1);
  nn::ParamStore ps;
  Rng rng(1);
  nn::Conv3d conv(ps, "conv", ch, ch, 3, 1, 1, rng);
  Tensor xt = random_tensor({1, ch, side, side, side}, rng);
  const Tensor w = random_tensor({1, ch, side, side, side}, rng);
  for (auto _ : state) {
    Var loss = ops::inner(conv(make_leaf(xt)), w);
    backward(loss);
    benchmark::DoNotOptimize(loss->value[0]);
  }
}

}  // namespace

BENCHMARK(bm_conv3d_forward)->Args({16, 16})->Args({32, 16})->Args({32, 32})->Args({64, 8});
BENCHMARK(bm_conv3d_train_step)->Args({16, 16})->Args({32, 16});

BENCHMARK_MAIN();
