#include <benchmark/benchmark.h>

#include "ctn/metrics.hpp"
#include "ctn/phantom.hpp"
#include "ctn/skeleton.hpp"

using namespace ctn;

namespace {

LabelMask phantom_mask(int64_t grid) {
  PhantomSpec spec;
  spec.seed = 42;
  spec.grid_size = grid;
  if (grid < 48) {
    spec.aorta_radius_range = {3.0, 4.0};
    spec.coronary_radius_range = {1.0, 1.5};
  }
  return generate_phantom(spec).second;
}

void bm_skeletonize(benchmark::State& state) {
  const BinaryMask fg = class_mask(phantom_mask(state.range(0)), -1);
  for (auto _ : state) {
    BinaryMask s = skeletonize(fg);
    benchmark::DoNotOptimize(s.count());
  }
}

void bm_assd(benchmark::State& state) {
  const LabelMask m = phantom_mask(state.range(0));
  const BinaryMask a = class_mask(m, -1);
  BinaryMask b = a;
  // Perturb one slab so the surfaces differ.
  for (int64_t y = 0; y < b.shape[1]; ++y)
    for (int64_t x = 0; x < b.shape[2]; ++x) b.at(b.shape[0] / 2, y, x) = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(assd(a, b));
  }
}

void bm_evaluate(benchmark::State& state) {
  const LabelMask gt = phantom_mask(state.range(0));
  LabelMask pred = gt;
  for (int64_t y = 0; y < pred.shape[1]; ++y)
    for (int64_t x = 0; x < pred.shape[2]; ++x) pred.at(pred.shape[0] / 2, y, x) = 0;
  for (auto _ : state) {
    const MetricsReport r = evaluate(pred, gt);
    benchmark::DoNotOptimize(r.dice);
  }
}

}  // namespace

BENCHMARK(bm_skeletonize)->Arg(32)->Arg(64);
BENCHMARK(bm_assd)->Arg(32)->Arg(64);
BENCHMARK(bm_evaluate)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
