#include <benchmark/benchmark.h>

#include "denc/autodiff.hpp"
#include "denc/rng.hpp"

namespace {

void bm_matmul_forward(benchmark::State& state) {
  const int64_t n = state.range(0);
  denc::Rng rng(1);
  denc::TensorF a({n, n}), b({n, n});
  for (float& v : a.data) v = static_cast<float>(rng.next_normal());
  for (float& v : b.data) v = static_cast<float>(rng.next_normal());
  for (auto _ : state) {
    denc::TapeF t;
    auto r = t.matmul(t.leaf(a), t.leaf(b));
    benchmark::DoNotOptimize(t.value(r).data.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(bm_matmul_forward)->Arg(32)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
