#include <benchmark/benchmark.h>

#include <random>

#include "cmp/autodiff.hpp"
#include "cmp/eig.hpp"

namespace {

cmp::Tensor random_symmetric(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  cmp::Tensor w = cmp::Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) w(i, j) = w(j, i) = n01(rng);
  return w;
}

void BM_SymmetricEig(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const cmp::Tensor w = random_symmetric(d, 1);
  for (auto _ : state) benchmark::DoNotOptimize(cmp::symmetric_eig(w));
}
BENCHMARK(BM_SymmetricEig)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Soft-PSD product of a weight with a batch of rows, forward and backward.
void BM_RescaledApply(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const cmp::Tensor w = random_symmetric(d, 2);
  cmp::Tensor z = cmp::Tensor::matrix(1000, d, 0.1);
  for (auto _ : state) {
    cmp::Tape t;
    const cmp::Var wv = t.leaf(w);
    const cmp::Var out = cmp::eig_rescaled_apply(t, wv, t.leaf(z), t.leaf(cmp::Tensor::scalar(0.3)));
    t.backward(cmp::sum(t, out));
    benchmark::DoNotOptimize(t.grad(wv).raw());
  }
}
BENCHMARK(BM_RescaledApply)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
