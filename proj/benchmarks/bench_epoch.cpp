#include <benchmark/benchmark.h>

#include "cmp/graph.hpp"
#include "cmp/nn.hpp"
#include "cmp/train.hpp"

namespace {

// One full-batch forward and backward pass on the default SBM.
void BM_Epoch(benchmark::State& state) {
  const auto arch = static_cast<cmp::Arch>(state.range(0));
  const auto kind = static_cast<cmp::ModelKind>(state.range(1));
  const cmp::Graph g =
      cmp::sample_negative_edges(cmp::generate_sbm({1000, 10, 0.25, 0.05, 32, 42}), std::nullopt, 42);
  const cmp::Split split = cmp::make_split(g, 0.1, 42);
  const cmp::MessageGraph mg = cmp::make_message_graph(g);
  cmp::ModelSpec spec;
  spec.in_dim = 32;
  spec.out_dim = 10;
  spec.arch = arch;
  spec.kind = kind;
  const cmp::Model model(spec, 1);
  state.SetLabel(cmp::to_string(arch) + "_" + cmp::to_string(kind));
  for (auto _ : state) {
    cmp::Tape t;
    const cmp::Model::Forward f = model.forward(t, mg, g.features);
    cmp::Var loss = cmp::cross_entropy(t, f.logits, g.labels, split.train_mask);
    if (kind == cmp::ModelKind::cl) {
      loss = cmp::add(t, loss, cmp::scale(t, cmp::contrastive_loss(t, f.embeddings, mg), spec.cl_loss_weight));
    }
    t.backward(loss);
    benchmark::DoNotOptimize(t.grad(f.params.front()).raw());
  }
}

void epoch_args(benchmark::internal::Benchmark* b) {
  for (cmp::Arch a : {cmp::Arch::sage, cmp::Arch::gat})
    for (cmp::ModelKind k : {cmp::ModelKind::cmp, cmp::ModelKind::standard,
                             cmp::ModelKind::unconstrained, cmp::ModelKind::cl})
      b->Args({static_cast<long>(a), static_cast<long>(k)});
}
BENCHMARK(BM_Epoch)->Apply(epoch_args)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
