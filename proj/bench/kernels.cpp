// Serial reference vs OpenMP kernels. Thread count follows LANKGC_THREADS.
#include <benchmark/benchmark.h>

#include "lankgc/evaluator.hpp"
#include "lankgc/synthetic.hpp"
#include "lankgc/trainer.hpp"

using namespace lankgc;

namespace {

struct World {
  DatasetBundle bundle;
  KnowledgeGraph graph;
  ConfidenceTable rules;
  ParamStore params;
  std::vector<TrainingPair> pairs;

  World()
      : bundle(make_bundle()),
        graph(KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses()),
        rules(mine_confidence(graph)) {
    TrainConfig cfg;
    cfg.dim = 32;
    Rng rng(1);
    params = ParamStore::initialize(model_dims(bundle, cfg, {AggregatorKind::Lan}), rng);
    const auto ts = graph.triplets();
    for (int i = 0; i < 256; ++i) {
      const auto& pos = ts[uniform_index(rng, ts.size())];
      pairs.push_back({pos, corrupt(pos, bundle.seen, graph, rng), rng()});
    }
  }

  static DatasetBundle make_bundle() {
    SyntheticSpec spec;
    spec.entities = 2000;
    spec.seed = 3;
    const auto syn = generate_synthetic(spec);
    return build_split(make_corpus(syn.train, syn.valid, syn.test), {SplitStrategy::Subject, 0.5, 3});
  }
};

const World& world() {
  static const World w;
  return w;
}

void BM_MineSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(mine_confidence_serial(world().graph));
}

void BM_MineParallel(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(mine_confidence(world().graph));
}

void link_prediction_bench(benchmark::State& state, bool parallel) {
  const auto& w = world();
  const Encoder enc(w.params, &w.rules, {AggregatorKind::Lan});
  for (auto _ : state) benchmark::DoNotOptimize(link_prediction(w.bundle, enc, ScorerKind::TransE, 7, parallel));
}

void BM_LinkPredictionSerial(benchmark::State& state) { link_prediction_bench(state, false); }
void BM_LinkPredictionParallel(benchmark::State& state) { link_prediction_bench(state, true); }

void gradient_bench(benchmark::State& state, bool parallel) {
  const auto& w = world();
  const Encoder enc(w.params, &w.rules, {AggregatorKind::Lan});
  const LossContext ctx{&enc, &w.graph, ScorerKind::TransE, 1.0, true, true};
  GradientBuffer grads(w.params.dims());
  for (auto _ : state) {
    grads.clear();
    if (parallel) {
      benchmark::DoNotOptimize(batch_gradient(ctx, w.pairs, 0.001, grads));
    } else {
      benchmark::DoNotOptimize(batch_gradient_serial(ctx, w.pairs, 0.001, grads));
    }
  }
}

void BM_BatchGradientSerial(benchmark::State& state) { gradient_bench(state, false); }
void BM_BatchGradientParallel(benchmark::State& state) { gradient_bench(state, true); }

}  // namespace

BENCHMARK(BM_MineSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MineParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinkPredictionSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinkPredictionParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradientSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradientParallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
