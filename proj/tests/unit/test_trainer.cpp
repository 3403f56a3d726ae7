#include <cmath>

#include "doctest.h"
#include "lankgc/trainer.hpp"
#include "support.hpp"

using namespace lankgc;

namespace {

struct Toy {
  DatasetBundle bundle;
  KnowledgeGraph graph;
  ConfidenceTable rules;

  explicit Toy(const std::vector<RawTriplet>& raw)
      : bundle(testing::train_only_bundle(raw)),
        graph(KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses()),
        rules(mine_confidence(graph)) {}
};

std::vector<RawTriplet> five_entities() {
  return {{"a", "r0", "b"}, {"b", "r1", "c"}, {"c", "r0", "d"}, {"d", "r2", "e"},
          {"e", "r1", "a"}, {"a", "r2", "c"}, {"b", "r0", "e"}};
}

std::vector<TrainingPair> make_pairs(const Toy& toy, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingPair> pairs;
  const auto ts = toy.graph.triplets();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& pos = ts[uniform_index(rng, ts.size())];
    pairs.push_back({pos, corrupt(pos, toy.bundle.seen, toy.graph, rng), rng()});
  }
  return pairs;
}

ad::Objective objective(const Toy& toy, const std::vector<TrainingPair>& pairs, AggregatorKind kind,
                        ScorerKind scorer, bool subtask, double l2) {
  return {[&toy, pairs, kind, scorer, subtask, l2](const ParamStore& p, GradientBuffer* g, double* margin) {
    const Encoder enc(p, &toy.rules, {kind, 64, LogicMode::Normalized, kDefaultLogicEpsilon});
    const LossContext ctx{&enc, &toy.graph, scorer, 1.0, subtask, true};
    ad::Tape tape(&p);
    const auto loss = batch_objective(tape, ctx, pairs, l2);
    if (g) tape.backward(loss, *g);
    if (margin) *margin = tape.kink_margin();
    return tape.scalar_value(loss);
  }};
}

}  // namespace

TEST_CASE("corrupting a two-entity graph") {
  const Toy toy({{"a", "r", "b"}});
  const auto t = toy.bundle.train[0];
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto c = corrupt(t, toy.bundle.seen, toy.graph, rng);
    if (c.subject == t.subject) {
      CHECK(c.object == t.subject);  // (a, r, a)
    } else {
      CHECK(c.subject == t.object);  // (b, r, b)
      CHECK(c.object == t.object);
    }
  }
}

TEST_CASE("corruption properties over 10^4 draws") {
  Rng graph_rng(3);
  const Toy toy(testing::random_raw(graph_rng, 40, 3, 150));
  Rng rng(9);
  int subject_side = 0;
  const auto ts = toy.graph.triplets();
  for (int i = 0; i < 10000; ++i) {
    const auto& t = ts[uniform_index(rng, ts.size())];
    const auto c = corrupt(t, toy.bundle.seen, toy.graph, rng);
    const int changed = (c.subject != t.subject) + (c.object != t.object);
    CHECK(changed == 1);
    CHECK(c.relation == t.relation);
    CHECK_FALSE(toy.graph.contains(c));
    subject_side += c.subject != t.subject;
  }
  const double ratio = subject_side / 10000.0;
  CHECK(ratio >= 0.47);
  CHECK(ratio <= 0.53);
}

TEST_CASE("hinge values") {
  ad::Tape t;
  CHECK(t.scalar_value(hinge(t, 1.0, t.scalar(-1.0), t.scalar(-5.0))) == 0.0);
  CHECK(t.scalar_value(hinge(t, 1.0, t.scalar(2.0), t.scalar(2.0))) == 1.0);
  CHECK(t.scalar_value(hinge(t, 300.0, t.scalar(-4.0), t.scalar(-3.0))) == 301.0);
}

TEST_CASE("full objective matches finite differences on a five-entity graph") {
  const Toy toy(five_entities());
  const auto pairs = make_pairs(toy, 4, 11);
  for (auto kind : {AggregatorKind::Lan, AggregatorKind::Mean, AggregatorKind::Lstm}) {
    CAPTURE(aggregator_name(kind));
    TrainConfig cfg;
    cfg.dim = 4;
    AggregatorConfig agg{kind};
    Rng rng(5);
    const auto params = ParamStore::initialize(model_dims(toy.bundle, cfg, agg), rng);
    const auto report = ad::finite_diff_check(objective(toy, pairs, kind, ScorerKind::TransE, true, 0.01), params);
    CHECK(report.passed);
    CHECK(report.max_relative_error <= 1e-4);
  }
}

TEST_CASE("subtask gradient reaches input embeddings") {
  const Toy toy(five_entities());
  const auto pairs = make_pairs(toy, 3, 2);
  TrainConfig cfg;
  cfg.dim = 4;
  Rng rng(6);
  const auto params = ParamStore::initialize(model_dims(toy.bundle, cfg, {AggregatorKind::Mean}), rng);
  const auto with = objective(toy, pairs, AggregatorKind::Mean, ScorerKind::DistMult, true, 0.0);
  const auto without = objective(toy, pairs, AggregatorKind::Mean, ScorerKind::DistMult, false, 0.0);
  CHECK(ad::finite_diff_check(with, params).passed);

  // Without the subtask the objective is the mean main loss.
  const Encoder enc(params, &toy.rules, {AggregatorKind::Mean});
  const LossContext ctx{&enc, &toy.graph, ScorerKind::DistMult, 1.0, false, true};
  double manual = 0.0, sub_total = 0.0;
  for (const auto& p : pairs) {
    ad::Tape t(&params);
    Rng r(p.seed);
    manual += t.scalar_value(main_loss(t, ctx, p.positive, p.negative, r));
    sub_total += t.scalar_value(subtask_loss(t, ctx, p.positive, p.negative));
  }
  manual /= static_cast<double>(pairs.size());
  sub_total /= static_cast<double>(pairs.size());
  CHECK(without.evaluate(params, nullptr, nullptr) == doctest::Approx(manual).epsilon(1e-14));
  CHECK(with.evaluate(params, nullptr, nullptr) == doctest::Approx(manual + sub_total).epsilon(1e-14));
}

TEST_CASE("parallel and serial batch gradients are identical") {
  Rng graph_rng(7);
  const Toy toy(testing::random_raw(graph_rng, 30, 3, 80));
  const auto pairs = make_pairs(toy, 37, 4);
  TrainConfig cfg;
  cfg.dim = 8;
  Rng rng(8);
  const auto params = ParamStore::initialize(model_dims(toy.bundle, cfg, {AggregatorKind::Lan}), rng);
  const Encoder enc(params, &toy.rules, {AggregatorKind::Lan});
  const LossContext ctx{&enc, &toy.graph, ScorerKind::TransE, 1.0, true, true};
  GradientBuffer a(params.dims()), b(params.dims());
  const auto la = batch_gradient(ctx, pairs, 0.001, a);
  const auto lb = batch_gradient_serial(ctx, pairs, 0.001, b);
  CHECK(la.main == lb.main);
  CHECK(la.subtask == lb.subtask);
  for (auto p : kAllParams) {
    const auto x = a.data(p), y = b.data(p);
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  const ModelDims dims{6, 4, 5, true};
  Rng rng(12);
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    auto params = ParamStore::initialize(dims, rng);
    const auto before = params;
    GradientBuffer g(dims);
    std::vector<double> noise(params.data(Param::Entity).size());
    for (auto& x : noise) x = uniform_real(rng, -1, 1);
    g.add(Param::Entity, 0, noise);
    Optimizer opt(kind, 0.0, dims);
    opt.step(params, g);
    for (auto p : kAllParams) {
      const auto x = params.data(p);
      const auto y = before.data(p);
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
    params.normalize_transforms();
    const auto x = params.data(Param::Transform);
    const auto y = before.data(Param::Transform);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) <= 1e-12);
  }
}

TEST_CASE("training lowers the loss and is deterministic") {
  const std::vector<RawTriplet> raw = {{"a", "r0", "b"}, {"b", "r0", "c"}, {"c", "r1", "d"}, {"d", "r1", "a"},
                                       {"a", "r2", "c"}, {"b", "r2", "d"}, {"e", "r0", "a"}, {"e", "r1", "f"},
                                       {"f", "r2", "b"}, {"f", "r0", "c"}};
  const auto bundle = testing::train_only_bundle(raw);
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.seed = seed;
    const auto a = train(bundle, cfg, {AggregatorKind::Mean}, ScorerKind::TransE, nullptr);
    REQUIRE(a.report.epochs.size() == 200);
    const double first = a.report.epochs.front().main_loss + a.report.epochs.front().subtask_loss;
    const double last = a.report.epochs.back().main_loss + a.report.epochs.back().subtask_loss;
    CHECK(last < first);
    for (const auto& e : a.report.epochs) {
      CHECK(e.main_loss >= 0.0);
      CHECK(e.subtask_loss >= 0.0);
    }
    if (seed == 1) {
      const auto b = train(bundle, cfg, {AggregatorKind::Mean}, ScorerKind::TransE, nullptr);
      for (std::size_t i = 0; i < a.report.epochs.size(); ++i) {
        CHECK(a.report.epochs[i].main_loss == b.report.epochs[i].main_loss);
        CHECK(a.report.epochs[i].subtask_loss == b.report.epochs[i].subtask_loss);
      }
    }
    // Transform rows stay unit length.
    const auto& dims = a.params.dims();
    for (std::size_t r = 0; r < dims.relations; ++r) {
      const auto row = a.params.row(Param::Transform, r);
      double sq = 0.0;
      for (double v : row) sq += v * v;
      CHECK(std::abs(sq - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("training failures") {
  SUBCASE("empty training set") {
    DatasetBundle empty = testing::train_only_bundle({{"a", "r", "b"}});
    empty.train.clear();
    try {
      train(empty, {}, {AggregatorKind::Mean}, ScorerKind::TransE, nullptr);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyGraph);
    }
  }
  SUBCASE("divergence aborts with a diagnostic") {
    const auto bundle = testing::train_only_bundle(five_entities());
    TrainConfig cfg;
    cfg.dim = 4;
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.learning_rate = 1e300;
    cfg.epochs = 5;
    try {
      train(bundle, cfg, {AggregatorKind::Mean}, ScorerKind::DistMult, nullptr);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Numeric);
    }
  }
  SUBCASE("rule-based aggregators need rules") {
    const auto bundle = testing::train_only_bundle(five_entities());
    CHECK_THROWS_AS(train(bundle, {}, {AggregatorKind::Lan}, ScorerKind::TransE, nullptr), Error);
  }
  CHECK_THROWS_AS(parse_optimizer("rmsprop"), Error);
}

TEST_CASE("validation drives early stopping and the returned parameters") {
  const auto bundle = testing::train_only_bundle(five_entities());
  TrainConfig cfg;
  cfg.dim = 4;
  cfg.epochs = 30;
  cfg.patience = 3;
  int calls = 0;
  TrainHooks hooks;
  // Best at the second evaluation, then flat.
  hooks.validate = [&calls](const ParamStore&) { return ++calls == 2 ? 1.0 : 0.5; };
  std::vector<std::size_t> best_epochs;
  hooks.checkpoint = [&best_epochs](const ParamStore&, std::size_t epoch, bool best) {
    if (best) best_epochs.push_back(epoch);
  };
  const auto result = train(bundle, cfg, {AggregatorKind::Mean}, ScorerKind::TransE, nullptr, hooks);
  CHECK(result.report.stopped_early);
  CHECK(result.report.best_epoch == 2);
  CHECK(result.report.epochs.size() == 5);
  CHECK(best_epochs == std::vector<std::size_t>{1, 2});
}
