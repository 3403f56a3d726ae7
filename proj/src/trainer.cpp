#include "lankgc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>

#include <omp.h>

#include "lankgc/evaluator.hpp"

namespace lankgc {

namespace {

constexpr std::size_t kPartitions = 8;
constexpr int kMaxCorruptRetries = 100;

std::vector<NeighborEntry> without(std::span<const NeighborEntry> adjacency, NeighborEntry edge) {
  std::vector<NeighborEntry> out;
  out.reserve(adjacency.size());
  for (const auto& nb : adjacency) {
    if (nb != edge) out.push_back(nb);
  }
  return out;
}

}  // namespace

std::string_view optimizer_name(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  fail(ErrorKind::Config, "optimizer must be sgd or adam, got '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorKind::Config, "learning_rate must be finite and non-negative");
  }
  if (!(margin > 0.0) || !std::isfinite(margin)) fail(ErrorKind::Config, "margin must be positive");
  if (!(l2_rate >= 0.0) || !std::isfinite(l2_rate)) fail(ErrorKind::Config, "l2_rate must be non-negative");
  if (dim == 0) fail(ErrorKind::Config, "dim must be positive");
  if (negatives_per_positive == 0) fail(ErrorKind::Config, "negatives_per_positive must be positive");
  if (batch_size == 0) fail(ErrorKind::Config, "batch_size must be positive");
}

Triplet corrupt(const Triplet& triplet, std::span<const EntityId> entities, const KnowledgeGraph& kg,
                Rng& rng) {
  if (entities.size() < 2) fail(ErrorKind::Data, "corruption needs at least two entities");
  const bool replace_subject = bernoulli(rng, 0.5);
  const EntityId original = replace_subject ? triplet.subject : triplet.object;
  const auto it = std::lower_bound(entities.begin(), entities.end(), original);
  const bool listed = it != entities.end() && *it == original;
  const auto skip = static_cast<std::size_t>(it - entities.begin());
  Triplet out = triplet;
  for (int attempt = 0; attempt < kMaxCorruptRetries; ++attempt) {
    // Draw among the entities other than the original one.
    std::size_t i = uniform_index(rng, entities.size() - (listed ? 1 : 0));
    if (listed && i >= skip) ++i;
    const EntityId pick = entities[i];
    (replace_subject ? out.subject : out.object) = pick;
    if (!kg.contains(out)) break;
  }
  return out;
}

ad::Var hinge(ad::Tape& tape, double margin, ad::Var positive, ad::Var negative) {
  return tape.relu(tape.add(tape.scalar(margin), tape.sub(negative, positive)));
}

ad::Var main_loss(ad::Tape& tape, const LossContext& ctx, const Triplet& positive,
                  const Triplet& negative, Rng& rng) {
  const auto& vocab = ctx.graph->vocabulary();
  const RelationId q = positive.relation;
  const RelationId q_inv = vocab.inverse(q);
  const auto& enc = *ctx.encoder;

  auto neighborhood = [&](EntityId e, NeighborEntry hidden, bool hide) {
    const auto adj = ctx.graph->adjacency(e);
    return hide && ctx.exclude_query_edge ? without(adj, hidden)
                                          : std::vector<NeighborEntry>(adj.begin(), adj.end());
  };
  const auto s = enc.encode(tape, positive.subject, q,
                            neighborhood(positive.subject, {q, positive.object}, true), rng);
  const auto o = enc.encode(tape, positive.object, q_inv,
                            neighborhood(positive.object, {q_inv, positive.subject}, true), rng);
  const auto r = tape.param_row(Param::Relation, q.index);
  const auto pos_score = score(tape, s, r, o, ctx.scorer);

  ad::Var neg_score;
  if (negative.subject != positive.subject) {
    const auto s2 = enc.encode(tape, negative.subject, q, ctx.graph->adjacency(negative.subject), rng);
    neg_score = score(tape, s2, r, o, ctx.scorer);
  } else {
    const auto o2 = enc.encode(tape, negative.object, q_inv, ctx.graph->adjacency(negative.object), rng);
    neg_score = score(tape, s, r, o2, ctx.scorer);
  }
  return hinge(tape, ctx.margin, pos_score, neg_score);
}

ad::Var subtask_loss(ad::Tape& tape, const LossContext& ctx, const Triplet& positive,
                     const Triplet& negative) {
  auto phi = [&](const Triplet& t) {
    return score(tape, tape.param_row(Param::Entity, t.subject.index),
                 tape.param_row(Param::Relation, t.relation.index),
                 tape.param_row(Param::Entity, t.object.index), ctx.scorer);
  };
  return hinge(tape, ctx.margin, phi(positive), phi(negative));
}

ad::Var l2_penalty(ad::Tape& tape, double rate) {
  const ad::Var terms[] = {tape.sum_squares(tape.param(Param::AttU)),
                           tape.sum_squares(tape.param(Param::AttW)),
                           tape.sum_squares(tape.param(Param::AttZ))};
  return tape.scale(tape.add_n(terms), rate);
}

namespace {

bool wants_l2(const LossContext& ctx, double rate) {
  return rate > 0.0 && uses_neural_attention(ctx.encoder->config().kind);
}

// Loss of one pair scaled by 1/batch; records main and subtask values.
ad::Var pair_term(ad::Tape& tape, const LossContext& ctx, const TrainingPair& pair, double inv_batch,
                  PairLosses& losses) {
  Rng rng(pair.seed);
  auto total = main_loss(tape, ctx, pair.positive, pair.negative, rng);
  losses.main += tape.scalar_value(total);
  if (ctx.subtask) {
    const auto sub = subtask_loss(tape, ctx, pair.positive, pair.negative);
    losses.subtask += tape.scalar_value(sub);
    total = tape.add(total, sub);
  }
  return tape.scale(total, inv_batch);
}

PairLosses run_partitions(const LossContext& ctx, std::span<const TrainingPair> pairs, double l2_rate,
                          GradientBuffer& out, bool parallel) {
  if (pairs.empty()) return {};
  const auto& params = ctx.encoder->params();
  const double inv_batch = 1.0 / static_cast<double>(pairs.size());
  const std::size_t parts = std::min(kPartitions, pairs.size());
  std::vector<GradientBuffer> grads(parts, GradientBuffer(params.dims()));
  std::vector<PairLosses> losses(parts);

  auto work = [&](std::size_t p) {
    const std::size_t begin = pairs.size() * p / parts;
    const std::size_t end = pairs.size() * (p + 1) / parts;
    ad::Tape tape(&params);
    for (std::size_t i = begin; i < end; ++i) {
      tape.reset();
      const auto loss = pair_term(tape, ctx, pairs[i], inv_batch, losses[p]);
      tape.backward(loss, grads[p]);
    }
  };
  if (parallel) {
    const auto n = static_cast<std::int64_t>(parts);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
    for (std::int64_t p = 0; p < n; ++p) work(static_cast<std::size_t>(p));
  } else {
    for (std::size_t p = 0; p < parts; ++p) work(p);
  }

  PairLosses total;
  for (std::size_t p = 0; p < parts; ++p) {
    out.accumulate(grads[p]);
    total.main += losses[p].main;
    total.subtask += losses[p].subtask;
  }
  if (wants_l2(ctx, l2_rate)) {
    ad::Tape tape(&params);
    tape.backward(l2_penalty(tape, l2_rate), out);
  }
  return total;
}

}  // namespace

ad::Var batch_objective(ad::Tape& tape, const LossContext& ctx, std::span<const TrainingPair> pairs,
                        double l2_rate) {
  if (pairs.empty()) fail(ErrorKind::Data, "empty batch");
  const double inv_batch = 1.0 / static_cast<double>(pairs.size());
  PairLosses ignored;
  std::vector<ad::Var> terms;
  terms.reserve(pairs.size() + 1);
  for (const auto& pair : pairs) terms.push_back(pair_term(tape, ctx, pair, inv_batch, ignored));
  if (wants_l2(ctx, l2_rate)) terms.push_back(l2_penalty(tape, l2_rate));
  return tape.add_n(terms);
}

PairLosses batch_gradient(const LossContext& ctx, std::span<const TrainingPair> pairs, double l2_rate,
                          GradientBuffer& out) {
  return run_partitions(ctx, pairs, l2_rate, out, true);
}

PairLosses batch_gradient_serial(const LossContext& ctx, std::span<const TrainingPair> pairs,
                                 double l2_rate, GradientBuffer& out) {
  return run_partitions(ctx, pairs, l2_rate, out, false);
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const ModelDims& dims)
    : kind_(kind), lr_(learning_rate) {
  if (kind_ == OptimizerKind::Adam) {
    for (auto p : kAllParams) {
      m_[static_cast<std::size_t>(p)].assign(param_shape(p, dims).size(), 0.0);
      v_[static_cast<std::size_t>(p)].assign(param_shape(p, dims).size(), 0.0);
    }
  }
}

void Optimizer::step(ParamStore& params, const GradientBuffer& grads) {
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    for (auto p : kAllParams) {
      auto w = params.data(p);
      const auto g = grads.data(p);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
    }
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (auto p : kAllParams) {
    auto w = params.data(p);
    const auto g = grads.data(p);
    auto& m = m_[static_cast<std::size_t>(p)];
    auto& v = v_[static_cast<std::size_t>(p)];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

ModelDims model_dims(const DatasetBundle& bundle, const TrainConfig& cfg, const AggregatorConfig& aggregator) {
  return {bundle.vocab->entity_count(), bundle.vocab->relation_count(), cfg.dim,
          aggregator.kind == AggregatorKind::Lstm};
}

TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg, const AggregatorConfig& aggregator,
                  ScorerKind scorer, const ConfidenceTable* rules, const TrainHooks& hooks) {
  cfg.validate();
  check_scorer_dim(scorer, cfg.dim);
  if (bundle.train.empty()) fail(ErrorKind::EmptyGraph, "training set is empty");
  if (uses_rules(aggregator.kind)) {
    if (!rules) fail(ErrorKind::Config, std::string(aggregator_name(aggregator.kind)) + " needs mined rules");
    if (rules->relation_count() != bundle.vocab->relation_count()) {
      fail(ErrorKind::Data, "rule table does not match the bundle's relations");
    }
  }

  const auto graph = KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses();
  const auto dims = model_dims(bundle, cfg, aggregator);
  Rng init_rng(mix_seed(cfg.seed, 1));
  TrainResult result{ParamStore::initialize(dims, init_rng), {}};
  ParamStore& params = result.params;
  const Encoder encoder(params, rules, aggregator);
  const LossContext ctx{&encoder, &graph, scorer, cfg.margin, cfg.subtask_enabled, cfg.exclude_query_edge};
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, dims);
  GradientBuffer grads(dims);

  std::vector<Triplet> positives(graph.triplets().begin(), graph.triplets().end());
  Rng rng(mix_seed(cfg.seed, 2));
  std::optional<ParamStore> best;
  std::size_t stale = 0;
  auto& report = result.report;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle(std::span<Triplet>(positives), rng);
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t pair_count = 0;
    std::size_t steps = 0;
    std::vector<TrainingPair> batch;
    for (std::size_t begin = 0; begin < positives.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(positives.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t k = 0; k < cfg.negatives_per_positive; ++k) {
          const auto neg = corrupt(positives[i], bundle.seen, graph, rng);
          batch.push_back({positives[i], neg, rng()});
        }
      }
      grads.clear();
      const auto losses = batch_gradient(ctx, batch, cfg.l2_rate, grads);
      if (!std::isfinite(losses.main) || !std::isfinite(losses.subtask)) {
        fail(ErrorKind::Numeric, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(steps + 1) + " (main " + std::to_string(losses.main) +
                                     ", subtask " + std::to_string(losses.subtask) + ")");
      }
      stats.main_loss += losses.main;
      stats.subtask_loss += losses.subtask;
      stats.grad_norm += std::sqrt(grads.squared_norm());
      pair_count += batch.size();
      ++steps;
      optimizer.step(params, grads);
      params.normalize_transforms();
    }
    if (!params.all_finite()) {
      fail(ErrorKind::Numeric, "parameters became non-finite in epoch " + std::to_string(epoch));
    }
    stats.main_loss /= static_cast<double>(pair_count);
    stats.subtask_loss /= static_cast<double>(pair_count);
    stats.grad_norm /= static_cast<double>(steps);

    bool improved = false;
    if (hooks.validate && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      const double value = hooks.validate(params);
      stats.validation = value;
      if (!report.best_validation || value > *report.best_validation) {
        report.best_validation = value;
        report.best_epoch = epoch;
        best = params;
        stale = 0;
        improved = true;
      } else {
        ++stale;
      }
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.epochs.push_back(stats);
    if (hooks.log) {
      *hooks.log << "epoch " << epoch << " main " << stats.main_loss << " subtask " << stats.subtask_loss
                 << " grad " << stats.grad_norm;
      if (stats.validation) *hooks.log << " valid " << *stats.validation;
      *hooks.log << " " << stats.seconds << "s\n";
    }
    if (hooks.checkpoint) {
      if (improved) hooks.checkpoint(params, epoch, true);
      if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) hooks.checkpoint(params, epoch, false);
    }
    if (best && stale >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
  }

  if (best) {
    params = std::move(*best);
  } else {
    report.best_epoch = report.epochs.empty() ? 0 : report.epochs.back().epoch;
    if (hooks.checkpoint) hooks.checkpoint(params, report.best_epoch, true);
  }
  return result;
}

std::function<double(const ParamStore&)> validation_mrr(const DatasetBundle& bundle, const TrainConfig& cfg,
                                                        const AggregatorConfig& aggregator, ScorerKind scorer,
                                                        const ConfidenceTable* rules) {
  struct State {
    std::unique_ptr<KnowledgeGraph> graph;
    std::unique_ptr<EntityNeighborhoods> neighborhoods;
    TripletSet known;
    std::vector<Triplet> queries;
    std::vector<Side> sides;
    std::vector<EntityId> candidates;
  };
  auto state = std::make_shared<State>();
  state->graph = std::make_unique<KnowledgeGraph>(KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses());
  state->neighborhoods = std::make_unique<EntityNeighborhoods>(*state->graph);
  for (const auto* part : {&bundle.train, &bundle.auxiliary, &bundle.validation, &bundle.test}) {
    state->known.insert(part->begin(), part->end());
  }
  state->candidates = bundle.seen;
  std::vector<Triplet> pool;
  for (const auto& t : bundle.validation) {
    if (bundle.is_seen(t.subject) && bundle.is_seen(t.object)) pool.push_back(t);
  }
  Rng rng(mix_seed(cfg.seed, 3));
  if (cfg.validation_queries > 0 && pool.size() > cfg.validation_queries) {
    shuffle(std::span<Triplet>(pool), rng);
    pool.resize(cfg.validation_queries);
    std::sort(pool.begin(), pool.end());
  }
  for (const auto& t : pool) {
    state->queries.push_back(t);
    state->sides.push_back(Side::Object);
    state->queries.push_back(t);
    state->sides.push_back(Side::Subject);
  }
  const std::uint64_t seed = mix_seed(cfg.seed, 4);
  return [state, aggregator, scorer, rules, seed](const ParamStore& params) {
    if (state->queries.empty()) return 0.0;
    const Encoder encoder(params, rules, aggregator);
    RankingSetup setup;
    setup.encoder = &encoder;
    setup.scorer = scorer;
    setup.neighborhoods = state->neighborhoods.get();
    setup.candidates = state->candidates;
    setup.known = &state->known;
    setup.seed = seed;
    LinkPredictor predictor(setup);
    return summarize(predictor.rank_all(state->queries, state->sides)).mrr;
  };
}

}  // namespace lankgc
