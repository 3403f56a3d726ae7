#include "lankgc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <omp.h>

namespace lankgc {

namespace {

// Query relation used to encode the entity sitting at `endpoint`.
RelationId endpoint_query(const ParamStore& params, RelationId q, Side endpoint) {
  const auto m = static_cast<std::uint32_t>(params.dims().relations / 2);
  if (endpoint == Side::Subject) return q;
  return RelationId{q.index < m ? q.index + m : q.index - m};
}

}  // namespace

EntityNeighborhoods::EntityNeighborhoods(const KnowledgeGraph& seen_graph,
                                         const KnowledgeGraph* emerging_graph,
                                         std::span<const EntityId> emerging)
    : seen_(seen_graph), emerging_graph_(emerging_graph) {
  if (!seen_.augmented() || (emerging_graph_ && !emerging_graph_->augmented())) {
    fail(ErrorKind::State, "evaluation graphs must be inverse-augmented");
  }
  if (!emerging.empty() && !emerging_graph_) {
    fail(ErrorKind::State, "emerging entities given without an auxiliary graph");
  }
  emerging_.assign(seen_.entity_count(), 0);
  for (auto e : emerging) {
    if (e.index >= emerging_.size()) fail(ErrorKind::Lookup, "emerging entity out of range");
    emerging_[e.index] = 1;
  }
}

std::span<const NeighborEntry> EntityNeighborhoods::operator()(EntityId e) const {
  return is_emerging(e) ? emerging_graph_->adjacency(e) : seen_.adjacency(e);
}

Rng evaluation_rng(std::uint64_t seed, EntityId entity) {
  return Rng(mix_seed(seed, entity.index));
}

RelationId encoding_query(const Vocabulary& vocab, RelationId q, Side endpoint) {
  return endpoint == Side::Subject ? q : vocab.inverse(q);
}

MetricsSummary summarize(std::span<const std::size_t> ranks) {
  MetricsSummary m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (auto r : ranks) {
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1;
    m.hits3 += r <= 3;
    m.hits10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

MetricsSummary summarize(std::span<const RankResult> results) {
  std::vector<std::size_t> ranks;
  ranks.reserve(results.size());
  for (const auto& r : results) ranks.push_back(r.rank);
  return summarize(ranks);
}

std::size_t filtered_rank(std::span<const double> scores, std::size_t truth,
                          std::span<const std::uint8_t> filtered) {
  if (truth >= scores.size()) fail(ErrorKind::Lookup, "truth index out of range");
  if (!filtered.empty() && filtered.size() != scores.size()) {
    fail(ErrorKind::Shape, "filter mask size differs from score count");
  }
  const double target = scores[truth];
  if (!std::isfinite(target)) fail(ErrorKind::Numeric, "non-finite score for the true entity");
  std::size_t better = 0;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == truth || (!filtered.empty() && filtered[i])) continue;
    if (scores[i] > target) {
      ++better;
    } else if (scores[i] == target) {
      ++ties;
    }
  }
  return 1 + better + (ties + 1) / 2;
}

LinkPredictor::LinkPredictor(const RankingSetup& setup) : setup_(setup) {
  if (!setup_.encoder || !setup_.neighborhoods || !setup_.known) {
    fail(ErrorKind::Config, "ranking setup is incomplete");
  }
  if (setup_.candidates.empty()) fail(ErrorKind::Data, "no candidate entities");
  if (!std::is_sorted(setup_.candidates.begin(), setup_.candidates.end())) {
    fail(ErrorKind::Data, "candidates must be sorted");
  }
  dim_ = setup_.encoder->params().dims().dim;
}

std::vector<double> LinkPredictor::embed(EntityId entity, RelationId query) const {
  auto rng = evaluation_rng(setup_.seed, entity);
  return setup_.encoder->encode(entity, query, (*setup_.neighborhoods)(entity), rng).embedding;
}

const std::vector<double>& LinkPredictor::candidate_table(RelationId encoding_relation, bool parallel) {
  auto it = cache_.find(encoding_relation.index);
  if (it != cache_.end()) return it->second;
  const auto n = static_cast<std::int64_t>(setup_.candidates.size());
  std::vector<double> table(setup_.candidates.size() * dim_);
  auto fill = [&](std::int64_t i) {
    const auto v = embed(setup_.candidates[static_cast<std::size_t>(i)], encoding_relation);
    std::copy(v.begin(), v.end(), table.begin() + i * static_cast<std::int64_t>(dim_));
  };
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
    for (std::int64_t i = 0; i < n; ++i) fill(i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) fill(i);
  }
  return cache_.emplace(encoding_relation.index, std::move(table)).first->second;
}

RankResult LinkPredictor::rank_with(const Triplet& query, Side hidden,
                                    const std::vector<double>& table) const {
  const auto& params = setup_.encoder->params();
  const Side given_side = hidden == Side::Object ? Side::Subject : Side::Object;
  const EntityId given = hidden == Side::Object ? query.subject : query.object;
  const EntityId truth = hidden == Side::Object ? query.object : query.subject;

  const auto truth_it = std::lower_bound(setup_.candidates.begin(), setup_.candidates.end(), truth);
  if (truth_it == setup_.candidates.end() || *truth_it != truth) {
    fail(ErrorKind::Data, "true entity is not a candidate");
  }
  const auto truth_index = static_cast<std::size_t>(truth_it - setup_.candidates.begin());

  const auto given_vec = embed(given, endpoint_query(params, query.relation, given_side));
  const auto rel = params.row(Param::Relation, query.relation.index);

  std::vector<double> scores(setup_.candidates.size());
  std::vector<std::uint8_t> filtered(setup_.candidates.size(), 0);
  for (std::size_t i = 0; i < setup_.candidates.size(); ++i) {
    const std::span<const double> cand(table.data() + i * dim_, dim_);
    Triplet t = query;
    if (hidden == Side::Object) {
      scores[i] = score(given_vec, rel, cand, setup_.scorer);
      t.object = setup_.candidates[i];
    } else {
      scores[i] = score(cand, rel, given_vec, setup_.scorer);
      t.subject = setup_.candidates[i];
    }
    filtered[i] = i != truth_index && setup_.known->contains(t);
  }
  return {query, hidden, filtered_rank(scores, truth_index, filtered), setup_.candidates.size()};
}

RankResult LinkPredictor::rank(const Triplet& query, Side hidden) {
  const auto& table = candidate_table(endpoint_query(setup_.encoder->params(), query.relation, hidden), false);
  return rank_with(query, hidden, table);
}

std::vector<RankResult> LinkPredictor::rank_all(std::span<const Triplet> queries,
                                                std::span<const Side> hidden) {
  if (queries.size() != hidden.size()) fail(ErrorKind::Shape, "one hidden side per query");
  std::vector<const std::vector<double>*> tables(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    tables[i] = &candidate_table(endpoint_query(setup_.encoder->params(), queries[i].relation, hidden[i]), true);
  }
  std::vector<RankResult> out(queries.size());
  const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 4) num_threads(worker_count())
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = rank_with(queries[k], hidden[k], *tables[k]);
  }
  return out;
}

std::vector<RankResult> LinkPredictor::rank_all_serial(std::span<const Triplet> queries,
                                                       std::span<const Side> hidden) {
  if (queries.size() != hidden.size()) fail(ErrorKind::Shape, "one hidden side per query");
  std::vector<RankResult> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& table =
        candidate_table(endpoint_query(setup_.encoder->params(), queries[i].relation, hidden[i]), false);
    out.push_back(rank_with(queries[i], hidden[i], table));
  }
  return out;
}

Side hidden_side(SplitStrategy strategy) noexcept {
  // The unseen endpoint is given; the seen one is ranked.
  return strategy == SplitStrategy::Subject ? Side::Object : Side::Subject;
}

LinkPredictionRun link_prediction(const DatasetBundle& bundle, const Encoder& encoder,
                                  ScorerKind scorer, std::uint64_t seed, bool parallel) {
  const auto train = KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses();
  const auto aux = KnowledgeGraph(bundle.vocab, bundle.auxiliary).augment_inverses();
  EntityNeighborhoods neighborhoods(train, &aux, bundle.unseen);

  TripletSet known;
  for (const auto* part : {&bundle.train, &bundle.auxiliary, &bundle.validation, &bundle.test}) {
    known.insert(part->begin(), part->end());
  }

  RankingSetup setup;
  setup.encoder = &encoder;
  setup.scorer = scorer;
  setup.neighborhoods = &neighborhoods;
  setup.candidates = bundle.seen;
  setup.known = &known;
  setup.seed = seed;
  LinkPredictor predictor(setup);

  const Side hidden = hidden_side(bundle.spec.strategy);
  std::vector<Side> sides(bundle.test.size(), hidden);
  LinkPredictionRun run;
  run.ranks = parallel ? predictor.rank_all(bundle.test, sides) : predictor.rank_all_serial(bundle.test, sides);
  run.metrics = summarize(run.ranks);
  for (const auto& t : bundle.test) {
    const EntityId given = hidden == Side::Object ? t.subject : t.object;
    if (neighborhoods(given).empty()) ++run.empty_neighborhoods;
  }
  return run;
}

// --- triplet classification -------------------------------------------------

double ThresholdTable::threshold(RelationId r) const {
  const auto it = per_relation.find(r.index);
  return it == per_relation.end() ? fallback : it->second;
}

double threshold_accuracy(std::span<const LabeledScore> scores, double threshold) {
  if (scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : scores) correct += (s.score >= threshold) == s.label;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double best_threshold(std::span<const LabeledScore> scores) {
  if (scores.empty()) fail(ErrorKind::Data, "cannot tune a threshold on no scores");
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });
  for (const auto& s : sorted) {
    if (!std::isfinite(s.score)) fail(ErrorKind::Numeric, "non-finite classification score");
  }

  // Sweep thresholds upward; everything at or above the threshold is positive.
  std::size_t positives = 0;
  for (const auto& s : sorted) positives += s.label;
  const std::size_t n = sorted.size();
  std::size_t correct = positives;  // threshold below the minimum
  double best = sorted.front().score - 1.0;
  std::size_t best_correct = correct;
  std::size_t i = 0;
  while (i < n) {
    const double value = sorted[i].score;
    while (i < n && sorted[i].score == value) {
      correct += sorted[i].label ? -1 : 1;
      ++i;
    }
    const double t = i < n ? value + (sorted[i].score - value) / 2.0 : value + 1.0;
    if (correct > best_correct) {
      best_correct = correct;
      best = t;
    }
  }
  return best;
}

ThresholdTable tune_thresholds(std::span<const LabeledScore> validation) {
  if (validation.empty()) fail(ErrorKind::Data, "empty validation set for threshold tuning");
  ThresholdTable table;
  table.fallback = best_threshold(validation);
  std::map<std::uint32_t, std::vector<LabeledScore>> groups;
  for (const auto& s : validation) groups[s.relation.index].push_back(s);
  for (const auto& [rel, group] : groups) table.per_relation[rel] = best_threshold(group);
  return table;
}

double classify(std::span<const LabeledScore> test, const ThresholdTable& thresholds) {
  if (test.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : test) correct += (s.score >= thresholds.threshold(s.relation)) == s.label;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<LabeledScore> score_labeled(std::span<const LabeledTriplet> triplets,
                                        const Encoder& encoder, ScorerKind scorer,
                                        const EntityNeighborhoods& neighborhoods, std::uint64_t seed) {
  const auto& params = encoder.params();
  std::vector<LabeledScore> out(triplets.size());
  const auto n = static_cast<std::int64_t>(triplets.size());
#pragma omp parallel for schedule(dynamic, 8) num_threads(worker_count())
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& lt = triplets[static_cast<std::size_t>(i)];
    const auto& t = lt.triplet;
    auto rs = evaluation_rng(seed, t.subject);
    auto ro = evaluation_rng(seed, t.object);
    const auto s = encoder.encode(t.subject, endpoint_query(params, t.relation, Side::Subject),
                                  neighborhoods(t.subject), rs);
    const auto o = encoder.encode(t.object, endpoint_query(params, t.relation, Side::Object),
                                  neighborhoods(t.object), ro);
    out[static_cast<std::size_t>(i)] = {
        t.relation, score(s.embedding, params.row(Param::Relation, t.relation.index), o.embedding, scorer),
        lt.label};
  }
  return out;
}

}  // namespace lankgc
