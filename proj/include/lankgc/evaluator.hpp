#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "lankgc/dataset.hpp"
#include "lankgc/decoder.hpp"
#include "lankgc/encoder.hpp"

namespace lankgc {

/// Where each entity's neighborhood comes from at evaluation time: emerging
/// (unseen) entities read the auxiliary graph, everyone else the training
/// graph. Both graphs must be inverse-augmented.
class EntityNeighborhoods {
 public:
  explicit EntityNeighborhoods(const KnowledgeGraph& seen_graph,
                               const KnowledgeGraph* emerging_graph = nullptr,
                               std::span<const EntityId> emerging = {});

  std::span<const NeighborEntry> operator()(EntityId e) const;
  bool is_emerging(EntityId e) const {
    return e.index < emerging_.size() && emerging_[e.index] != 0;
  }

 private:
  const KnowledgeGraph& seen_;
  const KnowledgeGraph* emerging_graph_;
  std::vector<std::uint8_t> emerging_;
};

/// Seed-fixed generator for encoding `entity` at evaluation time, so one
/// entity always gets the same neighbor sample.
Rng evaluation_rng(std::uint64_t seed, EntityId entity);

/// Which endpoint of a test triplet is hidden and ranked.
enum class Side { Subject, Object };

/// The relation an endpoint is encoded against: q for the subject, q's
/// inverse for the object.
RelationId encoding_query(const Vocabulary& vocab, RelationId q, Side endpoint);

struct RankResult {
  Triplet query;
  Side hidden = Side::Object;
  std::size_t rank = 0;
  std::size_t candidate_count = 0;
};

struct MetricsSummary {
  double mr = 0.0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
  friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

MetricsSummary summarize(std::span<const std::size_t> ranks);
MetricsSummary summarize(std::span<const RankResult> results);

/// Rank of the truth among the unfiltered candidates: 1 + #strictly higher
/// + ceil(#ties / 2). `filtered[i] != 0` removes candidate i; the truth is
/// never removed.
std::size_t filtered_rank(std::span<const double> scores, std::size_t truth,
                          std::span<const std::uint8_t> filtered);

struct RankingSetup {
  const Encoder* encoder = nullptr;
  ScorerKind scorer = ScorerKind::TransE;
  const EntityNeighborhoods* neighborhoods = nullptr;
  /// Entities that may fill the hidden slot, ascending.
  std::span<const EntityId> candidates;
  /// Known-true triplets filtered from the ranking.
  const TripletSet* known = nullptr;
  std::uint64_t seed = 0;
};

/// Ranks queries against every candidate. Candidate embeddings depend only
/// on the encoding relation and are computed once per relation.
class LinkPredictor {
 public:
  explicit LinkPredictor(const RankingSetup& setup);

  RankResult rank(const Triplet& query, Side hidden);

  /// Parallel over candidates while filling caches, then over queries.
  std::vector<RankResult> rank_all(std::span<const Triplet> queries, std::span<const Side> hidden);
  /// Single-threaded reference.
  std::vector<RankResult> rank_all_serial(std::span<const Triplet> queries,
                                          std::span<const Side> hidden);

  std::vector<double> embed(EntityId entity, RelationId query) const;

 private:
  const std::vector<double>& candidate_table(RelationId encoding_relation, bool parallel);
  RankResult rank_with(const Triplet& query, Side hidden, const std::vector<double>& table) const;

  RankingSetup setup_;
  std::size_t dim_;
  std::unordered_map<std::uint32_t, std::vector<double>> cache_;
};

/// Side hidden for a bundle's test triplets: the seen endpoint.
Side hidden_side(SplitStrategy strategy) noexcept;

struct LinkPredictionRun {
  MetricsSummary metrics;
  std::vector<RankResult> ranks;
  /// Test entities encoded from an empty neighborhood.
  std::size_t empty_neighborhoods = 0;
};

/// Filtered link prediction over the bundle's test set. Candidates are the
/// seen entities; the filter holds train, auxiliary, validation and test.
LinkPredictionRun link_prediction(const DatasetBundle& bundle, const Encoder& encoder,
                                  ScorerKind scorer, std::uint64_t seed, bool parallel = true);

// --- triplet classification -------------------------------------------------

struct LabeledTriplet {
  Triplet triplet;
  bool label = false;
};

struct LabeledScore {
  RelationId relation;
  double score = 0.0;
  bool label = false;
};

struct ThresholdTable {
  std::unordered_map<std::uint32_t, double> per_relation;
  double fallback = 0.0;

  double threshold(RelationId r) const;
};

/// Accuracy of "positive iff score >= threshold" over a set.
double threshold_accuracy(std::span<const LabeledScore> scores, double threshold);

/// Threshold maximizing accuracy among the midpoints of consecutive distinct
/// scores plus one guard below the minimum and one above the maximum; ties go
/// to the smallest threshold.
double best_threshold(std::span<const LabeledScore> scores);

ThresholdTable tune_thresholds(std::span<const LabeledScore> validation);

double classify(std::span<const LabeledScore> test, const ThresholdTable& thresholds);

std::vector<LabeledScore> score_labeled(std::span<const LabeledTriplet> triplets,
                                        const Encoder& encoder, ScorerKind scorer,
                                        const EntityNeighborhoods& neighborhoods, std::uint64_t seed);

}  // namespace lankgc
