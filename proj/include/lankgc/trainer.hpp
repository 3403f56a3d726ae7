#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lankgc/dataset.hpp"
#include "lankgc/decoder.hpp"
#include "lankgc/encoder.hpp"

namespace lankgc {

enum class OptimizerKind { Sgd, Adam };

std::string_view optimizer_name(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.001;
  double margin = 1.0;
  std::size_t dim = 100;
  std::size_t negatives_per_positive = 1;
  /// L2 rate on u_a, W_a and z_q.
  double l2_rate = 0.001;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  bool subtask_enabled = true;
  /// Hide (q, o) from s's neighborhood (and (q^-1, s) from o's) while scoring
  /// (s, q, o), so training sees the same information as inductive test time.
  bool exclude_query_edge = true;
  /// Validation every this many epochs; 0 disables it.
  std::size_t eval_every = 1;
  /// Evaluations without improvement before stopping.
  std::size_t patience = 10;
  /// Cap on validation queries per evaluation; 0 uses all.
  std::size_t validation_queries = 500;
  /// Periodic checkpoint interval in epochs; 0 writes only the best.
  std::size_t checkpoint_every = 0;

  /// Throws Error(Config) on an invalid combination.
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double main_loss = 0.0;
  double subtask_loss = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
  std::optional<double> validation;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::optional<double> best_validation;
  bool stopped_early = false;
};

/// Replaces the subject or the object (each with probability 1/2) by a
/// different entity drawn uniformly from `entities`, retrying while the
/// result is in `kg`. After 100 rejections the last draw is kept.
Triplet corrupt(const Triplet& triplet, std::span<const EntityId> entities, const KnowledgeGraph& kg,
                Rng& rng);

/// max(0, margin - positive + negative).
ad::Var hinge(ad::Tape& tape, double margin, ad::Var positive, ad::Var negative);

struct LossContext {
  const Encoder* encoder = nullptr;
  /// Inverse-augmented training graph; supplies neighborhoods.
  const KnowledgeGraph* graph = nullptr;
  ScorerKind scorer = ScorerKind::TransE;
  double margin = 1.0;
  bool subtask = true;
  bool exclude_query_edge = true;
};

/// Hinge loss on output embeddings. The endpoint shared by the positive and
/// the negative is encoded once; neighbor samples come from `rng`.
ad::Var main_loss(ad::Tape& tape, const LossContext& ctx, const Triplet& positive,
                  const Triplet& negative, Rng& rng);

/// Hinge loss on input embeddings W_e with the same relation embeddings.
ad::Var subtask_loss(ad::Tape& tape, const LossContext& ctx, const Triplet& positive,
                     const Triplet& negative);

/// rate * (|u_a|^2 + |W_a|^2 + |z_q|^2).
ad::Var l2_penalty(ad::Tape& tape, double rate);

struct TrainingPair {
  Triplet positive;
  Triplet negative;
  std::uint64_t seed = 0;
};

struct PairLosses {
  double main = 0.0;
  double subtask = 0.0;
};

/// Whole mini-batch objective on one tape:
///   mean over pairs of (main + subtask) + l2 penalty (when attention is used).
ad::Var batch_objective(ad::Tape& tape, const LossContext& ctx, std::span<const TrainingPair> pairs,
                        double l2_rate);

/// Gradient of batch_objective added into `out`; returns the summed pair
/// losses. Pairs are cut into a fixed number of contiguous partitions that
/// run in parallel and merge in partition order, so the result does not
/// depend on the thread count.
PairLosses batch_gradient(const LossContext& ctx, std::span<const TrainingPair> pairs, double l2_rate,
                          GradientBuffer& out);
/// Same partitions, one thread.
PairLosses batch_gradient_serial(const LossContext& ctx, std::span<const TrainingPair> pairs,
                                 double l2_rate, GradientBuffer& out);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const ModelDims& dims);

  void step(ParamStore& params, const GradientBuffer& grads);

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::array<std::vector<double>, kParamCount> m_;
  std::array<std::vector<double>, kParamCount> v_;
};

struct TrainHooks {
  /// Higher is better; called every eval_every epochs.
  std::function<double(const ParamStore&)> validate;
  /// `best` marks a new best validation score (or the final epoch without one).
  std::function<void(const ParamStore&, std::size_t epoch, bool best)> checkpoint;
  std::ostream* log = nullptr;
};

struct TrainResult {
  ParamStore params;
  TrainReport report;
};

ModelDims model_dims(const DatasetBundle& bundle, const TrainConfig& cfg, const AggregatorConfig& aggregator);

/// Trains on the bundle's training triplets plus their inverses. Returns the
/// parameters with the best validation score, or the last ones when no
/// validation ran.
TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg, const AggregatorConfig& aggregator,
                  ScorerKind scorer, const ConfidenceTable* rules, const TrainHooks& hooks = {});

/// Validation hook: filtered MRR on up to cfg.validation_queries validation
/// triplets (both sides hidden), neighborhoods from the training graph.
std::function<double(const ParamStore&)> validation_mrr(const DatasetBundle& bundle, const TrainConfig& cfg,
                                                        const AggregatorConfig& aggregator, ScorerKind scorer,
                                                        const ConfidenceTable* rules);

}  // namespace lankgc
