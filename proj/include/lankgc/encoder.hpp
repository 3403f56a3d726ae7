#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "lankgc/autodiff.hpp"
#include "lankgc/kg.hpp"
#include "lankgc/rules.hpp"

namespace lankgc {

/// Neighborhood aggregators. QueryAttention, GlobalAttention and LogicOnly
/// are the LAN ablations: neural attention alone, neural attention with the
/// query vector replaced by zeros, and logic attention alone.
enum class AggregatorKind { Mean, Lstm, Lan, QueryAttention, GlobalAttention, LogicOnly };

std::string_view aggregator_name(AggregatorKind kind) noexcept;
AggregatorKind parse_aggregator(std::string_view name);

bool uses_rules(AggregatorKind kind) noexcept;
bool uses_neural_attention(AggregatorKind kind) noexcept;

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::Lan;
  std::size_t neighbor_budget = 64;
  LogicMode logic_mode = LogicMode::Normalized;
  double logic_epsilon = kDefaultLogicEpsilon;
};

/// Per-neighbor weights behind one encoding, for inspection.
struct AttentionWeight {
  NeighborEntry neighbor;
  double logic = 0.0;
  double neural = 0.0;
  double total = 0.0;
};

struct EncodedEntity {
  std::vector<double> embedding;
  /// Aligned with the real sampled neighbors; empty for Mean and Lstm.
  std::vector<AttentionWeight> trace;
  /// Set when the entity had no neighbors and got the zero vector.
  bool empty_neighborhood = false;
};

/// e - (w . e) w. With |w| = 1 the result is orthogonal to w.
std::vector<double> transform(std::span<const double> input, std::span<const double> w);
ad::Var transform(ad::Tape& tape, ad::Var input, ad::Var w);

/// Mean over the unmasked entries; the zero vector when none is unmasked.
ad::Var aggregate_mean(ad::Tape& tape, std::span<const ad::Var> transformed,
                       std::span<const std::uint8_t> mask);

/// Single-layer LSTM (hidden size d, gates i, f, g, o) run over the unmasked
/// entries in an order drawn from `rng`; returns the last hidden state, or
/// zeros when nothing is unmasked. Reads LstmW/LstmU/LstmB from the tape's
/// parameter store.
ad::Var aggregate_lstm(ad::Tape& tape, std::span<const ad::Var> transformed,
                       std::span<const std::uint8_t> mask, Rng& rng);

/// Unnormalized attention score u_a . tanh(W_a [query; transformed]).
ad::Var nn_attention(ad::Tape& tape, ad::Var query, ad::Var transformed);

/// Builds output embeddings from sampled neighborhoods. Holds references
/// only; the parameter store and rule table must outlive it.
class Encoder {
 public:
  Encoder(const ParamStore& params, const ConfidenceTable* rules, AggregatorConfig config);

  const AggregatorConfig& config() const noexcept { return config_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Records the encoding of `entity` for query relation `query` on `tape`.
  /// The neighbor sample (and the LSTM order) come from `rng`. The logic
  /// attention context is the full neighborhood's relation set.
  ad::Var encode(ad::Tape& tape, EntityId entity, RelationId query,
                 std::span<const NeighborEntry> neighborhood, Rng& rng,
                 bool* empty = nullptr, std::vector<AttentionWeight>* trace = nullptr) const;

  EncodedEntity encode(EntityId entity, RelationId query, std::span<const NeighborEntry> neighborhood,
                       Rng& rng) const;

 private:
  const ParamStore& params_;
  const ConfidenceTable* rules_;
  AggregatorConfig config_;
};

}  // namespace lankgc
