#include "lankgc/encoder.hpp"

#include <algorithm>
#include <numeric>

namespace lankgc {

std::string_view aggregator_name(AggregatorKind kind) noexcept {
  switch (kind) {
    case AggregatorKind::Mean: return "mean";
    case AggregatorKind::Lstm: return "lstm";
    case AggregatorKind::Lan: return "lan";
    case AggregatorKind::QueryAttention: return "query-attn";
    case AggregatorKind::GlobalAttention: return "global-attn";
    case AggregatorKind::LogicOnly: return "logic-only";
  }
  return "?";
}

AggregatorKind parse_aggregator(std::string_view name) {
  for (auto kind : {AggregatorKind::Mean, AggregatorKind::Lstm, AggregatorKind::Lan,
                    AggregatorKind::QueryAttention, AggregatorKind::GlobalAttention,
                    AggregatorKind::LogicOnly}) {
    if (aggregator_name(kind) == name) return kind;
  }
  fail(ErrorKind::Config, "aggregator must be one of lan|mean|lstm|query-attn|global-attn|logic-only, got '" +
                              std::string(name) + "'");
}

bool uses_rules(AggregatorKind kind) noexcept {
  return kind == AggregatorKind::Lan || kind == AggregatorKind::LogicOnly;
}

bool uses_neural_attention(AggregatorKind kind) noexcept {
  return kind == AggregatorKind::Lan || kind == AggregatorKind::QueryAttention ||
         kind == AggregatorKind::GlobalAttention;
}

std::vector<double> transform(std::span<const double> input, std::span<const double> w) {
  if (input.size() != w.size()) fail(ErrorKind::Shape, "transform: sizes differ");
  double proj = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) proj += w[i] * input[i];
  std::vector<double> out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] - proj * w[i];
  return out;
}

ad::Var transform(ad::Tape& tape, ad::Var input, ad::Var w) {
  return tape.sub(input, tape.scale_by(tape.dot(w, input), w));
}

ad::Var aggregate_mean(ad::Tape& tape, std::span<const ad::Var> transformed,
                       std::span<const std::uint8_t> mask) {
  return tape.masked_mean(transformed, mask);
}

ad::Var aggregate_lstm(ad::Tape& tape, std::span<const ad::Var> transformed,
                       std::span<const std::uint8_t> mask, Rng& rng) {
  if (transformed.empty()) fail(ErrorKind::Shape, "aggregate_lstm of nothing");
  const std::size_t d = tape.size(transformed[0]);
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < transformed.size(); ++j) {
    if (mask[j]) order.push_back(j);
  }
  shuffle(std::span<std::size_t>(order), rng);

  const auto w = tape.param(Param::LstmW);
  const auto u = tape.param(Param::LstmU);
  const auto b = tape.param(Param::LstmB);
  auto h = tape.zeros(d);
  auto c = tape.zeros(d);
  for (auto j : order) {
    const auto z = tape.add(tape.add(tape.matvec(w, transformed[j]), tape.matvec(u, h)), b);
    const auto in_gate = tape.sigmoid(tape.slice(z, 0, d));
    const auto forget_gate = tape.sigmoid(tape.slice(z, d, d));
    const auto candidate = tape.tanh(tape.slice(z, 2 * d, d));
    const auto out_gate = tape.sigmoid(tape.slice(z, 3 * d, d));
    c = tape.add(tape.mul(forget_gate, c), tape.mul(in_gate, candidate));
    h = tape.mul(out_gate, tape.tanh(c));
  }
  return h;
}

ad::Var nn_attention(ad::Tape& tape, ad::Var query, ad::Var transformed) {
  const auto hidden = tape.tanh(tape.matvec(tape.param(Param::AttW), tape.concat(query, transformed)));
  return tape.dot(tape.param(Param::AttU), hidden);
}

Encoder::Encoder(const ParamStore& params, const ConfidenceTable* rules, AggregatorConfig config)
    : params_(params), rules_(rules), config_(config) {
  if (config_.neighbor_budget == 0) fail(ErrorKind::Config, "neighbor budget must be at least 1");
  if (uses_rules(config_.kind) && !rules_) {
    fail(ErrorKind::Config, std::string(aggregator_name(config_.kind)) + " needs a rule table");
  }
  if (config_.kind == AggregatorKind::Lstm && !params_.has(Param::LstmW)) {
    fail(ErrorKind::Config, "lstm aggregator needs LSTM parameters");
  }
}

ad::Var Encoder::encode(ad::Tape& tape, EntityId entity, RelationId query,
                        std::span<const NeighborEntry> neighborhood, Rng& rng, bool* empty,
                        std::vector<AttentionWeight>* trace) const {
  (void)entity;
  if (tape.params() != &params_) fail(ErrorKind::State, "tape and encoder use different parameter stores");
  const std::size_t d = params_.dims().dim;
  if (query.index >= params_.dims().relations) fail(ErrorKind::Lookup, "query relation out of range");
  if (trace) trace->clear();

  const auto sample = sample_neighbors(neighborhood, config_.neighbor_budget, rng);
  const std::size_t valid = sample.valid_count();
  if (empty) *empty = valid == 0;
  if (valid == 0) return tape.zeros(d);

  // Padding slots share one zero vector and never reach an output.
  const auto pad = tape.zeros(d);
  std::vector<ad::Var> transformed(sample.size(), pad);
  for (std::size_t j = 0; j < sample.size(); ++j) {
    if (!sample.mask[j]) continue;
    const auto& nb = sample.entries[j];
    transformed[j] = transform(tape, tape.param_row(Param::Entity, nb.entity.index),
                               tape.param_row(Param::Transform, nb.relation.index));
  }

  switch (config_.kind) {
    case AggregatorKind::Mean: return aggregate_mean(tape, transformed, sample.mask);
    case AggregatorKind::Lstm: return aggregate_lstm(tape, transformed, sample.mask, rng);
    default: break;
  }

  std::vector<double> logic(sample.size(), 0.0);
  if (uses_rules(config_.kind)) {
    std::vector<RelationId> context;
    for (const auto& nb : neighborhood) {
      if (context.empty() || context.back() != nb.relation) context.push_back(nb.relation);
    }
    logic = logic_attention(*rules_, sample.entries, sample.mask, context, query, config_.logic_mode,
                            config_.logic_epsilon)
                .weights;
  }

  ad::Var neural{};
  if (uses_neural_attention(config_.kind)) {
    const auto query_vec = config_.kind == AggregatorKind::GlobalAttention
                               ? tape.zeros(d)
                               : tape.param_row(Param::AttZ, query.index);
    const auto zero = tape.scalar(0.0);
    std::vector<ad::Var> scores(sample.size(), zero);
    for (std::size_t j = 0; j < sample.size(); ++j) {
      if (sample.mask[j]) scores[j] = nn_attention(tape, query_vec, transformed[j]);
    }
    neural = tape.masked_softmax(tape.stack(scores), sample.mask);
  }

  std::vector<ad::Var> terms;
  terms.reserve(valid);
  const auto neural_values = uses_neural_attention(config_.kind) ? tape.value(neural) : std::span<const double>{};
  std::vector<double> neural_copy(neural_values.begin(), neural_values.end());
  for (std::size_t j = 0; j < sample.size(); ++j) {
    if (!sample.mask[j]) continue;
    ad::Var weight{};
    double nn = 0.0;
    switch (config_.kind) {
      case AggregatorKind::Lan:
        weight = tape.add(tape.scalar(logic[j]), tape.element(neural, j));
        nn = neural_copy[j];
        break;
      case AggregatorKind::QueryAttention:
      case AggregatorKind::GlobalAttention:
        weight = tape.element(neural, j);
        nn = neural_copy[j];
        break;
      default:
        weight = tape.scalar(logic[j]);
        break;
    }
    terms.push_back(tape.scale_by(weight, transformed[j]));
    if (trace) trace->push_back({sample.entries[j], logic[j], nn, tape.scalar_value(weight)});
  }
  return tape.add_n(terms);
}

EncodedEntity Encoder::encode(EntityId entity, RelationId query,
                              std::span<const NeighborEntry> neighborhood, Rng& rng) const {
  ad::Tape tape(&params_);
  EncodedEntity out;
  const auto v = encode(tape, entity, query, neighborhood, rng, &out.empty_neighborhood, &out.trace);
  const auto values = tape.value(v);
  out.embedding.assign(values.begin(), values.end());
  return out;
}

}  // namespace lankgc
