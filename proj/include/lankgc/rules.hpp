#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "lankgc/kg.hpp"

namespace lankgc {

/// Sparse rule confidences P(r1 => r2): the fraction of entities having r1
/// among their neighboring relations that also have r2.
class ConfidenceTable {
 public:
  ConfidenceTable() = default;
  explicit ConfidenceTable(std::size_t relation_count)
      : relation_count_(relation_count), support_(relation_count, 0) {}

  std::size_t relation_count() const noexcept { return relation_count_; }

  /// 0 for pairs never observed together.
  double confidence(RelationId premise, RelationId conclusion) const;
  void set(RelationId premise, RelationId conclusion, double value);

  /// Number of entities with r among their neighboring relations. Zero for
  /// tables read back from disk, which carry confidences only.
  std::uint64_t support(RelationId r) const { return support_.at(r.index); }
  void set_support(RelationId r, std::uint64_t count) { support_.at(r.index) = count; }

  std::size_t entry_count() const noexcept { return pairs_.size(); }

  /// Entries ordered by (premise, conclusion).
  struct Entry {
    RelationId premise;
    RelationId conclusion;
    double confidence;
  };
  std::vector<Entry> entries() const;

 private:
  std::uint64_t key(RelationId a, RelationId b) const noexcept {
    return static_cast<std::uint64_t>(a.index) * relation_count_ + b.index;
  }

  std::size_t relation_count_ = 0;
  std::vector<std::uint64_t> support_;
  std::unordered_map<std::uint64_t, double> pairs_;
};

/// Mines confidences over every entity of an inverse-augmented graph. The
/// per-entity relation sets are built in parallel and the pair counts are
/// merged in a fixed order, so the result equals mine_confidence_serial.
ConfidenceTable mine_confidence(const KnowledgeGraph& kg);

/// Single-threaded reference kept for tests and benchmarks.
ConfidenceTable mine_confidence_serial(const KnowledgeGraph& kg);

enum class LogicMode { Raw, Normalized };

std::string_view logic_mode_name(LogicMode mode) noexcept;
LogicMode parse_logic_mode(std::string_view name);

inline constexpr double kDefaultLogicEpsilon = 1e-3;

struct LogicWeightVector {
  std::vector<double> weights;
  LogicMode mode = LogicMode::Normalized;
};

/// Relation-level attention for the sampled neighbors of one entity given a
/// query relation q:
///
///   w_j = P(r_j => q) / max(eps, max{ P(r' => r_j) : r' in context, r' != r_j })
///
/// where `context` is the entity's set of neighboring relations and the
/// inner max over an empty set is 1. Masked slots get 0. In Normalized mode
/// the real weights are rescaled to sum to 1 (all zero if the sum is 0).
LogicWeightVector logic_attention(const ConfidenceTable& table,
                                  std::span<const NeighborEntry> neighbors,
                                  std::span<const std::uint8_t> mask,
                                  std::span<const RelationId> context, RelationId query,
                                  LogicMode mode, double epsilon = kDefaultLogicEpsilon);

/// Convenience overload: the context is the distinct relations of the real
/// entries of `neighbors`.
LogicWeightVector logic_attention(const ConfidenceTable& table,
                                  std::span<const NeighborEntry> neighbors,
                                  std::span<const std::uint8_t> mask, RelationId query,
                                  LogicMode mode, double epsilon = kDefaultLogicEpsilon);

/// `premise\tconclusion\tconfidence` lines, relation names per the vocabulary.
void export_table(const ConfidenceTable& table, const Vocabulary& vocab,
                  const std::filesystem::path& path);
ConfidenceTable import_table(const Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace lankgc
