#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lankgc/common.hpp"

namespace lankgc {

struct EntityId {
  std::uint32_t index = 0;
  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

/// Index into the augmented relation vocabulary: originals occupy [0, m),
/// their inverses [m, 2m). Vocabulary::inverse maps between the halves.
struct RelationId {
  std::uint32_t index = 0;
  friend auto operator<=>(const RelationId&, const RelationId&) = default;
};

struct Triplet {
  EntityId subject;
  RelationId relation;
  EntityId object;
  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct TripletHash {
  std::size_t operator()(const Triplet& t) const noexcept {
    std::uint64_t h = mix_seed(t.subject.index, t.relation.index);
    return static_cast<std::size_t>(mix_seed(h, t.object.index));
  }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

/// One (relation, entity) pair of a neighborhood.
struct NeighborEntry {
  RelationId relation;
  EntityId entity;
  friend auto operator<=>(const NeighborEntry&, const NeighborEntry&) = default;
};

/// Suffix naming the inverse of a relation in every serialized file.
inline constexpr std::string_view kInverseSuffix = "**INV";

/// Name <-> id maps for entities and base relations, sorted lexicographically
/// so that ids are reproducible.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> entity_names, std::vector<std::string> relation_names);

  std::size_t entity_count() const noexcept { return entities_.size(); }
  /// m: number of base relations.
  std::size_t base_relation_count() const noexcept { return relations_.size(); }
  /// 2m: size of the augmented relation vocabulary.
  std::size_t relation_count() const noexcept { return 2 * relations_.size(); }

  EntityId entity(std::string_view name) const;
  std::optional<EntityId> find_entity(std::string_view name) const;
  const std::string& entity_name(EntityId id) const;

  /// Accepts base names and names carrying the inverse suffix.
  RelationId relation(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;
  std::string relation_name(RelationId id) const;

  bool is_inverse(RelationId r) const noexcept { return r.index >= relations_.size(); }
  RelationId inverse(RelationId r) const noexcept;
  RelationId base(RelationId r) const noexcept;

  std::span<const std::string> entity_names() const noexcept { return entities_; }
  std::span<const std::string> relation_names() const noexcept { return relations_; }

  /// Stable digest of both name lists.
  std::uint64_t checksum() const noexcept;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, std::uint32_t> entity_index_;
  std::unordered_map<std::string, std::uint32_t> relation_index_;
};

/// Name-level triplet as read from a TSV line.
struct RawTriplet {
  std::string subject;
  std::string relation;
  std::string object;
  friend auto operator<=>(const RawTriplet&, const RawTriplet&) = default;
};

struct LabeledRawTriplet {
  RawTriplet triplet;
  bool label = false;
};

std::vector<RawTriplet> read_raw_triplets(const std::filesystem::path& path);

/// Four-column TSV; the label column is 1 (true) or 0/-1 (false).
std::vector<LabeledRawTriplet> read_labeled_triplets(const std::filesystem::path& path);

/// Lexicographic vocabulary over every name in the given lists.
std::shared_ptr<const Vocabulary> build_vocabulary(
    std::initializer_list<std::span<const RawTriplet>> lists,
    std::span<const std::string> extra_entities = {});

std::vector<Triplet> to_ids(std::span<const RawTriplet> raw, const Vocabulary& vocab);
RawTriplet to_names(const Triplet& t, const Vocabulary& vocab);

void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets,
                    const Vocabulary& vocab);

/// Read-only view of one entity's neighborhood.
struct Neighborhood {
  EntityId owner;
  std::vector<NeighborEntry> entries;

  std::vector<EntityId> entities() const;
  /// Distinct neighboring relations, ascending.
  std::vector<RelationId> relations() const;
};

/// Deduplicated triplet store with a CSR adjacency: adjacency(e) lists every
/// (r, e') with (e, r, e') stored, ordered by relation then entity.
class KnowledgeGraph {
 public:
  KnowledgeGraph(std::shared_ptr<const Vocabulary> vocab, std::span<const Triplet> triplets);

  const Vocabulary& vocabulary() const noexcept { return *vocab_; }
  const std::shared_ptr<const Vocabulary>& vocabulary_ptr() const noexcept { return vocab_; }

  std::span<const Triplet> triplets() const noexcept { return triplets_; }
  std::size_t size() const noexcept { return triplets_.size(); }
  std::size_t entity_count() const noexcept { return vocab_->entity_count(); }
  bool contains(const Triplet& t) const { return members_.contains(t); }
  bool augmented() const noexcept { return augmented_; }

  /// Adds (o, r^-1, s) for every stored (s, r, o). Fails if already augmented.
  KnowledgeGraph augment_inverses() const;

  std::span<const NeighborEntry> adjacency(EntityId e) const;
  Neighborhood neighborhood(EntityId e) const;
  bool has_neighbors(EntityId e) const { return !adjacency(e).empty(); }

 private:
  KnowledgeGraph(std::shared_ptr<const Vocabulary> vocab, std::vector<Triplet> triplets,
                 bool augmented);
  void index();

  std::shared_ptr<const Vocabulary> vocab_;
  std::vector<Triplet> triplets_;
  TripletSet members_;
  std::vector<std::uint32_t> offsets_;
  std::vector<NeighborEntry> entries_;
  bool augmented_ = false;
};

/// Reads a TSV file into a graph whose vocabulary covers exactly its names.
/// Duplicates are dropped; no inverses are added.
KnowledgeGraph load_triplets(const std::filesystem::path& path);

/// Fixed-size neighbor sample; mask[i] != 0 marks a real entry, the rest are
/// zero padding.
struct SampledNeighbors {
  std::vector<NeighborEntry> entries;
  std::vector<std::uint8_t> mask;

  std::size_t size() const noexcept { return entries.size(); }
  std::size_t valid_count() const noexcept;
};

/// Uniform sample of k entries without replacement (all entries when fewer),
/// returned in the neighborhood's canonical order and padded to k.
SampledNeighbors sample_neighbors(std::span<const NeighborEntry> neighborhood, std::size_t k,
                                  Rng& rng);

}  // namespace lankgc
