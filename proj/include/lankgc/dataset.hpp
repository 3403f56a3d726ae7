#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lankgc/kg.hpp"

namespace lankgc {

enum class SplitStrategy { Subject, Object };

std::string_view strategy_name(SplitStrategy s) noexcept;
SplitStrategy parse_strategy(std::string_view name);

struct SplitSpec {
  SplitStrategy strategy = SplitStrategy::Subject;
  /// Fraction R of the original test triplets sampled into the new test set.
  double sample_rate = 0.10;
  std::uint64_t seed = 0;
};

/// Raw train/valid/test facts sharing one vocabulary.
struct Corpus {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<Triplet> train;
  std::vector<Triplet> valid;
  std::vector<Triplet> test;
  /// FNV-1a digests of the source files, when read from disk.
  std::uint64_t train_checksum = 0;
  std::uint64_t valid_checksum = 0;
  std::uint64_t test_checksum = 0;
};

Corpus make_corpus(std::span<const RawTriplet> train, std::span<const RawTriplet> valid,
                   std::span<const RawTriplet> test);

/// Finds train/valid/test files in a directory: `train.tsv`, `train.txt` or
/// any `*train.txt` (FB15K ships `freebase_mtr100_mte100-train.txt`).
Corpus load_corpus(const std::filesystem::path& dir);

/// Unseen-entity evaluation split. Triplets are raw (no inverses); the
/// vocabulary covers exactly the names appearing in the bundle.
struct DatasetBundle {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<Triplet> train;
  std::vector<Triplet> auxiliary;
  std::vector<Triplet> validation;
  std::vector<Triplet> test;
  /// Sorted ascending.
  std::vector<EntityId> unseen;
  /// Entities appearing in train; the candidate set for ranking. Sorted.
  std::vector<EntityId> seen;
  SplitSpec spec;
  std::uint64_t corpus_checksum[3] = {0, 0, 0};

  bool is_unseen(EntityId e) const;
  bool is_seen(EntityId e) const;
};

DatasetBundle build_split(const Corpus& corpus, const SplitSpec& spec);

/// Raises Error(Data) naming the first violated bundle invariant.
void check_bundle_invariants(const DatasetBundle& bundle);

struct SplitStats {
  std::size_t relations = 0;
  std::size_t entities = 0;
  std::size_t unseen = 0;
  std::size_t min_neighbors = 0;
  std::size_t max_neighbors = 0;
  double avg_neighbors = 0.0;
  friend bool operator==(const SplitStats&, const SplitStats&) = default;
};

SplitStats emit_statistics(const DatasetBundle& bundle);

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle read_bundle(const std::filesystem::path& dir);

}  // namespace lankgc
