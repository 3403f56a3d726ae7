#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lankgc/dataset.hpp"

namespace lankgc {

/// Person/rule-domain graph. Each domain k has relations `rule<k>_premise`
/// and `rule<k>_conclusion`: a member person points by premise to a source
/// entity and, for a `rule_strength` share of members, by conclusion to the
/// target mapped from that source. `gender` and `likes` edges add noise.
struct SyntheticSpec {
  std::size_t entities = 1000;
  double rule_strength = 0.9;
  std::size_t domains = 4;
  std::size_t sources_per_domain = 10;
  std::size_t targets_per_domain = 5;
  std::size_t hobbies = 5;
  double membership = 0.35;
  /// Shares of the triplets sent to validation and test.
  double valid_share = 0.1;
  double test_share = 0.1;
  std::uint64_t seed = 0;
};

struct PlantedRule {
  std::string premise;
  std::string conclusion;
  /// Exact confidence realized in the generated graph.
  double confidence = 0.0;
};

struct SyntheticCorpus {
  std::vector<RawTriplet> train;
  std::vector<RawTriplet> valid;
  std::vector<RawTriplet> test;
  std::vector<PlantedRule> rules;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// train.tsv, valid.tsv, test.tsv and planted_rules.tsv.
void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace lankgc
