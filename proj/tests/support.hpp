#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lankgc/kg.hpp"
#include "lankgc/rules.hpp"

namespace testing {

using namespace lankgc;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lankgc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Random raw graph over `entities` entities and `relations` relations.
inline std::vector<RawTriplet> random_raw(Rng& rng, std::size_t entities, std::size_t relations,
                                          std::size_t triplets) {
  std::vector<RawTriplet> out;
  for (std::size_t i = 0; i < triplets; ++i) {
    out.push_back({"e" + std::to_string(uniform_index(rng, entities)), "r" + std::to_string(uniform_index(rng, relations)),
                   "e" + std::to_string(uniform_index(rng, entities))});
  }
  return out;
}

/// Graph holding every entity e0..e{n-1} and relation r0..r{m-1}.
inline KnowledgeGraph random_graph(Rng& rng, std::size_t entities, std::size_t relations, std::size_t triplets) {
  std::vector<std::string> names, rels;
  for (std::size_t i = 0; i < entities; ++i) names.push_back("e" + std::to_string(i));
  for (std::size_t i = 0; i < relations; ++i) rels.push_back("r" + std::to_string(i));
  auto vocab = std::make_shared<const Vocabulary>(names, rels);
  const auto raw = random_raw(rng, entities, relations, triplets);
  return KnowledgeGraph(vocab, to_ids(raw, *vocab));
}

/// Plain confidence recount: for every pair (r1, r2), entities whose
/// neighboring relations include both over those including r1.
inline std::map<std::pair<std::uint32_t, std::uint32_t>, double> naive_confidence(const KnowledgeGraph& kg) {
  const auto m2 = kg.vocabulary().relation_count();
  std::vector<std::set<std::uint32_t>> has(kg.entity_count());
  for (const auto& t : kg.triplets()) has[t.subject.index].insert(t.relation.index);
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> out;
  for (std::uint32_t r1 = 0; r1 < m2; ++r1) {
    for (std::uint32_t r2 = 0; r2 < m2; ++r2) {
      double with_r1 = 0, with_both = 0;
      for (const auto& set : has) {
        if (set.count(r1)) {
          ++with_r1;
          if (set.count(r2)) ++with_both;
        }
      }
      if (with_both > 0) out[{r1, r2}] = with_both / with_r1;
    }
  }
  return out;
}

}  // namespace testing

#include "lankgc/dataset.hpp"

namespace testing {

/// Bundle whose training set is the whole graph; nothing is held out.
inline DatasetBundle train_only_bundle(const std::vector<RawTriplet>& raw) {
  DatasetBundle b;
  b.vocab = build_vocabulary({raw});
  b.train = to_ids(raw, *b.vocab);
  std::sort(b.train.begin(), b.train.end());
  b.train.erase(std::unique(b.train.begin(), b.train.end()), b.train.end());
  std::set<EntityId> seen;
  for (const auto& t : b.train) {
    seen.insert(t.subject);
    seen.insert(t.object);
  }
  b.seen.assign(seen.begin(), seen.end());
  return b;
}

}  // namespace testing
