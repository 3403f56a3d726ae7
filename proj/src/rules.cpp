#include "lankgc/rules.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace lankgc {

double ConfidenceTable::confidence(RelationId premise, RelationId conclusion) const {
  const auto it = pairs_.find(key(premise, conclusion));
  return it == pairs_.end() ? 0.0 : it->second;
}

void ConfidenceTable::set(RelationId premise, RelationId conclusion, double value) {
  if (premise.index >= relation_count_ || conclusion.index >= relation_count_) {
    fail(ErrorKind::Lookup, "relation outside the confidence table");
  }
  if (!(value >= 0.0 && value <= 1.0)) fail(ErrorKind::Data, "confidence outside [0, 1]");
  if (value == 0.0) {
    pairs_.erase(key(premise, conclusion));
  } else {
    pairs_[key(premise, conclusion)] = value;
  }
}

std::vector<ConfidenceTable::Entry> ConfidenceTable::entries() const {
  std::vector<Entry> out;
  out.reserve(pairs_.size());
  for (const auto& [k, v] : pairs_) {
    out.push_back({RelationId{static_cast<std::uint32_t>(k / relation_count_)},
                   RelationId{static_cast<std::uint32_t>(k % relation_count_)}, v});
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.premise, a.conclusion) < std::tie(b.premise, b.conclusion);
  });
  return out;
}

namespace {

using PairCounts = std::unordered_map<std::uint64_t, std::uint64_t>;

// Distinct relations of a sorted adjacency list.
void relation_set(std::span<const NeighborEntry> adjacency, std::vector<std::uint32_t>& out) {
  out.clear();
  for (const auto& e : adjacency) {
    if (out.empty() || out.back() != e.relation.index) out.push_back(e.relation.index);
  }
}

void count_entity(std::span<const std::uint32_t> relations, std::size_t relation_count,
                  std::vector<std::uint64_t>& support, PairCounts& pairs) {
  for (auto a : relations) {
    ++support[a];
    for (auto b : relations) ++pairs[static_cast<std::uint64_t>(a) * relation_count + b];
  }
}

ConfidenceTable finish(std::size_t relation_count, const std::vector<std::uint64_t>& support,
                       const PairCounts& pairs) {
  ConfidenceTable table(relation_count);
  for (std::uint32_t r = 0; r < relation_count; ++r) table.set_support(RelationId{r}, support[r]);
  for (const auto& [k, count] : pairs) {
    const auto premise = static_cast<std::uint32_t>(k / relation_count);
    const auto conclusion = static_cast<std::uint32_t>(k % relation_count);
    table.set(RelationId{premise}, RelationId{conclusion},
              static_cast<double>(count) / static_cast<double>(support[premise]));
  }
  return table;
}

void require_augmented(const KnowledgeGraph& kg) {
  if (!kg.augmented()) fail(ErrorKind::State, "rule mining needs an inverse-augmented graph");
}

}  // namespace

ConfidenceTable mine_confidence_serial(const KnowledgeGraph& kg) {
  require_augmented(kg);
  const auto relation_count = kg.vocabulary().relation_count();
  std::vector<std::uint64_t> support(relation_count, 0);
  PairCounts pairs;
  std::vector<std::uint32_t> relations;
  for (std::uint32_t e = 0; e < kg.entity_count(); ++e) {
    relation_set(kg.adjacency(EntityId{e}), relations);
    count_entity(relations, relation_count, support, pairs);
  }
  return finish(relation_count, support, pairs);
}

ConfidenceTable mine_confidence(const KnowledgeGraph& kg) {
  require_augmented(kg);
  const auto relation_count = kg.vocabulary().relation_count();
  const auto n = static_cast<std::int64_t>(kg.entity_count());
  const int workers = worker_count();
  std::vector<std::vector<std::uint64_t>> support(workers, std::vector<std::uint64_t>(relation_count, 0));
  std::vector<PairCounts> pairs(workers);

#pragma omp parallel num_threads(workers)
  {
    const int w = omp_get_thread_num();
    std::vector<std::uint32_t> relations;
#pragma omp for schedule(static)
    for (std::int64_t e = 0; e < n; ++e) {
      relation_set(kg.adjacency(EntityId{static_cast<std::uint32_t>(e)}), relations);
      count_entity(relations, relation_count, support[w], pairs[w]);
    }
  }

  // Integer counts: the merge order cannot change the result.
  for (int w = 1; w < workers; ++w) {
    for (std::size_t r = 0; r < relation_count; ++r) support[0][r] += support[w][r];
    for (const auto& [k, c] : pairs[w]) pairs[0][k] += c;
  }
  return finish(relation_count, support[0], pairs[0]);
}

std::string_view logic_mode_name(LogicMode mode) noexcept {
  return mode == LogicMode::Raw ? "raw" : "normalized";
}

LogicMode parse_logic_mode(std::string_view name) {
  if (name == "raw") return LogicMode::Raw;
  if (name == "normalized") return LogicMode::Normalized;
  fail(ErrorKind::Config, "logic mode must be raw or normalized, got '" + std::string(name) + "'");
}

LogicWeightVector logic_attention(const ConfidenceTable& table,
                                  std::span<const NeighborEntry> neighbors,
                                  std::span<const std::uint8_t> mask,
                                  std::span<const RelationId> context, RelationId query,
                                  LogicMode mode, double epsilon) {
  if (query.index >= table.relation_count()) {
    fail(ErrorKind::Lookup, "query relation " + std::to_string(query.index) + " unknown to the rule table");
  }
  if (mask.size() != neighbors.size()) fail(ErrorKind::Shape, "mask and neighbor list differ in length");

  LogicWeightVector out;
  out.mode = mode;
  out.weights.assign(neighbors.size(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    if (!mask[j]) continue;
    const auto r = neighbors[j].relation;
    bool any_other = false;
    double implied_by = 0.0;
    for (auto other : context) {
      if (other == r) continue;
      any_other = true;
      implied_by = std::max(implied_by, table.confidence(other, r));
    }
    const double denominator = any_other ? std::max(implied_by, epsilon) : 1.0;
    out.weights[j] = table.confidence(r, query) / denominator;
    total += out.weights[j];
  }
  if (mode == LogicMode::Normalized) {
    for (auto& w : out.weights) w = total > 0.0 ? w / total : 0.0;
  }
  return out;
}

LogicWeightVector logic_attention(const ConfidenceTable& table,
                                  std::span<const NeighborEntry> neighbors,
                                  std::span<const std::uint8_t> mask, RelationId query,
                                  LogicMode mode, double epsilon) {
  std::vector<RelationId> context;
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    if (j < mask.size() && mask[j]) context.push_back(neighbors[j].relation);
  }
  std::sort(context.begin(), context.end());
  context.erase(std::unique(context.begin(), context.end()), context.end());
  return logic_attention(table, neighbors, mask, context, query, mode, epsilon);
}

void export_table(const ConfidenceTable& table, const Vocabulary& vocab,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  char number[64];
  for (const auto& e : table.entries()) {
    std::snprintf(number, sizeof number, "%.17g", e.confidence);
    out << vocab.relation_name(e.premise) << '\t' << vocab.relation_name(e.conclusion) << '\t'
        << number << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

ConfidenceTable import_table(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  ConfidenceTable table(vocab.relation_count());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(number) + ": expected 3 tab-separated fields");
    }
    double value = 0.0;
    try {
      value = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(number) + ": bad confidence");
    }
    table.set(vocab.relation(line.substr(0, a)), vocab.relation(line.substr(a + 1, b - a - 1)), value);
  }
  return table;
}

}  // namespace lankgc
