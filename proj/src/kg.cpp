#include "lankgc/kg.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace lankgc {

namespace {

void check_name(std::string_view name, std::string_view what) {
  if (name.empty()) fail(ErrorKind::Parse, std::string("empty ") + std::string(what) + " name");
  if (name.find(kInverseSuffix) != std::string_view::npos) {
    fail(ErrorKind::Parse, std::string(what) + " name '" + std::string(name) +
                               "' contains the reserved suffix " + std::string(kInverseSuffix));
  }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

template <typename OnFields>
void for_each_line(const std::filesystem::path& path, OnFields&& on_fields) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    on_fields(split_tabs(line), number);
  }
}

}  // namespace

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> entity_names,
                       std::vector<std::string> relation_names)
    : entities_(std::move(entity_names)), relations_(std::move(relation_names)) {
  std::sort(entities_.begin(), entities_.end());
  entities_.erase(std::unique(entities_.begin(), entities_.end()), entities_.end());
  std::sort(relations_.begin(), relations_.end());
  relations_.erase(std::unique(relations_.begin(), relations_.end()), relations_.end());
  entity_index_.reserve(entities_.size());
  for (std::uint32_t i = 0; i < entities_.size(); ++i) {
    check_name(entities_[i], "entity");
    entity_index_.emplace(entities_[i], i);
  }
  for (std::uint32_t i = 0; i < relations_.size(); ++i) {
    check_name(relations_[i], "relation");
    relation_index_.emplace(relations_[i], i);
  }
}

std::optional<EntityId> Vocabulary::find_entity(std::string_view name) const {
  const auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return EntityId{it->second};
}

EntityId Vocabulary::entity(std::string_view name) const {
  if (auto id = find_entity(name)) return *id;
  fail(ErrorKind::Lookup, "unknown entity '" + std::string(name) + "'");
}

const std::string& Vocabulary::entity_name(EntityId id) const {
  if (id.index >= entities_.size()) {
    fail(ErrorKind::Lookup, "entity id " + std::to_string(id.index) + " out of range");
  }
  return entities_[id.index];
}

std::optional<RelationId> Vocabulary::find_relation(std::string_view name) const {
  bool inverse = false;
  if (name.size() > kInverseSuffix.size() && name.ends_with(kInverseSuffix)) {
    inverse = true;
    name.remove_suffix(kInverseSuffix.size());
  }
  const auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  const auto m = static_cast<std::uint32_t>(relations_.size());
  return RelationId{inverse ? it->second + m : it->second};
}

RelationId Vocabulary::relation(std::string_view name) const {
  if (auto id = find_relation(name)) return *id;
  fail(ErrorKind::Lookup, "unknown relation '" + std::string(name) + "'");
}

std::string Vocabulary::relation_name(RelationId id) const {
  if (id.index >= relation_count()) {
    fail(ErrorKind::Lookup, "relation id " + std::to_string(id.index) + " out of range");
  }
  if (is_inverse(id)) return relations_[id.index - relations_.size()] + std::string(kInverseSuffix);
  return relations_[id.index];
}

RelationId Vocabulary::inverse(RelationId r) const noexcept {
  const auto m = static_cast<std::uint32_t>(relations_.size());
  return RelationId{r.index >= m ? r.index - m : r.index + m};
}

RelationId Vocabulary::base(RelationId r) const noexcept {
  return is_inverse(r) ? inverse(r) : r;
}

std::uint64_t Vocabulary::checksum() const noexcept {
  std::uint64_t h = fnv1a("lankgc-vocab");
  for (const auto& name : entities_) h = fnv1a(name, fnv1a("\n", h));
  h = fnv1a("\x1e", h);
  for (const auto& name : relations_) h = fnv1a(name, fnv1a("\n", h));
  return h;
}

// --- file io ----------------------------------------------------------------

std::vector<RawTriplet> read_raw_triplets(const std::filesystem::path& path) {
  std::vector<RawTriplet> out;
  for_each_line(path, [&](const std::vector<std::string_view>& fields, std::size_t line) {
    if (fields.size() != 3) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line) + ": expected 3 tab-separated fields, got " +
                                 std::to_string(fields.size()));
    }
    out.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
  });
  return out;
}

std::vector<LabeledRawTriplet> read_labeled_triplets(const std::filesystem::path& path) {
  std::vector<LabeledRawTriplet> out;
  for_each_line(path, [&](const std::vector<std::string_view>& fields, std::size_t line) {
    const auto where = path.string() + ":" + std::to_string(line) + ": ";
    if (fields.size() != 4) {
      fail(ErrorKind::Parse, where + "expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    bool label = false;
    if (fields[3] == "1") {
      label = true;
    } else if (fields[3] != "0" && fields[3] != "-1") {
      fail(ErrorKind::Parse, where + "label must be 1, 0 or -1");
    }
    out.push_back({{std::string(fields[0]), std::string(fields[1]), std::string(fields[2])}, label});
  });
  return out;
}

std::shared_ptr<const Vocabulary> build_vocabulary(
    std::initializer_list<std::span<const RawTriplet>> lists,
    std::span<const std::string> extra_entities) {
  std::vector<std::string> entities(extra_entities.begin(), extra_entities.end());
  std::vector<std::string> relations;
  for (const auto& list : lists) {
    for (const auto& t : list) {
      entities.push_back(t.subject);
      entities.push_back(t.object);
      relations.push_back(t.relation);
    }
  }
  return std::make_shared<const Vocabulary>(std::move(entities), std::move(relations));
}

std::vector<Triplet> to_ids(std::span<const RawTriplet> raw, const Vocabulary& vocab) {
  std::vector<Triplet> out;
  out.reserve(raw.size());
  for (const auto& t : raw) {
    out.push_back({vocab.entity(t.subject), vocab.relation(t.relation), vocab.entity(t.object)});
  }
  return out;
}

RawTriplet to_names(const Triplet& t, const Vocabulary& vocab) {
  return {vocab.entity_name(t.subject), vocab.relation_name(t.relation), vocab.entity_name(t.object)};
}

void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets,
                    const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& t : triplets) {
    out << vocab.entity_name(t.subject) << '\t' << vocab.relation_name(t.relation) << '\t'
        << vocab.entity_name(t.object) << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

// --- Neighborhood -----------------------------------------------------------

std::vector<EntityId> Neighborhood::entities() const {
  std::vector<EntityId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.entity);
  return out;
}

std::vector<RelationId> Neighborhood::relations() const {
  std::vector<RelationId> out;
  for (const auto& e : entries) {
    if (out.empty() || out.back() != e.relation) out.push_back(e.relation);
  }
  return out;
}

// --- KnowledgeGraph ---------------------------------------------------------

KnowledgeGraph::KnowledgeGraph(std::shared_ptr<const Vocabulary> vocab,
                               std::span<const Triplet> triplets)
    : KnowledgeGraph(std::move(vocab), std::vector<Triplet>(triplets.begin(), triplets.end()),
                     false) {}

KnowledgeGraph::KnowledgeGraph(std::shared_ptr<const Vocabulary> vocab,
                               std::vector<Triplet> triplets, bool augmented)
    : vocab_(std::move(vocab)), augmented_(augmented) {
  if (!vocab_) fail(ErrorKind::State, "knowledge graph needs a vocabulary");
  const auto n = vocab_->entity_count();
  const auto relations = augmented ? vocab_->relation_count() : vocab_->base_relation_count();
  triplets_.reserve(triplets.size());
  members_.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.subject.index >= n || t.object.index >= n || t.relation.index >= relations) {
      fail(ErrorKind::Lookup, "triplet index outside the vocabulary");
    }
    if (members_.insert(t).second) triplets_.push_back(t);
  }
  index();
}

void KnowledgeGraph::index() {
  const auto n = vocab_->entity_count();
  offsets_.assign(n + 1, 0);
  for (const auto& t : triplets_) ++offsets_[t.subject.index + 1];
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  entries_.resize(triplets_.size());
  std::vector<std::uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& t : triplets_) entries_[cursor[t.subject.index]++] = {t.relation, t.object};
  for (std::size_t e = 0; e < n; ++e) {
    std::sort(entries_.begin() + offsets_[e], entries_.begin() + offsets_[e + 1]);
  }
}

KnowledgeGraph KnowledgeGraph::augment_inverses() const {
  if (augmented_) fail(ErrorKind::State, "graph already augmented with inverse relations");
  std::vector<Triplet> out(triplets_.begin(), triplets_.end());
  out.reserve(2 * triplets_.size());
  for (const auto& t : triplets_) out.push_back({t.object, vocab_->inverse(t.relation), t.subject});
  return KnowledgeGraph(vocab_, std::move(out), true);
}

std::span<const NeighborEntry> KnowledgeGraph::adjacency(EntityId e) const {
  if (e.index >= vocab_->entity_count()) {
    fail(ErrorKind::Lookup, "entity id " + std::to_string(e.index) + " out of range");
  }
  return {entries_.data() + offsets_[e.index], entries_.data() + offsets_[e.index + 1]};
}

Neighborhood KnowledgeGraph::neighborhood(EntityId e) const {
  const auto adj = adjacency(e);
  return {e, std::vector<NeighborEntry>(adj.begin(), adj.end())};
}

KnowledgeGraph load_triplets(const std::filesystem::path& path) {
  const auto raw = read_raw_triplets(path);
  if (raw.empty()) fail(ErrorKind::EmptyGraph, path.string() + " contains no triplets");
  auto vocab = build_vocabulary({raw});
  const auto ids = to_ids(raw, *vocab);
  return KnowledgeGraph(std::move(vocab), ids);
}

// --- sampling ---------------------------------------------------------------

std::size_t SampledNeighbors::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

SampledNeighbors sample_neighbors(std::span<const NeighborEntry> neighborhood, std::size_t k,
                                  Rng& rng) {
  if (k == 0) fail(ErrorKind::State, "neighbor budget must be at least 1");
  SampledNeighbors out;
  out.entries.resize(k);
  out.mask.assign(k, 0);
  const auto n = neighborhood.size();
  if (n <= k) {
    for (std::size_t i = 0; i < n; ++i) {
      out.entries[i] = neighborhood[i];
      out.mask[i] = 1;
    }
    return out;
  }
  // Partial Fisher-Yates, then restore canonical order.
  std::vector<std::uint32_t> picks(n);
  std::iota(picks.begin(), picks.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(picks[i], picks[i + uniform_index(rng, n - i)]);
  }
  std::sort(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) {
    out.entries[i] = neighborhood[picks[i]];
    out.mask[i] = 1;
  }
  return out;
}

}  // namespace lankgc
