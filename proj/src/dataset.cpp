#include "lankgc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace lankgc {

namespace fs = std::filesystem;

std::string_view strategy_name(SplitStrategy s) noexcept {
  return s == SplitStrategy::Subject ? "subject" : "object";
}

SplitStrategy parse_strategy(std::string_view name) {
  if (name == "subject") return SplitStrategy::Subject;
  if (name == "object") return SplitStrategy::Object;
  fail(ErrorKind::Config, "strategy must be subject or object, got '" + std::string(name) + "'");
}

bool DatasetBundle::is_unseen(EntityId e) const {
  return std::binary_search(unseen.begin(), unseen.end(), e);
}

bool DatasetBundle::is_seen(EntityId e) const {
  return std::binary_search(seen.begin(), seen.end(), e);
}

Corpus make_corpus(std::span<const RawTriplet> train, std::span<const RawTriplet> valid,
                   std::span<const RawTriplet> test) {
  Corpus corpus;
  corpus.vocab = build_vocabulary({train, valid, test});
  corpus.train = to_ids(train, *corpus.vocab);
  corpus.valid = to_ids(valid, *corpus.vocab);
  corpus.test = to_ids(test, *corpus.vocab);
  return corpus;
}

namespace {

fs::path find_split_file(const fs::path& dir, const std::string& split) {
  for (const auto* ext : {".tsv", ".txt"}) {
    const auto candidate = dir / (split + ext);
    if (fs::exists(candidate)) return candidate;
  }
  std::vector<fs::path> matches;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.ends_with(split + ".txt") || name.ends_with(split + ".tsv")) matches.push_back(entry.path());
    }
  }
  if (matches.size() == 1) return matches.front();
  if (matches.empty()) fail(ErrorKind::Io, "no " + split + " file in " + dir.string());
  fail(ErrorKind::Io, "several " + split + " files in " + dir.string());
}

std::vector<Triplet> dedup(std::vector<Triplet> triplets) {
  TripletSet seen;
  std::vector<Triplet> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  const auto train_path = find_split_file(dir, "train");
  const auto valid_path = find_split_file(dir, "valid");
  const auto test_path = find_split_file(dir, "test");
  const auto train = read_raw_triplets(train_path);
  const auto valid = read_raw_triplets(valid_path);
  const auto test = read_raw_triplets(test_path);
  if (train.empty()) fail(ErrorKind::EmptyGraph, train_path.string() + " contains no triplets");
  Corpus corpus = make_corpus(train, valid, test);
  corpus.train_checksum = file_checksum(train_path);
  corpus.valid_checksum = file_checksum(valid_path);
  corpus.test_checksum = file_checksum(test_path);
  return corpus;
}

DatasetBundle build_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.sample_rate > 0.0 && spec.sample_rate <= 1.0)) {
    fail(ErrorKind::Config, "sample rate must lie in (0, 1]");
  }
  const auto original_train = dedup(corpus.train);
  const auto original_valid = dedup(corpus.valid);
  const auto original_test = dedup(corpus.test);
  if (original_test.empty()) fail(ErrorKind::Data, "original test set is empty");
  const auto n = corpus.vocab->entity_count();
  const bool by_subject = spec.strategy == SplitStrategy::Subject;

  // Step 1: sample R of the test triplets. The permutation depends only on
  // the seed, so samples at a larger rate extend those at a smaller one.
  std::vector<std::uint32_t> order(original_test.size());
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(spec.seed);
  shuffle(std::span<std::uint32_t>(order), rng);
  const auto wanted = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.sample_rate * static_cast<double>(order.size()))), 1,
      order.size());
  order.resize(wanted);
  std::sort(order.begin(), order.end());

  std::vector<std::uint8_t> candidate(n, 0);
  for (auto i : order) {
    const auto& t = original_test[i];
    candidate[(by_subject ? t.subject : t.object).index] = 1;
  }

  // Keep candidates that reach the rest of the training graph.
  std::vector<std::uint8_t> unseen(n, 0);
  for (const auto& t : original_train) {
    const bool cs = candidate[t.subject.index] != 0;
    const bool co = candidate[t.object.index] != 0;
    if (cs && !co) unseen[t.subject.index] = 1;
    if (co && !cs) unseen[t.object.index] = 1;
  }

  // Step 2: partition the original training facts.
  std::vector<Triplet> train;
  std::vector<Triplet> auxiliary;
  for (const auto& t : original_train) {
    const bool us = unseen[t.subject.index] != 0;
    const bool uo = unseen[t.object.index] != 0;
    if (us != uo) {
      auxiliary.push_back(t);
    } else if (!candidate[t.subject.index] && !candidate[t.object.index]) {
      train.push_back(t);
    }
  }
  std::vector<std::uint8_t> in_train(n, 0);
  for (const auto& t : train) in_train[t.subject.index] = in_train[t.object.index] = 1;

  std::vector<Triplet> test;
  for (auto i : order) {
    const auto& t = original_test[i];
    const auto unseen_end = by_subject ? t.subject : t.object;
    const auto seen_end = by_subject ? t.object : t.subject;
    if (unseen[unseen_end.index] && in_train[seen_end.index]) test.push_back(t);
  }
  std::vector<Triplet> validation;
  for (const auto& t : original_valid) {
    if (in_train[t.subject.index] && in_train[t.object.index]) validation.push_back(t);
  }

  std::vector<std::string> unseen_names;
  for (std::uint32_t e = 0; e < n; ++e) {
    if (unseen[e]) unseen_names.push_back(corpus.vocab->entity_name(EntityId{e}));
  }
  if (unseen_names.empty()) fail(ErrorKind::Data, "no unseen entities survived filtering");
  if (test.empty()) fail(ErrorKind::Data, "no test triplets survived filtering");

  // Re-index into a vocabulary covering only what the bundle mentions.
  std::vector<RawTriplet> raw[4];
  const std::vector<Triplet>* lists[4] = {&train, &auxiliary, &validation, &test};
  for (int k = 0; k < 4; ++k) {
    for (const auto& t : *lists[k]) raw[k].push_back(to_names(t, *corpus.vocab));
  }
  DatasetBundle bundle;
  bundle.vocab = build_vocabulary({raw[0], raw[1], raw[2], raw[3]}, unseen_names);
  bundle.train = to_ids(raw[0], *bundle.vocab);
  bundle.auxiliary = to_ids(raw[1], *bundle.vocab);
  bundle.validation = to_ids(raw[2], *bundle.vocab);
  bundle.test = to_ids(raw[3], *bundle.vocab);
  for (const auto& name : unseen_names) bundle.unseen.push_back(bundle.vocab->entity(name));
  std::sort(bundle.unseen.begin(), bundle.unseen.end());
  std::set<EntityId> seen;
  for (const auto& t : bundle.train) {
    seen.insert(t.subject);
    seen.insert(t.object);
  }
  bundle.seen.assign(seen.begin(), seen.end());
  bundle.spec = spec;
  bundle.corpus_checksum[0] = corpus.train_checksum;
  bundle.corpus_checksum[1] = corpus.valid_checksum;
  bundle.corpus_checksum[2] = corpus.test_checksum;
  return bundle;
}

void check_bundle_invariants(const DatasetBundle& bundle) {
  const auto bad = [](const std::string& what) { fail(ErrorKind::Data, "bundle invariant violated: " + what); };
  for (const auto& t : bundle.train) {
    if (bundle.is_unseen(t.subject) || bundle.is_unseen(t.object)) bad("unseen entity in train");
  }
  for (const auto& t : bundle.validation) {
    if (bundle.is_unseen(t.subject) || bundle.is_unseen(t.object)) bad("unseen entity in validation");
  }
  std::vector<std::uint8_t> covered(bundle.vocab->entity_count(), 0);
  for (const auto& t : bundle.auxiliary) {
    const bool us = bundle.is_unseen(t.subject);
    const bool uo = bundle.is_unseen(t.object);
    if (us == uo) bad("auxiliary triplet without exactly one unseen endpoint");
    covered[(us ? t.subject : t.object).index] = 1;
  }
  const bool by_subject = bundle.spec.strategy == SplitStrategy::Subject;
  for (const auto& t : bundle.test) {
    const auto u = by_subject ? t.subject : t.object;
    const auto s = by_subject ? t.object : t.subject;
    if (!bundle.is_unseen(u) || bundle.is_unseen(s)) bad("test triplet unseen endpoint on the wrong side");
    if (!bundle.is_seen(s)) bad("test triplet seen endpoint missing from train");
  }
  for (auto u : bundle.unseen) {
    if (!covered[u.index]) bad("unseen entity without auxiliary triplets");
  }
}

SplitStats emit_statistics(const DatasetBundle& bundle) {
  SplitStats stats;
  std::set<RelationId> relations;
  for (const auto& t : bundle.train) relations.insert(t.relation);
  stats.relations = relations.size();
  stats.entities = bundle.seen.size();
  stats.unseen = bundle.unseen.size();

  std::map<EntityId, std::set<EntityId>> neighbors;
  for (auto u : bundle.unseen) neighbors[u];
  for (const auto& t : bundle.auxiliary) {
    if (bundle.is_unseen(t.subject)) neighbors[t.subject].insert(t.object);
    if (bundle.is_unseen(t.object)) neighbors[t.object].insert(t.subject);
  }
  if (neighbors.empty()) return stats;
  stats.min_neighbors = SIZE_MAX;
  std::size_t total = 0;
  for (const auto& [u, set] : neighbors) {
    stats.min_neighbors = std::min(stats.min_neighbors, set.size());
    stats.max_neighbors = std::max(stats.max_neighbors, set.size());
    total += set.size();
  }
  stats.avg_neighbors = static_cast<double>(total) / static_cast<double>(neighbors.size());
  return stats;
}

// --- persistence ------------------------------------------------------------

namespace {

constexpr const char* kBundleFiles[] = {"train.tsv", "aux.tsv", "valid.tsv", "test.tsv", "unseen.txt"};

}  // namespace

void write_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  write_triplets(dir / "train.tsv", bundle.train, *bundle.vocab);
  write_triplets(dir / "aux.tsv", bundle.auxiliary, *bundle.vocab);
  write_triplets(dir / "valid.tsv", bundle.validation, *bundle.vocab);
  write_triplets(dir / "test.tsv", bundle.test, *bundle.vocab);
  {
    std::ofstream out(dir / "unseen.txt", std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "unseen.txt").string());
    for (auto u : bundle.unseen) out << bundle.vocab->entity_name(u) << '\n';
  }
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) fail(ErrorKind::Io, "cannot write manifest in " + dir.string());
  manifest << "format = lankgc-bundle-1\n"
           << "strategy = " << strategy_name(bundle.spec.strategy) << '\n'
           << "sample_rate = " << format_double(bundle.spec.sample_rate) << '\n'
           << "seed = " << bundle.spec.seed << '\n'
           << "corpus_train_checksum = " << hex64(bundle.corpus_checksum[0]) << '\n'
           << "corpus_valid_checksum = " << hex64(bundle.corpus_checksum[1]) << '\n'
           << "corpus_test_checksum = " << hex64(bundle.corpus_checksum[2]) << '\n';
  for (const auto* name : kBundleFiles) {
    manifest << "checksum." << name << " = " << hex64(file_checksum(dir / name)) << '\n';
  }
}

DatasetBundle read_bundle(const fs::path& dir) {
  const auto manifest = read_key_values(dir / "manifest.txt");
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = manifest.find(key);
    if (it == manifest.end()) fail(ErrorKind::Data, "bundle manifest lacks '" + key + "'");
    return it->second;
  };
  if (get("format") != "lankgc-bundle-1") fail(ErrorKind::Data, "unsupported bundle format");
  for (const auto* name : kBundleFiles) {
    const auto path = dir / name;
    if (!fs::exists(path)) fail(ErrorKind::Io, "bundle file missing: " + path.string());
    if (hex64(file_checksum(path)) != get(std::string("checksum.") + name)) {
      fail(ErrorKind::Checksum, "checksum mismatch for " + path.string());
    }
  }
  const auto train = read_raw_triplets(dir / "train.tsv");
  const auto aux = read_raw_triplets(dir / "aux.tsv");
  const auto valid = read_raw_triplets(dir / "valid.tsv");
  const auto test = read_raw_triplets(dir / "test.tsv");
  std::vector<std::string> unseen_names;
  {
    std::ifstream in(dir / "unseen.txt");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) unseen_names.push_back(line);
    }
  }
  DatasetBundle bundle;
  bundle.vocab = build_vocabulary({train, aux, valid, test}, unseen_names);
  bundle.train = to_ids(train, *bundle.vocab);
  bundle.auxiliary = to_ids(aux, *bundle.vocab);
  bundle.validation = to_ids(valid, *bundle.vocab);
  bundle.test = to_ids(test, *bundle.vocab);
  for (const auto& name : unseen_names) bundle.unseen.push_back(bundle.vocab->entity(name));
  std::sort(bundle.unseen.begin(), bundle.unseen.end());
  std::set<EntityId> seen;
  for (const auto& t : bundle.train) {
    seen.insert(t.subject);
    seen.insert(t.object);
  }
  bundle.seen.assign(seen.begin(), seen.end());
  bundle.spec.strategy = parse_strategy(get("strategy"));
  bundle.spec.sample_rate = std::stod(get("sample_rate"));
  bundle.spec.seed = std::stoull(get("seed"));
  const char* keys[] = {"corpus_train_checksum", "corpus_valid_checksum", "corpus_test_checksum"};
  for (int k = 0; k < 3; ++k) bundle.corpus_checksum[k] = std::stoull(get(keys[k]), nullptr, 16);
  return bundle;
}

}  // namespace lankgc
