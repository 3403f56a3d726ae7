#include "lankgc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace lankgc {

namespace {

std::string name(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }

std::string name(const char* prefix, std::size_t k, std::size_t i) {
  return prefix + std::to_string(k) + "_" + std::to_string(i);
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (!(spec.rule_strength > 0.0 && spec.rule_strength <= 1.0)) {
    fail(ErrorKind::Config, "rule strength must be in (0, 1]");
  }
  if (spec.domains == 0 || spec.sources_per_domain == 0 || spec.targets_per_domain == 0 || spec.hobbies == 0) {
    fail(ErrorKind::Config, "synthetic domains, sources, targets and hobbies must be positive");
  }
  if (!(spec.valid_share >= 0.0 && spec.test_share > 0.0 && spec.valid_share + spec.test_share < 1.0)) {
    fail(ErrorKind::Config, "validation and test shares must leave room for training");
  }
  const std::size_t fixed = 2 + spec.hobbies + spec.domains * (spec.sources_per_domain + spec.targets_per_domain);
  if (spec.entities < fixed + 10) {
    fail(ErrorKind::Config, "need at least " + std::to_string(fixed + 10) + " entities");
  }
  const std::size_t persons = spec.entities - fixed;
  Rng rng(spec.seed);

  std::vector<RawTriplet> all;
  for (std::size_t p = 0; p < persons; ++p) {
    const auto person = name("person_", p);
    all.push_back({person, "gender", name("gender_", uniform_index(rng, 2))});
    const std::size_t likes = 1 + uniform_index(rng, 2);
    std::vector<std::size_t> hobby(spec.hobbies);
    for (std::size_t h = 0; h < hobby.size(); ++h) hobby[h] = h;
    shuffle(std::span<std::size_t>(hobby), rng);
    for (std::size_t h = 0; h < std::min(likes, hobby.size()); ++h) {
      all.push_back({person, "likes", name("hobby_", hobby[h])});
    }
  }

  SyntheticCorpus out;
  for (std::size_t k = 0; k < spec.domains; ++k) {
    const auto premise = "rule" + std::to_string(k) + "_premise";
    const auto conclusion = "rule" + std::to_string(k) + "_conclusion";
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < persons; ++p) {
      if (bernoulli(rng, spec.membership)) members.push_back(p);
    }
    if (members.empty()) members.push_back(uniform_index(rng, persons));
    // An exact share of the members carries the conclusion, so the mined
    // confidence lands within 1/(2 * members) of the strength.
    const auto concluded =
        static_cast<std::size_t>(std::llround(spec.rule_strength * static_cast<double>(members.size())));
    std::vector<std::size_t> order(members.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<std::uint8_t> has_conclusion(members.size(), 0);
    for (std::size_t i = 0; i < concluded; ++i) has_conclusion[order[i]] = 1;

    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto person = name("person_", members[i]);
      const std::size_t source = uniform_index(rng, spec.sources_per_domain);
      all.push_back({person, premise, name("source_", k, source)});
      if (has_conclusion[i]) {
        all.push_back({person, conclusion, name("target_", k, source % spec.targets_per_domain)});
      }
    }
    out.rules.push_back({premise, conclusion,
                         static_cast<double>(concluded) / static_cast<double>(members.size())});
  }

  shuffle(std::span<RawTriplet>(all), rng);
  const auto n = all.size();
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_share * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_share * static_cast<double>(n)));
  out.test.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.valid.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test),
                   all.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
  out.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), all.end());
  for (auto* part : {&out.train, &out.valid, &out.test}) std::sort(part->begin(), part->end());
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* file, const std::vector<RawTriplet>& triplets) {
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / file).string());
    for (const auto& t : triplets) out << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
  };
  write("train.tsv", corpus.train);
  write("valid.tsv", corpus.valid);
  write("test.tsv", corpus.test);
  std::ofstream rules(dir / "planted_rules.tsv", std::ios::binary);
  if (!rules) fail(ErrorKind::Io, "cannot write planted rules");
  for (const auto& r : corpus.rules) {
    rules << r.premise << '\t' << r.conclusion << '\t' << format_double(r.confidence) << '\n';
  }
}

}  // namespace lankgc
