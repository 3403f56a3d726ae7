#include <fstream>

#include "doctest.h"
#include "lankgc/checkpoint.hpp"
#include "lankgc/config.hpp"
#include "lankgc/synthetic.hpp"
#include "support.hpp"

using namespace lankgc;

TEST_CASE("settings round-trip and reject unknown keys") {
  RunConfig c;
  c.train.dim = 32;
  c.train.optimizer = OptimizerKind::Sgd;
  c.aggregator.kind = AggregatorKind::LogicOnly;
  c.scorer = ScorerKind::ComplEx;
  c.train.learning_rate = 0.1;
  const auto kv = to_settings(c);
  CHECK(kv.size() == config_keys().size());
  RunConfig back;
  apply_settings(back, kv);
  CHECK(to_settings(back) == kv);

  RunConfig x;
  try {
    apply_settings(x, {{"learnig_rate", "0.1"}});
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    CHECK(std::string(e.what()).find("learnig_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_settings(x, {{"dim", "-3"}}), Error);
  CHECK_THROWS_AS(apply_settings(x, {{"margin", "0"}}), Error);
  CHECK_THROWS_AS(apply_settings(x, {{"subtask_enabled", "maybe"}}), Error);
  CHECK_THROWS_AS(apply_settings(x, {{"scorer", "complex"}, {"dim", "7"}}), Error);
}

TEST_CASE("flags override the config file") {
  const auto dir = testing::temp_dir("config");
  {
    std::ofstream out(dir / "run.kv");
    out << "# preset\nlearning_rate = 0.05\ndim = 16\n";
  }
  const auto path = dir / "run.kv";
  const auto c = resolve_config(&path, {{"dim", "8"}});
  CHECK(c.train.learning_rate == 0.05);
  CHECK(c.train.dim == 8);
  CHECK(resolve_config(nullptr, {}).train.dim == TrainConfig{}.dim);

  write_run_meta(dir / "run.meta", "train", to_settings(c), {{"config", path}});
  const auto meta = read_key_values(dir / "run.meta");
  CHECK(meta.at("command") == "train");
  CHECK(meta.at("config.dim") == "8");
  CHECK(meta.at("checksum.config") == hex64(file_checksum(path)));
  CHECK(meta.count("version") == 1);
}

TEST_CASE("checkpoints round-trip and detect tampering") {
  Rng rng(3);
  const ModelDims dims{7, 4, 6, true};
  const auto params = ParamStore::initialize(dims, rng);
  const auto dir = testing::temp_dir("ckpt");
  write_checkpoint(dir, params, 0xfeedULL, {{"dim", "6"}}, 12);
  const auto back = read_checkpoint(dir);
  CHECK(back.params.dims() == dims);
  CHECK(back.vocab_checksum == 0xfeedULL);
  CHECK(back.epoch == 12);
  CHECK(back.settings.at("dim") == "6");
  for (auto p : kAllParams) {
    const auto a = params.data(p), b = back.params.data(p);
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  {
    std::fstream f(dir / "entity.f64", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x7f');
  }
  try {
    read_checkpoint(dir);
    FAIL("expected a checksum error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Checksum);
  }
  CHECK_THROWS_AS(read_checkpoint(testing::temp_dir("empty_ckpt")), Error);
}

TEST_CASE("synthetic corpora carry their planted confidence") {
  for (double strength : {0.5, 0.7, 0.9, 1.0}) {
    SyntheticSpec spec;
    spec.rule_strength = strength;
    spec.seed = 7;
    const auto syn = generate_synthetic(spec);
    std::vector<RawTriplet> all = syn.train;
    all.insert(all.end(), syn.valid.begin(), syn.valid.end());
    all.insert(all.end(), syn.test.begin(), syn.test.end());
    const auto vocab = build_vocabulary({all});
    CHECK(vocab->entity_count() <= spec.entities);
    const auto g = KnowledgeGraph(vocab, to_ids(all, *vocab)).augment_inverses();
    const auto table = mine_confidence(g);
    for (const auto& rule : syn.rules) {
      const double mined = table.confidence(vocab->relation(rule.premise), vocab->relation(rule.conclusion));
      CHECK(mined == rule.confidence);
      CHECK(std::abs(mined - strength) <= 0.05);
    }
  }
  SyntheticSpec same;
  same.seed = 3;
  CHECK(generate_synthetic(same).train == generate_synthetic(same).train);
  SyntheticSpec bad;
  bad.rule_strength = 1.5;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
}
