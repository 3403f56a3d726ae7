#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "lankgc/checkpoint.hpp"
#include "lankgc/config.hpp"
#include "lankgc/evaluator.hpp"
#include "lankgc/synthetic.hpp"
#include "lankgc/trainer.hpp"

namespace fs = std::filesystem;
using namespace lankgc;

namespace {

constexpr const char* kEpsilonHeader = "# logic_epsilon = ";

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create directory " + dir.string());
}

void require_exists(const fs::path& p) {
  if (!fs::exists(p)) fail(ErrorKind::Io, "no such file or directory: " + p.string());
}

// Key=value overrides from repeated --set flags.
KeyValues parse_overrides(const std::vector<std::string>& items) {
  KeyValues out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::Config, "--set expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::optional<double> rules_epsilon(const fs::path& rules) {
  std::ifstream in(rules);
  std::string line;
  if (std::getline(in, line) && line.starts_with(kEpsilonHeader)) {
    return std::stod(line.substr(std::string_view(kEpsilonHeader).size()));
  }
  return std::nullopt;
}

// Everything evaluation needs from a checkpoint directory.
struct LoadedModel {
  Checkpoint ckpt;
  RunConfig config;
  std::optional<ConfidenceTable> rules;
};

LoadedModel load_model(const fs::path& dir, const Vocabulary& vocab) {
  require_exists(dir);
  LoadedModel m{read_checkpoint(dir), {}, std::nullopt};
  apply_settings(m.config, m.ckpt.settings);
  if (m.ckpt.vocab_checksum != vocab.checksum()) {
    fail(ErrorKind::Checksum, "checkpoint " + dir.string() + " was trained on a different vocabulary");
  }
  if (fs::exists(dir / "rules.tsv")) m.rules = import_table(vocab, dir / "rules.tsv");
  return m;
}

fs::path bundle_of_checkpoint(const fs::path& ckpt) {
  const auto meta = read_key_values(ckpt / "run.meta");
  const auto it = meta.find("input.bundle");
  if (it == meta.end()) fail(ErrorKind::Data, "checkpoint run.meta does not name its bundle; pass --bundle");
  return it->second;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  fs::path corpus, out;
  std::string strategy = "subject";
  double rate = 0.10;
  std::uint64_t seed = 0;
};

void build_dataset(const BuildArgs& a) {
  require_exists(a.corpus);
  const SplitSpec spec{parse_strategy(a.strategy), a.rate, a.seed};
  const auto bundle = build_split(load_corpus(a.corpus), spec);
  prepare_dir(a.out);
  write_bundle(bundle, a.out);
  const auto stats = emit_statistics(bundle);
  std::printf("relations\t%zu\nentities\t%zu\nunseen\t%zu\nmin_neighbors\t%zu\nmax_neighbors\t%zu\navg_neighbors\t%.1f\n",
              stats.relations, stats.entities, stats.unseen, stats.min_neighbors, stats.max_neighbors,
              stats.avg_neighbors);
  std::printf("train\t%zu\nauxiliary\t%zu\nvalidation\t%zu\ntest\t%zu\n", bundle.train.size(), bundle.auxiliary.size(),
              bundle.validation.size(), bundle.test.size());
  write_run_meta(a.out / "run.meta", "build-dataset",
                 {{"strategy", a.strategy}, {"rate", format_double(a.rate)}, {"seed", std::to_string(a.seed)}},
                 {{"corpus", a.corpus}});
}

// ---------------------------------------------------------------------------

struct MineArgs {
  fs::path train, out;
  double epsilon = kDefaultLogicEpsilon;
};

void mine_rules(const MineArgs& a) {
  require_exists(a.train);
  if (!(a.epsilon > 0.0)) fail(ErrorKind::Config, "--epsilon must be positive");
  const auto raw = read_raw_triplets(a.train);
  const auto vocab = build_vocabulary({raw});
  const auto table = mine_confidence(KnowledgeGraph(vocab, to_ids(raw, *vocab)).augment_inverses());
  if (a.out.has_parent_path()) prepare_dir(a.out.parent_path());
  const auto body = a.out.string() + ".tmp";
  export_table(table, *vocab, body);
  {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + a.out.string());
    out << kEpsilonHeader << format_double(a.epsilon) << '\n' << std::ifstream(body, std::ios::binary).rdbuf();
  }
  fs::remove(body);
  std::printf("rules\t%zu\n", table.entries().size());
  write_run_meta(a.out.string() + ".run.meta", "mine-rules", {{"logic_epsilon", format_double(a.epsilon)}},
                 {{"train", a.train}});
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  fs::path bundle, rules, config, out;
  std::string aggregator, scorer;
  std::vector<std::string> set;
  bool quiet = false;
};

void train_command(const TrainArgs& a) {
  require_exists(a.bundle);
  auto overrides = parse_overrides(a.set);
  if (!a.aggregator.empty()) overrides["aggregator"] = a.aggregator;
  if (!a.scorer.empty()) overrides["scorer"] = a.scorer;
  KeyValues explicit_keys;
  if (!a.config.empty()) {
    require_exists(a.config);
    explicit_keys = read_key_values(a.config);
  }
  if (!a.rules.empty()) {
    require_exists(a.rules);
    const auto eps = rules_epsilon(a.rules);
    if (eps && !explicit_keys.count("logic_epsilon") && !overrides.count("logic_epsilon")) {
      overrides["logic_epsilon"] = format_double(*eps);
    }
  }
  const auto config = resolve_config(a.config.empty() ? nullptr : &a.config, overrides);
  const auto bundle = read_bundle(a.bundle);
  std::optional<ConfidenceTable> rules;
  if (!a.rules.empty()) rules = import_table(*bundle.vocab, a.rules);
  const ConfidenceTable* table = rules ? &*rules : nullptr;

  prepare_dir(a.out);
  const auto settings = to_settings(config);
  const auto vocab_sum = bundle.vocab->checksum();
  TrainHooks hooks;
  hooks.validate = validation_mrr(bundle, config.train, config.aggregator, config.scorer, table);
  hooks.checkpoint = [&](const ParamStore& params, std::size_t epoch, bool best) {
    if (!best) write_checkpoint(a.out / ("epoch-" + std::to_string(epoch)), params, vocab_sum, settings, epoch);
  };
  if (!a.quiet) hooks.log = &std::cerr;
  const auto result = train(bundle, config.train, config.aggregator, config.scorer, table, hooks);
  write_checkpoint(a.out, result.params, vocab_sum, settings, result.report.best_epoch);
  if (rules) export_table(*rules, *bundle.vocab, a.out / "rules.tsv");

  const auto& r = result.report;
  std::printf("epochs\t%zu\nbest_epoch\t%zu\nstopped_early\t%s\n", r.epochs.size(), r.best_epoch,
              r.stopped_early ? "true" : "false");
  if (r.best_validation) std::printf("best_validation_mrr\t%.6f\n", *r.best_validation);
  std::vector<MetaInput> inputs = {{"bundle", fs::absolute(a.bundle)}};
  if (!a.rules.empty()) inputs.push_back({"rules", a.rules});
  if (!a.config.empty()) inputs.push_back({"config", a.config});
  write_run_meta(a.out / "run.meta", "train", settings, inputs);
}

// ---------------------------------------------------------------------------

struct EvalLpArgs {
  fs::path bundle, ckpt, out;
  bool serial = false;
};

void eval_lp(const EvalLpArgs& a) {
  require_exists(a.bundle);
  const auto bundle = read_bundle(a.bundle);
  const auto model = load_model(a.ckpt, *bundle.vocab);
  const Encoder enc(model.ckpt.params, model.rules ? &*model.rules : nullptr, model.config.aggregator);
  const auto run = link_prediction(bundle, enc, model.config.scorer, model.config.eval_seed, !a.serial);
  const auto& m = run.metrics;
  const auto name = std::string(aggregator_name(model.config.aggregator.kind)) + "+" +
                    std::string(scorer_name(model.config.scorer));
  auto dataset = fs::absolute(a.bundle).lexically_normal().filename().string();
  if (dataset.empty()) dataset = fs::absolute(a.bundle).lexically_normal().parent_path().filename().string();
  char row[512];
  std::snprintf(row, sizeof row, "%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", name.c_str(), dataset.c_str(), m.mr, m.mrr,
                m.hits1, m.hits3, m.hits10);
  const std::string header = "model,dataset,MR,MRR,hits1,hits3,hits10\n";
  std::cout << header << row;
  if (run.empty_neighborhoods > 0) std::cerr << "note: " << run.empty_neighborhoods << " entities had no neighbors\n";
  if (!a.out.empty()) {
    if (a.out.has_parent_path()) prepare_dir(a.out.parent_path());
    std::ofstream out(a.out, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + a.out.string());
    out << header << row;
    write_run_meta(a.out.string() + ".run.meta", "eval-lp", to_settings(model.config),
                   {{"bundle", a.bundle}, {"ckpt", a.ckpt}});
  }
}

// ---------------------------------------------------------------------------

struct EvalTcArgs {
  fs::path valid, test, ckpt, bundle, out;
};

std::vector<LabeledTriplet> labeled_ids(const fs::path& path, const Vocabulary& vocab) {
  require_exists(path);
  std::vector<LabeledTriplet> out;
  for (const auto& l : read_labeled_triplets(path)) {
    const auto ids = to_ids(std::span(&l.triplet, 1), vocab);
    out.push_back({ids[0], l.label});
  }
  return out;
}

void eval_tc(const EvalTcArgs& a) {
  const auto bundle_dir = a.bundle.empty() ? bundle_of_checkpoint(a.ckpt) : a.bundle;
  require_exists(bundle_dir);
  const auto bundle = read_bundle(bundle_dir);
  const auto model = load_model(a.ckpt, *bundle.vocab);
  const Encoder enc(model.ckpt.params, model.rules ? &*model.rules : nullptr, model.config.aggregator);
  const auto seen = KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses();
  const auto aux = KnowledgeGraph(bundle.vocab, bundle.auxiliary).augment_inverses();
  const EntityNeighborhoods nbs(seen, &aux, bundle.unseen);
  const auto valid = score_labeled(labeled_ids(a.valid, *bundle.vocab), enc, model.config.scorer, nbs,
                                   model.config.eval_seed);
  const auto test = score_labeled(labeled_ids(a.test, *bundle.vocab), enc, model.config.scorer, nbs,
                                  model.config.eval_seed);
  const auto table = tune_thresholds(valid);
  const double accuracy = classify(test, table);
  char row[256];
  std::snprintf(row, sizeof row, "%s,%zu,%.4f\n", std::string(aggregator_name(model.config.aggregator.kind)).c_str(),
                test.size(), accuracy);
  const std::string header = "model,test_triplets,accuracy\n";
  std::cout << header << row;
  if (!a.out.empty()) {
    if (a.out.has_parent_path()) prepare_dir(a.out.parent_path());
    std::ofstream out(a.out, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + a.out.string());
    out << header << row;
    write_run_meta(a.out.string() + ".run.meta", "eval-tc", to_settings(model.config),
                   {{"valid", a.valid}, {"test", a.test}, {"ckpt", a.ckpt}, {"bundle", bundle_dir}});
  }
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  fs::path ckpt, bundle;
  std::string entity, query;
};

void inspect_weights(const InspectArgs& a) {
  const auto bundle_dir = a.bundle.empty() ? bundle_of_checkpoint(a.ckpt) : a.bundle;
  require_exists(bundle_dir);
  const auto bundle = read_bundle(bundle_dir);
  const auto model = load_model(a.ckpt, *bundle.vocab);
  const auto kind = model.config.aggregator.kind;
  if (kind == AggregatorKind::Mean || kind == AggregatorKind::Lstm) {
    fail(ErrorKind::State, std::string(aggregator_name(kind)) + " assigns no attention weights");
  }
  const Encoder enc(model.ckpt.params, model.rules ? &*model.rules : nullptr, model.config.aggregator);
  const auto seen = KnowledgeGraph(bundle.vocab, bundle.train).augment_inverses();
  const auto aux = KnowledgeGraph(bundle.vocab, bundle.auxiliary).augment_inverses();
  const EntityNeighborhoods nbs(seen, &aux, bundle.unseen);
  const auto entity = bundle.vocab->entity(a.entity);
  const auto query = bundle.vocab->relation(a.query);
  auto rng = evaluation_rng(model.config.eval_seed, entity);
  auto trace = enc.encode(entity, query, nbs(entity), rng).trace;
  std::stable_sort(trace.begin(), trace.end(), [](const auto& x, const auto& y) { return x.total > y.total; });
  std::printf("rank\trelation\tneighbor\tlogic\tneural\ttotal\n");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& w = trace[i];
    std::printf("%zu\t%s\t%s\t%.4f\t%.4f\t%.4f\n", i + 1, bundle.vocab->relation_name(w.neighbor.relation).c_str(),
                std::string(bundle.vocab->entity_name(w.neighbor.entity)).c_str(), w.logic, w.neural, w.total);
  }
}

// ---------------------------------------------------------------------------

void gen_synthetic(const SyntheticSpec& spec, const fs::path& out) {
  const auto corpus = generate_synthetic(spec);
  prepare_dir(out);
  write_synthetic(corpus, out);
  for (const auto& r : corpus.rules) std::printf("%s\t%s\t%.4f\n", r.premise.c_str(), r.conclusion.c_str(), r.confidence);
  write_run_meta(out / "run.meta", "gen-synthetic",
                 {{"entities", std::to_string(spec.entities)},
                  {"rule_strength", format_double(spec.rule_strength)},
                  {"seed", std::to_string(spec.seed)}},
                 {});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inductive knowledge graph embedding with logic attention"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  BuildArgs build;
  auto* cmd_build = app.add_subcommand("build-dataset", "Split a corpus into an unseen-entity bundle");
  cmd_build->add_option("--corpus", build.corpus, "Directory with train/valid/test triplet files")->required();
  cmd_build->add_option("--strategy", build.strategy, "subject or object")->check(CLI::IsMember({"subject", "object"}));
  cmd_build->add_option("--rate", build.rate, "Share of test triplets sampled for unseen entities");
  cmd_build->add_option("--seed", build.seed);
  cmd_build->add_option("--out", build.out)->required();

  MineArgs mine;
  auto* cmd_mine = app.add_subcommand("mine-rules", "Mine relation implication confidences");
  cmd_mine->add_option("--train", mine.train, "Training triplets")->required();
  cmd_mine->add_option("--out", mine.out)->required();
  cmd_mine->add_option("--epsilon", mine.epsilon, "Logic attention denominator floor");

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "Train an aggregator and write a checkpoint");
  cmd_train->add_option("--bundle", tr.bundle)->required();
  cmd_train->add_option("--rules", tr.rules, "Output of mine-rules");
  cmd_train->add_option("--aggregator", tr.aggregator, "lan|mean|lstm|query-attn|global-attn|logic-only");
  cmd_train->add_option("--scorer", tr.scorer, "transe|distmult|complex");
  cmd_train->add_option("--config", tr.config, "key = value file");
  cmd_train->add_option("--set", tr.set, "Override one config key (key=value); repeatable");
  cmd_train->add_option("--out", tr.out, "Checkpoint directory")->required();
  cmd_train->add_flag("--quiet", tr.quiet, "No per-epoch log");

  EvalLpArgs lp;
  auto* cmd_lp = app.add_subcommand("eval-lp", "Filtered link prediction on the bundle's test split");
  cmd_lp->add_option("--bundle", lp.bundle)->required();
  cmd_lp->add_option("--ckpt", lp.ckpt)->required();
  cmd_lp->add_option("--out", lp.out, "metrics.csv");
  cmd_lp->add_flag("--serial", lp.serial, "Rank on one thread");

  EvalTcArgs tc;
  auto* cmd_tc = app.add_subcommand("eval-tc", "Triplet classification with per-relation thresholds");
  cmd_tc->add_option("--valid", tc.valid, "Labeled validation triplets")->required();
  cmd_tc->add_option("--test", tc.test, "Labeled test triplets")->required();
  cmd_tc->add_option("--ckpt", tc.ckpt)->required();
  cmd_tc->add_option("--bundle", tc.bundle, "Defaults to the bundle the checkpoint was trained on");
  cmd_tc->add_option("--out", tc.out);

  InspectArgs ins;
  auto* cmd_ins = app.add_subcommand("inspect-weights", "Attention weights of one entity's neighbors");
  cmd_ins->add_option("--ckpt", ins.ckpt)->required();
  cmd_ins->add_option("--entity", ins.entity)->required();
  cmd_ins->add_option("--query", ins.query)->required();
  cmd_ins->add_option("--bundle", ins.bundle, "Defaults to the bundle the checkpoint was trained on");

  SyntheticSpec syn;
  fs::path syn_out;
  auto* cmd_syn = app.add_subcommand("gen-synthetic", "Generate a corpus with planted rules");
  cmd_syn->add_option("--entities", syn.entities);
  cmd_syn->add_option("--rule-strength", syn.rule_strength);
  cmd_syn->add_option("--seed", syn.seed);
  cmd_syn->add_option("--out", syn_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error kind=usage message=" << e.what() << "\n";
    return 2;
  }

  try {
    if (*cmd_build) build_dataset(build);
    else if (*cmd_mine) mine_rules(mine);
    else if (*cmd_train) train_command(tr);
    else if (*cmd_lp) eval_lp(lp);
    else if (*cmd_tc) eval_tc(tc);
    else if (*cmd_ins) inspect_weights(ins);
    else if (*cmd_syn) gen_synthetic(syn, syn_out);
  } catch (const Error& e) {
    std::cerr << "error kind=" << error_kind_name(e.kind()) << " message=" << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=" << e.what() << "\n";
    return 1;
  }
  return 0;
}
