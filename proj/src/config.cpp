#include "lankgc/config.hpp"

#include <charconv>
#include <cmath>

namespace lankgc {

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::Config, key + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

double parse_f64(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    fail(ErrorKind::Config, key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorKind::Config, key + ": expected true or false, got '" + value + "'");
}

const char* bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

std::vector<std::string_view> config_keys() {
  return {"aggregator",    "batch_size",        "checkpoint_every",   "dim",
          "epochs",        "eval_every",        "eval_seed",          "exclude_query_edge",
          "l2_rate",       "learning_rate",     "logic_epsilon",      "logic_mode",
          "margin",        "negatives_per_positive", "neighbor_budget", "optimizer",
          "patience",      "scorer",            "seed",               "subtask_enabled",
          "validation_queries"};
}

void apply_settings(RunConfig& c, const KeyValues& settings) {
  auto& t = c.train;
  for (const auto& [key, value] : settings) {
    if (key == "learning_rate") t.learning_rate = parse_f64(key, value);
    else if (key == "margin") t.margin = parse_f64(key, value);
    else if (key == "dim") t.dim = parse_u64(key, value);
    else if (key == "negatives_per_positive") t.negatives_per_positive = parse_u64(key, value);
    else if (key == "l2_rate") t.l2_rate = parse_f64(key, value);
    else if (key == "epochs") t.epochs = parse_u64(key, value);
    else if (key == "batch_size") t.batch_size = parse_u64(key, value);
    else if (key == "optimizer") t.optimizer = parse_optimizer(value);
    else if (key == "seed") t.seed = parse_u64(key, value);
    else if (key == "subtask_enabled") t.subtask_enabled = parse_bool(key, value);
    else if (key == "exclude_query_edge") t.exclude_query_edge = parse_bool(key, value);
    else if (key == "eval_every") t.eval_every = parse_u64(key, value);
    else if (key == "patience") t.patience = parse_u64(key, value);
    else if (key == "validation_queries") t.validation_queries = parse_u64(key, value);
    else if (key == "checkpoint_every") t.checkpoint_every = parse_u64(key, value);
    else if (key == "aggregator") c.aggregator.kind = parse_aggregator(value);
    else if (key == "neighbor_budget") c.aggregator.neighbor_budget = parse_u64(key, value);
    else if (key == "logic_mode") c.aggregator.logic_mode = parse_logic_mode(value);
    else if (key == "logic_epsilon") c.aggregator.logic_epsilon = parse_f64(key, value);
    else if (key == "scorer") c.scorer = parse_scorer(value);
    else if (key == "eval_seed") c.eval_seed = parse_u64(key, value);
    else fail(ErrorKind::Config, "unknown config key '" + key + "'");
  }
  t.validate();
  if (c.aggregator.neighbor_budget == 0) fail(ErrorKind::Config, "neighbor_budget must be positive");
  if (!(c.aggregator.logic_epsilon > 0.0)) fail(ErrorKind::Config, "logic_epsilon must be positive");
  check_scorer_dim(c.scorer, t.dim);
}

KeyValues to_settings(const RunConfig& c) {
  const auto& t = c.train;
  return {
      {"aggregator", std::string(aggregator_name(c.aggregator.kind))},
      {"batch_size", std::to_string(t.batch_size)},
      {"checkpoint_every", std::to_string(t.checkpoint_every)},
      {"dim", std::to_string(t.dim)},
      {"epochs", std::to_string(t.epochs)},
      {"eval_every", std::to_string(t.eval_every)},
      {"eval_seed", std::to_string(c.eval_seed)},
      {"exclude_query_edge", bool_text(t.exclude_query_edge)},
      {"l2_rate", format_double(t.l2_rate)},
      {"learning_rate", format_double(t.learning_rate)},
      {"logic_epsilon", format_double(c.aggregator.logic_epsilon)},
      {"logic_mode", std::string(logic_mode_name(c.aggregator.logic_mode))},
      {"margin", format_double(t.margin)},
      {"negatives_per_positive", std::to_string(t.negatives_per_positive)},
      {"neighbor_budget", std::to_string(c.aggregator.neighbor_budget)},
      {"optimizer", std::string(optimizer_name(t.optimizer))},
      {"patience", std::to_string(t.patience)},
      {"scorer", std::string(scorer_name(c.scorer))},
      {"seed", std::to_string(t.seed)},
      {"subtask_enabled", bool_text(t.subtask_enabled)},
      {"validation_queries", std::to_string(t.validation_queries)},
  };
}

RunConfig resolve_config(const std::filesystem::path* file, const KeyValues& overrides) {
  KeyValues merged;
  if (file) merged = read_key_values(*file);
  for (const auto& [key, value] : overrides) merged[key] = value;
  RunConfig config;
  apply_settings(config, merged);
  return config;
}

void write_run_meta(const std::filesystem::path& path, std::string_view command, const KeyValues& settings,
                    const std::vector<MetaInput>& inputs) {
  KeyValues meta;
  meta["command"] = std::string(command);
  meta["version"] = std::string(kVersion);
  for (const auto& [key, value] : settings) meta["config." + key] = value;
  for (const auto& input : inputs) {
    meta["input." + input.name] = input.path.string();
    if (std::filesystem::is_regular_file(input.path)) {
      meta["checksum." + input.name] = hex64(file_checksum(input.path));
    } else if (std::filesystem::is_regular_file(input.path / "manifest.txt")) {
      meta["checksum." + input.name] = hex64(file_checksum(input.path / "manifest.txt"));
    } else if (std::filesystem::is_directory(input.path)) {
      for (const auto& entry : std::filesystem::directory_iterator(input.path)) {
        if (entry.is_regular_file()) {
          meta["checksum." + input.name + "." + entry.path().filename().string()] = hex64(file_checksum(entry.path()));
        }
      }
    }
  }
  write_key_values(path, meta);
}

}  // namespace lankgc
