#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lankgc/trainer.hpp"

namespace lankgc {

inline constexpr std::string_view kVersion = "0.1.0";

/// Everything a run needs beyond its input files.
struct RunConfig {
  TrainConfig train;
  AggregatorConfig aggregator;
  ScorerKind scorer = ScorerKind::TransE;
  /// Seed for evaluation-time neighbor sampling.
  std::uint64_t eval_seed = 7;
};

/// Recognized keys, in the order to_settings() emits them.
std::vector<std::string_view> config_keys();

/// Applies `settings` on top of `config`. Unknown keys and malformed values
/// raise Error(Config).
void apply_settings(RunConfig& config, const KeyValues& settings);

KeyValues to_settings(const RunConfig& config);

/// Defaults, then the file (if any), then the flag overrides.
RunConfig resolve_config(const std::filesystem::path* file, const KeyValues& overrides);

/// One input file recorded in run.meta.
struct MetaInput {
  std::string name;
  std::filesystem::path path;
};

/// Writes resolved settings, the command, input checksums and the version.
void write_run_meta(const std::filesystem::path& path, std::string_view command, const KeyValues& settings,
                    const std::vector<MetaInput>& inputs);

}  // namespace lankgc
