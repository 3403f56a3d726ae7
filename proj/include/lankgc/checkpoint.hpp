#pragma once

#include <cstdint>
#include <filesystem>

#include "lankgc/common.hpp"
#include "lankgc/params.hpp"

namespace lankgc {

/// Directory holding `manifest.txt` (dims, vocabulary checksum, settings,
/// epoch, per-array checksums) and one little-endian float64 file per
/// present parameter array, `<name>.f64`.
struct Checkpoint {
  ParamStore params;
  KeyValues settings;
  std::uint64_t vocab_checksum = 0;
  std::size_t epoch = 0;
};

void write_checkpoint(const std::filesystem::path& dir, const ParamStore& params, std::uint64_t vocab_checksum,
                      const KeyValues& settings, std::size_t epoch);

/// Raises Io for missing files, Checksum for altered arrays and Data for a
/// malformed manifest.
Checkpoint read_checkpoint(const std::filesystem::path& dir);

}  // namespace lankgc
