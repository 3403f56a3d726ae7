#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lankgc {

enum class ErrorKind {
  Parse,
  EmptyGraph,
  Lookup,
  Shape,
  State,
  Data,
  Config,
  Io,
  Checksum,
  Numeric,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

/// Every failure surfaced by the library. The kind is stable and
/// machine-readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// ---------------------------------------------------------------------------
// Randomness. The standard distributions are implementation-defined, so the
// few draws the pipeline needs are spelled out here to keep splits and
// samples identical across standard libraries.

using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be positive.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

/// Uniform double in [lo, hi).
inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform_unit(rng) < p; }

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

// ---------------------------------------------------------------------------

/// Worker count for OpenMP regions: LANKGC_THREADS if set and positive,
/// otherwise the OpenMP default.
int worker_count();

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

std::uint64_t file_checksum(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

/// Shortest-roundtrip-safe text for a double (%.17g).
std::string format_double(double value);

// ---------------------------------------------------------------------------
// Flat `key = value` text. Blank lines and lines starting with '#' are
// skipped; any other line without '=' is a parse error.

using KeyValues = std::map<std::string, std::string>;

KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& values);

}  // namespace lankgc
