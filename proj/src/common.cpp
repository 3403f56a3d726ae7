#include "lankgc/common.hpp"

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lankgc {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse";
    case ErrorKind::EmptyGraph: return "empty-graph";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::State: return "state";
    case ErrorKind::Data: return "data";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) fail(ErrorKind::State, "uniform_index over an empty range");
  const std::uint64_t bound = n;
  // 2^64 mod bound; draws below it are rejected so the rest split evenly.
  const std::uint64_t threshold = (0 - bound) % bound;
  std::uint64_t x = rng();
  while (x < threshold) x = rng();
  return static_cast<std::size_t>(x % bound);
}

double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

int worker_count() {
  if (const char* env = std::getenv("LANKGC_THREADS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end != env && value > 0) return static_cast<int>(value);
  }
  return omp_get_max_threads();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return fnv1a(buffer.str());
}

std::string hex64(std::uint64_t value) {
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(value));
  return out;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  KeyValues out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    const auto key = eq == std::string::npos ? std::string() : trim(text.substr(0, eq));
    if (key.empty()) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    out[key] = trim(text.substr(eq + 1));
  }
  return out;
}

void write_key_values(const std::filesystem::path& path, const KeyValues& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [key, value] : values) out << key << " = " << value << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace lankgc
