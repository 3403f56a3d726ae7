#include "lankgc/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>

namespace lankgc {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

std::string file_name(Param p) { return std::string(param_name(p)) + ".f64"; }

std::uint64_t manifest_u64(const KeyValues& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) fail(ErrorKind::Data, "checkpoint manifest lacks '" + key + "'");
  std::uint64_t out = 0;
  const auto& v = it->second;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out, 10);
  if (ec != std::errc() || ptr != v.data() + v.size()) fail(ErrorKind::Data, "bad value for '" + key + "'");
  return out;
}

}  // namespace

void write_checkpoint(const fs::path& dir, const ParamStore& params, std::uint64_t vocab_checksum,
                      const KeyValues& settings, std::size_t epoch) {
  fs::create_directories(dir);
  KeyValues manifest;
  const auto& dims = params.dims();
  manifest["format"] = "lankgc-checkpoint-1";
  manifest["dims.entities"] = std::to_string(dims.entities);
  manifest["dims.relations"] = std::to_string(dims.relations);
  manifest["dims.dim"] = std::to_string(dims.dim);
  manifest["dims.lstm"] = dims.lstm ? "1" : "0";
  manifest["vocab_checksum"] = hex64(vocab_checksum);
  manifest["epoch"] = std::to_string(epoch);
  for (const auto& [key, value] : settings) manifest["config." + key] = value;
  for (auto p : kAllParams) {
    if (!params.has(p)) continue;
    const auto path = dir / file_name(p);
    const auto data = params.data(p);
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
      out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
      if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
    }
    manifest["checksum." + file_name(p)] = hex64(file_checksum(path));
  }
  write_key_values(dir / "manifest.txt", manifest);
}

Checkpoint read_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!fs::exists(manifest_path)) fail(ErrorKind::Io, "no checkpoint manifest in " + dir.string());
  const auto manifest = read_key_values(manifest_path);
  const auto format = manifest.find("format");
  if (format == manifest.end() || format->second != "lankgc-checkpoint-1") {
    fail(ErrorKind::Data, "not a checkpoint: " + dir.string());
  }
  ModelDims dims;
  dims.entities = manifest_u64(manifest, "dims.entities");
  dims.relations = manifest_u64(manifest, "dims.relations");
  dims.dim = manifest_u64(manifest, "dims.dim");
  dims.lstm = manifest_u64(manifest, "dims.lstm") != 0;

  Checkpoint out;
  out.params = ParamStore(dims);
  out.epoch = manifest_u64(manifest, "epoch");
  const auto vc = manifest.find("vocab_checksum");
  if (vc == manifest.end()) fail(ErrorKind::Data, "checkpoint manifest lacks 'vocab_checksum'");
  out.vocab_checksum = std::stoull(vc->second, nullptr, 16);
  for (const auto& [key, value] : manifest) {
    if (key.rfind("config.", 0) == 0) out.settings[key.substr(7)] = value;
  }
  for (auto p : kAllParams) {
    if (!out.params.has(p)) continue;
    const auto path = dir / file_name(p);
    if (!fs::exists(path)) fail(ErrorKind::Io, "checkpoint array missing: " + path.string());
    const auto sum = manifest.find("checksum." + file_name(p));
    if (sum == manifest.end() || sum->second != hex64(file_checksum(path))) {
      fail(ErrorKind::Checksum, "checksum mismatch for " + path.string());
    }
    auto data = out.params.data(p);
    if (fs::file_size(path) != data.size_bytes()) fail(ErrorKind::Data, "wrong size: " + path.string());
    std::ifstream in(path, std::ios::binary);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
    if (!in) fail(ErrorKind::Io, "read failed for " + path.string());
  }
  if (!out.params.all_finite()) fail(ErrorKind::Data, "checkpoint holds non-finite values");
  return out;
}

}  // namespace lankgc
