#include "lankgc/params.hpp"

#include <cmath>

namespace lankgc {

std::string_view param_name(Param p) noexcept {
  switch (p) {
    case Param::Entity: return "entity";
    case Param::Relation: return "relation";
    case Param::Transform: return "transform";
    case Param::AttU: return "att_u";
    case Param::AttW: return "att_w";
    case Param::AttZ: return "att_z";
    case Param::LstmW: return "lstm_w";
    case Param::LstmU: return "lstm_u";
    case Param::LstmB: return "lstm_b";
  }
  return "?";
}

ArrayShape param_shape(Param p, const ModelDims& dims) noexcept {
  const auto d = dims.dim;
  switch (p) {
    case Param::Entity: return {dims.entities, d};
    case Param::Relation:
    case Param::Transform:
    case Param::AttZ: return {dims.relations, d};
    case Param::AttU: return {d, 1};
    case Param::AttW: return {d, 2 * d};
    case Param::LstmW:
    case Param::LstmU: return dims.lstm ? ArrayShape{4 * d, d} : ArrayShape{};
    case Param::LstmB: return dims.lstm ? ArrayShape{4 * d, 1} : ArrayShape{};
  }
  return {};
}

ParamStore::ParamStore(const ModelDims& dims) : dims_(dims) {
  if (dims.dim == 0) fail(ErrorKind::Config, "embedding dimension must be positive");
  for (auto p : kAllParams) arrays_[index(p)].assign(param_shape(p, dims).size(), 0.0);
}

ParamStore ParamStore::initialize(const ModelDims& dims, Rng& rng) {
  ParamStore store(dims);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.dim));
  for (auto p : kAllParams) {
    for (auto& v : store.data(p)) v = uniform_real(rng, -scale, scale);
  }
  store.normalize_transforms();
  return store;
}

std::span<double> ParamStore::row(Param p, std::size_t r) {
  const auto s = shape(p);
  if (r >= s.rows) fail(ErrorKind::Lookup, std::string(param_name(p)) + " row out of range");
  return data(p).subspan(r * s.cols, s.cols);
}

std::span<const double> ParamStore::row(Param p, std::size_t r) const {
  const auto s = shape(p);
  if (r >= s.rows) fail(ErrorKind::Lookup, std::string(param_name(p)) + " row out of range");
  return data(p).subspan(r * s.cols, s.cols);
}

void ParamStore::normalize_transforms() {
  for (std::size_t r = 0; r < dims_.relations; ++r) {
    auto w = row(Param::Transform, r);
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      w[0] = 1.0;
      continue;
    }
    for (double& x : w) x /= norm;
  }
}

bool ParamStore::all_finite() const noexcept {
  for (const auto& a : arrays_) {
    for (double x : a) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

// --- GradientBuffer ---------------------------------------------------------

GradientBuffer::GradientBuffer(const ModelDims& dims) : dims_(dims) {
  for (auto p : kAllParams) {
    const auto s = param_shape(p, dims);
    arrays_[idx(p)].assign(s.size(), 0.0);
    flags_[idx(p)].assign(s.rows, 0);
  }
}

void GradientBuffer::touch(Param p, std::size_t row) {
  auto& flag = flags_[idx(p)][row];
  if (!flag) {
    flag = 1;
    touched_[idx(p)].push_back(static_cast<std::uint32_t>(row));
  }
}

void GradientBuffer::add(Param p, std::size_t offset, std::span<const double> values) {
  auto& a = arrays_[idx(p)];
  if (offset + values.size() > a.size()) fail(ErrorKind::Shape, "gradient write past the array end");
  const auto cols = param_shape(p, dims_).cols;
  for (std::size_t r = offset / cols; r * cols < offset + values.size(); ++r) touch(p, r);
  for (std::size_t i = 0; i < values.size(); ++i) a[offset + i] += values[i];
}

void GradientBuffer::accumulate(const GradientBuffer& other) {
  for (auto p : kAllParams) {
    const auto cols = param_shape(p, dims_).cols;
    const auto& src = other.arrays_[idx(p)];
    auto& dst = arrays_[idx(p)];
    for (auto r : other.touched_[idx(p)]) {
      touch(p, r);
      for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] += src[r * cols + c];
    }
  }
}

void GradientBuffer::clear() {
  for (auto p : kAllParams) {
    const auto cols = param_shape(p, dims_).cols;
    auto& a = arrays_[idx(p)];
    for (auto r : touched_[idx(p)]) {
      std::fill(a.begin() + static_cast<std::ptrdiff_t>(r * cols),
                a.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols), 0.0);
      flags_[idx(p)][r] = 0;
    }
    touched_[idx(p)].clear();
  }
}

double GradientBuffer::squared_norm() const {
  double total = 0.0;
  for (auto p : kAllParams) {
    const auto cols = param_shape(p, dims_).cols;
    const auto& a = arrays_[idx(p)];
    for (auto r : touched_[idx(p)]) {
      for (std::size_t c = 0; c < cols; ++c) total += a[r * cols + c] * a[r * cols + c];
    }
  }
  return total;
}

}  // namespace lankgc
