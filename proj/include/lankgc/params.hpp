#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "lankgc/common.hpp"

namespace lankgc {

/// Learnable arrays. All are row-major matrices; vectors have one column.
enum class Param : std::uint8_t {
  Entity,     // W_e, n x d input embeddings
  Relation,   // W_r, 2m x d relation (query) embeddings
  Transform,  // w_r, 2m x d unit transform vectors
  AttU,       // u_a, d
  AttW,       // W_a, d x 2d
  AttZ,       // z_q, 2m x d query attention vectors
  LstmW,      // 4d x d input weights, gates in order i, f, g, o
  LstmU,      // 4d x d recurrent weights
  LstmB,      // 4d bias
};

inline constexpr std::size_t kParamCount = 9;

std::string_view param_name(Param p) noexcept;

inline constexpr std::array<Param, kParamCount> kAllParams = {
    Param::Entity, Param::Relation, Param::Transform, Param::AttU, Param::AttW,
    Param::AttZ,   Param::LstmW,    Param::LstmU,     Param::LstmB};

struct ModelDims {
  std::size_t entities = 0;
  std::size_t relations = 0;  // augmented count 2m
  std::size_t dim = 0;
  bool lstm = false;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ArrayShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

ArrayShape param_shape(Param p, const ModelDims& dims) noexcept;

class ParamStore {
 public:
  ParamStore() = default;
  /// Zero-filled arrays; the LSTM arrays are empty unless dims.lstm.
  explicit ParamStore(const ModelDims& dims);

  /// Embeddings and attention parameters uniform in +-1/sqrt(d); transform
  /// rows random then normalized to unit length.
  static ParamStore initialize(const ModelDims& dims, Rng& rng);

  const ModelDims& dims() const noexcept { return dims_; }
  ArrayShape shape(Param p) const noexcept { return param_shape(p, dims_); }
  bool has(Param p) const noexcept { return !arrays_[index(p)].empty(); }

  std::span<double> data(Param p) noexcept { return arrays_[index(p)]; }
  std::span<const double> data(Param p) const noexcept { return arrays_[index(p)]; }
  std::span<double> row(Param p, std::size_t r);
  std::span<const double> row(Param p, std::size_t r) const;

  void normalize_transforms();
  bool all_finite() const noexcept;

 private:
  static std::size_t index(Param p) noexcept { return static_cast<std::size_t>(p); }

  ModelDims dims_;
  std::array<std::vector<double>, kParamCount> arrays_;
};

/// Dense gradient arrays with a record of the touched rows, so clearing and
/// merging cost is proportional to what a batch actually used.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  explicit GradientBuffer(const ModelDims& dims);

  void add(Param p, std::size_t offset, std::span<const double> values);

  std::span<const double> data(Param p) const noexcept { return arrays_[idx(p)]; }
  std::span<const std::uint32_t> touched_rows(Param p) const noexcept { return touched_[idx(p)]; }

  /// this += other, row by row in other's touch order.
  void accumulate(const GradientBuffer& other);
  void clear();
  /// Sum of squares over every array.
  double squared_norm() const;

 private:
  static std::size_t idx(Param p) noexcept { return static_cast<std::size_t>(p); }
  void touch(Param p, std::size_t row);

  ModelDims dims_;
  std::array<std::vector<double>, kParamCount> arrays_;
  std::array<std::vector<std::uint8_t>, kParamCount> flags_;
  std::array<std::vector<std::uint32_t>, kParamCount> touched_;
};

}  // namespace lankgc
