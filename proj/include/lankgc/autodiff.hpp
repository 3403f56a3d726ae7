#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lankgc/params.hpp"

namespace lankgc::ad {

/// Handle to a node of a Tape. Only meaningful for the tape that made it.
struct Var {
  std::uint32_t id = 0;
};

/// Append-only record of dense float64 operations. Nodes are stored in
/// creation order, which is a topological order, and backward() walks them
/// in reverse. Vectors are n x 1, matrices row-major.
///
/// Parameter leaves copy their values out of a ParamStore; backward(loss,
/// sink) adds each leaf's gradient into the matching rows of the sink.
class Tape {
 public:
  explicit Tape(const ParamStore* params = nullptr) : params_(params) {}

  const ParamStore* params() const noexcept { return params_; }

  /// Drops every node but keeps the allocations.
  void reset();

  Var constant(std::span<const double> values);
  Var constant_matrix(std::span<const double> values, std::size_t rows, std::size_t cols);
  Var scalar(double value);
  Var zeros(std::size_t n);

  /// One row of a parameter array, as a vector. Repeated requests for the
  /// same row return the same node.
  Var param_row(Param p, std::size_t row);
  /// A whole parameter array with its matrix shape.
  Var param(Param p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double factor);
  /// s * v with s a 1 x 1 node.
  Var scale_by(Var s, Var v);
  Var mul(Var a, Var b);
  Var dot(Var a, Var b);
  Var matvec(Var m, Var x);
  Var concat(Var a, Var b);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var tanh(Var a);
  Var sigmoid(Var a);
  /// max(0, x); the subgradient at 0 is 0.
  Var relu(Var a);
  Var l1_norm(Var a);
  Var sum_squares(Var a);
  Var sum(Var a);
  Var element(Var v, std::size_t i);
  Var stack(std::span<const Var> scalars);
  Var add_n(std::span<const Var> terms);
  /// Softmax over entries with mask != 0; masked entries are 0 in the output
  /// and receive no gradient. Throws if nothing is unmasked.
  Var masked_softmax(Var scores, std::span<const std::uint8_t> mask);
  /// Mean of the unmasked vectors; the zero vector when all are masked.
  Var masked_mean(std::span<const Var> vectors, std::span<const std::uint8_t> mask);

  std::span<const double> value(Var v) const;
  double scalar_value(Var v) const;
  std::size_t rows(Var v) const { return nodes_.at(v.id).rows; }
  std::size_t size(Var v) const { return nodes_.at(v.id).rows * nodes_.at(v.id).cols; }

  /// Gradient of the last backward() loss with respect to v.
  std::span<const double> gradient(Var v) const;

  /// Fills node gradients. Throws if loss is not 1 x 1.
  void backward(Var loss);
  void backward(Var loss, GradientBuffer& sink);

  /// Smallest |x| seen at the input of a non-smooth op (L1 norm, relu);
  /// +inf when none ran. Finite-difference checks stay clear of kinks by
  /// keeping their step below this.
  double kink_margin() const noexcept { return kink_margin_; }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Leaf,
    ParamLeaf,
    Add,
    Sub,
    Scale,
    ScaleBy,
    Mul,
    Dot,
    MatVec,
    Concat,
    Slice,
    Tanh,
    Sigmoid,
    Relu,
    L1Norm,
    SumSquares,
    Sum,
    Stack,
    AddN,
    MaskedSoftmax,
    MaskedMean,
  };

  struct Node {
    Op op = Op::Leaf;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t list_offset = 0;  // into ids_
    std::uint32_t list_length = 0;
    std::uint32_t mask_offset = 0;  // into masks_
    std::size_t value_offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double factor = 0.0;  // Scale factor, or Slice/Element offset
    Param param = Param::Entity;
    std::size_t param_offset = 0;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  double* val(const Node& n) { return values_.data() + n.value_offset; }
  const double* val(const Node& n) const { return values_.data() + n.value_offset; }
  void require_same_size(Var a, Var b, const char* op) const;
  void require_scalar(Var a, const char* op) const;
  void note_kink(double x) noexcept;
  void run_backward(Var loss);

  const ParamStore* params_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> ids_;
  std::vector<std::uint8_t> masks_;
  std::unordered_map<std::uint64_t, std::uint32_t> param_cache_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct ParamCheck {
  Param param;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
};

struct FiniteDiffReport {
  std::vector<ParamCheck> params;
  double max_relative_error = 0.0;
  /// Number of times the parameters were nudged off a kink before checking.
  int kink_retries = 0;
  bool passed = false;
};

/// Evaluates a scalar objective on `params`, optionally recording its tape
/// and gradient. The function must be deterministic in params.
struct Objective {
  /// Returns the loss value and, when grads != nullptr, adds dloss/dparams
  /// into it. Also reports the tape's kink margin through *margin.
  std::function<double(const ParamStore& params, GradientBuffer* grads, double* margin)> evaluate;
};

struct FiniteDiffOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  /// Minimum distance from every kink input before checking.
  double kink_clearance = 1e-4;
  /// Entries checked per parameter array; all when 0.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares analytic gradients against central differences for every entry
/// (or a seeded subset) of every present parameter. If the evaluation point
/// sits within a few steps of a kink, the parameters are jittered and the
/// check restarts.
FiniteDiffReport finite_diff_check(const Objective& objective, ParamStore params,
                                   const FiniteDiffOptions& options = {});

}  // namespace lankgc::ad
