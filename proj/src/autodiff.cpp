#include "lankgc/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace lankgc::ad {

namespace {

[[noreturn]] void shape_error(const std::string& what) { fail(ErrorKind::Shape, what); }

}  // namespace

void Tape::reset() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  ids_.clear();
  masks_.clear();
  param_cache_.clear();
  kink_margin_ = std::numeric_limits<double>::infinity();
}

Var Tape::push(Node n) {
  n.value_offset = values_.size();
  values_.resize(values_.size() + n.rows * n.cols, 0.0);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) shape_error("variable does not belong to this tape");
  return nodes_[v.id];
}

void Tape::require_same_size(Var a, Var b, const char* op) const {
  const auto& na = node(a);
  const auto& nb = node(b);
  if (na.rows * na.cols != nb.rows * nb.cols) {
    shape_error(std::string(op) + ": size mismatch " + std::to_string(na.rows * na.cols) + " vs " +
                std::to_string(nb.rows * nb.cols));
  }
}

void Tape::require_scalar(Var a, const char* op) const {
  const auto& n = node(a);
  if (n.rows * n.cols != 1) shape_error(std::string(op) + ": expected a scalar");
}

void Tape::note_kink(double x) noexcept { kink_margin_ = std::min(kink_margin_, std::abs(x)); }

std::span<const double> Tape::value(Var v) const {
  const auto& n = node(v);
  return {val(n), n.rows * n.cols};
}

double Tape::scalar_value(Var v) const {
  require_scalar(v, "scalar_value");
  return values_[node(v).value_offset];
}

std::span<const double> Tape::gradient(Var v) const {
  const auto& n = node(v);
  if (grads_.size() != values_.size()) shape_error("gradient requested before backward");
  return {grads_.data() + n.value_offset, n.rows * n.cols};
}

// --- leaves -----------------------------------------------------------------

Var Tape::constant_matrix(std::span<const double> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) shape_error("constant: value count does not match shape");
  Node n;
  n.rows = rows;
  n.cols = cols;
  const Var v = push(n);
  std::copy(values.begin(), values.end(), values_.begin() + static_cast<std::ptrdiff_t>(nodes_[v.id].value_offset));
  return v;
}

Var Tape::constant(std::span<const double> values) { return constant_matrix(values, values.size(), 1); }

Var Tape::scalar(double value) { return constant_matrix(std::span<const double>(&value, 1), 1, 1); }

Var Tape::zeros(std::size_t n) {
  Node node;
  node.rows = n;
  node.cols = 1;
  return push(node);
}

Var Tape::param_row(Param p, std::size_t row) {
  if (!params_) shape_error("tape has no parameter store");
  const std::uint64_t key = (static_cast<std::uint64_t>(p) << 48) | (row + 1);
  if (auto it = param_cache_.find(key); it != param_cache_.end()) return Var{it->second};
  const auto source = params_->row(p, row);
  Node n;
  n.op = Op::ParamLeaf;
  n.rows = source.size();
  n.cols = 1;
  n.param = p;
  n.param_offset = row * source.size();
  const Var v = push(n);
  std::copy(source.begin(), source.end(), val(nodes_[v.id]));
  param_cache_.emplace(key, v.id);
  return v;
}

Var Tape::param(Param p) {
  if (!params_) shape_error("tape has no parameter store");
  const std::uint64_t key = static_cast<std::uint64_t>(p) << 48;
  if (auto it = param_cache_.find(key); it != param_cache_.end()) return Var{it->second};
  if (!params_->has(p)) shape_error(std::string("parameter ") + std::string(param_name(p)) + " is not allocated");
  const auto shape = params_->shape(p);
  const auto source = params_->data(p);
  Node n;
  n.op = Op::ParamLeaf;
  n.rows = shape.rows;
  n.cols = shape.cols;
  n.param = p;
  const Var v = push(n);
  std::copy(source.begin(), source.end(), val(nodes_[v.id]));
  param_cache_.emplace(key, v.id);
  return v;
}

// --- elementwise ------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  require_same_size(a, b, "add");
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  const double* y = val(nodes_[b.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = x[i] + y[i];
  return v;
}

Var Tape::sub(Var a, Var b) {
  require_same_size(a, b, "sub");
  Node n;
  n.op = Op::Sub;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  const double* y = val(nodes_[b.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = x[i] - y[i];
  return v;
}

Var Tape::scale(Var a, double factor) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  n.factor = factor;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = factor * x[i];
  return v;
}

Var Tape::scale_by(Var s, Var vec) {
  require_scalar(s, "scale_by");
  Node n;
  n.op = Op::ScaleBy;
  n.a = s.id;
  n.b = vec.id;
  n.rows = node(vec).rows;
  n.cols = node(vec).cols;
  const Var v = push(n);
  const double k = values_[nodes_[s.id].value_offset];
  const double* x = val(nodes_[vec.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = k * x[i];
  return v;
}

Var Tape::mul(Var a, Var b) {
  require_same_size(a, b, "mul");
  Node n;
  n.op = Op::Mul;
  n.a = a.id;
  n.b = b.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  const double* y = val(nodes_[b.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = x[i] * y[i];
  return v;
}

Var Tape::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = std::tanh(x[i]);
  return v;
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = a.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return v;
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.id;
  n.rows = node(a).rows;
  n.cols = node(a).cols;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows * n.cols; ++i) {
    note_kink(x[i]);
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return v;
}

// --- reductions and products -------------------------------------------------

Var Tape::dot(Var a, Var b) {
  require_same_size(a, b, "dot");
  Node n;
  n.op = Op::Dot;
  n.a = a.id;
  n.b = b.id;
  n.rows = n.cols = 1;
  const Var v = push(n);
  const auto& na = nodes_[a.id];
  const double* x = val(na);
  const double* y = val(nodes_[b.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < na.rows * na.cols; ++i) s += x[i] * y[i];
  values_[nodes_[v.id].value_offset] = s;
  return v;
}

Var Tape::matvec(Var m, Var x) {
  const auto& nm = node(m);
  const auto& nx = node(x);
  if (nm.cols != nx.rows * nx.cols) {
    shape_error("matvec: matrix has " + std::to_string(nm.cols) + " columns, vector " +
                std::to_string(nx.rows * nx.cols) + " entries");
  }
  Node n;
  n.op = Op::MatVec;
  n.a = m.id;
  n.b = x.id;
  n.rows = nm.rows;
  n.cols = 1;
  const std::size_t cols = nm.cols;
  const Var v = push(n);
  const double* w = val(nodes_[m.id]);
  const double* y = val(nodes_[x.id]);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < n.rows; ++i) {
    double s = 0.0;
    const double* wi = w + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += wi[j] * y[j];
    out[i] = s;
  }
  return v;
}

Var Tape::concat(Var a, Var b) {
  Node n;
  n.op = Op::Concat;
  n.a = a.id;
  n.b = b.id;
  const std::size_t la = size(a);
  const std::size_t lb = size(b);
  n.rows = la + lb;
  n.cols = 1;
  const Var v = push(n);
  double* out = val(nodes_[v.id]);
  std::copy_n(val(nodes_[a.id]), la, out);
  std::copy_n(val(nodes_[b.id]), lb, out + la);
  return v;
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  if (offset + length > size(a)) shape_error("slice past the end");
  Node n;
  n.op = Op::Slice;
  n.a = a.id;
  n.rows = length;
  n.cols = 1;
  n.factor = static_cast<double>(offset);
  const Var v = push(n);
  std::copy_n(val(nodes_[a.id]) + offset, length, val(nodes_[v.id]));
  return v;
}

Var Tape::element(Var vec, std::size_t i) { return slice(vec, i, 1); }

Var Tape::l1_norm(Var a) {
  Node n;
  n.op = Op::L1Norm;
  n.a = a.id;
  n.rows = n.cols = 1;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < size(a); ++i) {
    note_kink(x[i]);
    s += std::abs(x[i]);
  }
  values_[nodes_[v.id].value_offset] = s;
  return v;
}

Var Tape::sum_squares(Var a) {
  Node n;
  n.op = Op::SumSquares;
  n.a = a.id;
  n.rows = n.cols = 1;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < size(a); ++i) s += x[i] * x[i];
  values_[nodes_[v.id].value_offset] = s;
  return v;
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  n.rows = n.cols = 1;
  const Var v = push(n);
  const double* x = val(nodes_[a.id]);
  double s = 0.0;
  for (std::size_t i = 0; i < size(a); ++i) s += x[i];
  values_[nodes_[v.id].value_offset] = s;
  return v;
}

Var Tape::stack(std::span<const Var> scalars) {
  for (auto s : scalars) require_scalar(s, "stack");
  Node n;
  n.op = Op::Stack;
  n.list_offset = static_cast<std::uint32_t>(ids_.size());
  n.list_length = static_cast<std::uint32_t>(scalars.size());
  n.rows = scalars.size();
  n.cols = 1;
  for (auto s : scalars) ids_.push_back(s.id);
  const Var v = push(n);
  double* out = val(nodes_[v.id]);
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = values_[nodes_[scalars[i].id].value_offset];
  return v;
}

Var Tape::add_n(std::span<const Var> terms) {
  if (terms.empty()) shape_error("add_n of nothing");
  for (auto t : terms) require_same_size(terms[0], t, "add_n");
  Node n;
  n.op = Op::AddN;
  n.list_offset = static_cast<std::uint32_t>(ids_.size());
  n.list_length = static_cast<std::uint32_t>(terms.size());
  n.rows = node(terms[0]).rows;
  n.cols = node(terms[0]).cols;
  for (auto t : terms) ids_.push_back(t.id);
  const Var v = push(n);
  double* out = val(nodes_[v.id]);
  const std::size_t len = n.rows * n.cols;
  for (auto t : terms) {
    const double* x = val(nodes_[t.id]);
    for (std::size_t i = 0; i < len; ++i) out[i] += x[i];
  }
  return v;
}

Var Tape::masked_softmax(Var scores, std::span<const std::uint8_t> mask) {
  const std::size_t len = size(scores);
  if (mask.size() != len) shape_error("masked_softmax: mask length differs from scores");
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    shape_error("masked_softmax over a fully masked list");
  }
  Node n;
  n.op = Op::MaskedSoftmax;
  n.a = scores.id;
  n.mask_offset = static_cast<std::uint32_t>(masks_.size());
  n.rows = len;
  n.cols = 1;
  masks_.insert(masks_.end(), mask.begin(), mask.end());
  const Var v = push(n);
  const double* x = val(nodes_[scores.id]);
  double* out = val(nodes_[v.id]);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < len; ++i) {
    if (mask[i]) peak = std::max(peak, x[i]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    out[i] = mask[i] ? std::exp(x[i] - peak) : 0.0;
    total += out[i];
  }
  for (std::size_t i = 0; i < len; ++i) out[i] /= total;
  return v;
}

Var Tape::masked_mean(std::span<const Var> vectors, std::span<const std::uint8_t> mask) {
  if (vectors.empty()) shape_error("masked_mean of nothing");
  if (mask.size() != vectors.size()) shape_error("masked_mean: mask length differs from list");
  for (auto t : vectors) require_same_size(vectors[0], t, "masked_mean");
  Node n;
  n.op = Op::MaskedMean;
  n.list_offset = static_cast<std::uint32_t>(ids_.size());
  n.list_length = static_cast<std::uint32_t>(vectors.size());
  n.rows = size(vectors[0]);
  n.cols = 1;
  n.mask_offset = static_cast<std::uint32_t>(masks_.size());
  for (auto t : vectors) ids_.push_back(t.id);
  masks_.insert(masks_.end(), mask.begin(), mask.end());
  const std::size_t valid = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
  n.factor = valid == 0 ? 0.0 : 1.0 / static_cast<double>(valid);
  const Var v = push(n);
  double* out = val(nodes_[v.id]);
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (!mask[k]) continue;
    const double* x = val(nodes_[vectors[k].id]);
    for (std::size_t i = 0; i < n.rows; ++i) out[i] += x[i];
  }
  for (std::size_t i = 0; i < n.rows; ++i) out[i] *= n.factor;
  return v;
}

// --- backward ---------------------------------------------------------------

void Tape::backward(Var loss) { run_backward(loss); }

void Tape::backward(Var loss, GradientBuffer& sink) {
  run_backward(loss);
  for (const auto& n : nodes_) {
    if (n.op != Op::ParamLeaf) continue;
    sink.add(n.param, n.param_offset, {grads_.data() + n.value_offset, n.rows * n.cols});
  }
}

void Tape::run_backward(Var loss) {
  require_scalar(loss, "backward");
  grads_.assign(values_.size(), 0.0);
  grads_[node(loss).value_offset] = 1.0;

  for (std::size_t k = loss.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    const std::size_t len = n.rows * n.cols;
    const double* g = grads_.data() + n.value_offset;
    const double* y = values_.data() + n.value_offset;
    double* ga = grads_.data() + nodes_[n.a].value_offset;
    double* gb = grads_.data() + nodes_[n.b].value_offset;
    const double* xa = values_.data() + nodes_[n.a].value_offset;
    const double* xb = values_.data() + nodes_[n.b].value_offset;

    switch (n.op) {
      case Op::Leaf:
      case Op::ParamLeaf:
        break;
      case Op::Add:
        for (std::size_t i = 0; i < len; ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < len; ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      case Op::Scale:
        for (std::size_t i = 0; i < len; ++i) ga[i] += n.factor * g[i];
        break;
      case Op::ScaleBy: {
        double gs = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          gs += g[i] * xb[i];
          gb[i] += xa[0] * g[i];
        }
        ga[0] += gs;
        break;
      }
      case Op::Mul:
        for (std::size_t i = 0; i < len; ++i) {
          ga[i] += g[i] * xb[i];
          gb[i] += g[i] * xa[i];
        }
        break;
      case Op::Dot: {
        const std::size_t m = nodes_[n.a].rows * nodes_[n.a].cols;
        for (std::size_t i = 0; i < m; ++i) {
          ga[i] += g[0] * xb[i];
          gb[i] += g[0] * xa[i];
        }
        break;
      }
      case Op::MatVec: {
        const std::size_t cols = nodes_[n.a].cols;
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double gi = g[i];
          if (gi == 0.0) continue;
          double* gw = ga + i * cols;
          const double* wi = xa + i * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            gw[j] += gi * xb[j];
            gb[j] += gi * wi[j];
          }
        }
        break;
      }
      case Op::Concat: {
        const std::size_t la = nodes_[n.a].rows * nodes_[n.a].cols;
        for (std::size_t i = 0; i < la; ++i) ga[i] += g[i];
        for (std::size_t i = la; i < len; ++i) gb[i - la] += g[i];
        break;
      }
      case Op::Slice: {
        const auto offset = static_cast<std::size_t>(n.factor);
        for (std::size_t i = 0; i < len; ++i) ga[offset + i] += g[i];
        break;
      }
      case Op::Tanh:
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case Op::Sigmoid:
        for (std::size_t i = 0; i < len; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Op::Relu:
        for (std::size_t i = 0; i < len; ++i) {
          if (xa[i] > 0.0) ga[i] += g[i];
        }
        break;
      case Op::L1Norm: {
        const std::size_t m = nodes_[n.a].rows * nodes_[n.a].cols;
        for (std::size_t i = 0; i < m; ++i) {
          if (xa[i] > 0.0) ga[i] += g[0];
          else if (xa[i] < 0.0) ga[i] -= g[0];
        }
        break;
      }
      case Op::SumSquares: {
        const std::size_t m = nodes_[n.a].rows * nodes_[n.a].cols;
        for (std::size_t i = 0; i < m; ++i) ga[i] += 2.0 * xa[i] * g[0];
        break;
      }
      case Op::Sum: {
        const std::size_t m = nodes_[n.a].rows * nodes_[n.a].cols;
        for (std::size_t i = 0; i < m; ++i) ga[i] += g[0];
        break;
      }
      case Op::Stack:
        for (std::size_t i = 0; i < n.list_length; ++i) {
          grads_[nodes_[ids_[n.list_offset + i]].value_offset] += g[i];
        }
        break;
      case Op::AddN:
        for (std::size_t t = 0; t < n.list_length; ++t) {
          double* gt = grads_.data() + nodes_[ids_[n.list_offset + t]].value_offset;
          for (std::size_t i = 0; i < len; ++i) gt[i] += g[i];
        }
        break;
      case Op::MaskedSoftmax: {
        const std::uint8_t* mask = masks_.data() + n.mask_offset;
        double inner = 0.0;
        for (std::size_t i = 0; i < len; ++i) inner += g[i] * y[i];
        for (std::size_t i = 0; i < len; ++i) {
          if (mask[i]) ga[i] += y[i] * (g[i] - inner);
        }
        break;
      }
      case Op::MaskedMean: {
        const std::uint8_t* mask = masks_.data() + n.mask_offset;
        for (std::size_t t = 0; t < n.list_length; ++t) {
          if (!mask[t]) continue;
          double* gt = grads_.data() + nodes_[ids_[n.list_offset + t]].value_offset;
          for (std::size_t i = 0; i < len; ++i) gt[i] += n.factor * g[i];
        }
        break;
      }
    }
  }
}

// --- finite differences -----------------------------------------------------

FiniteDiffReport finite_diff_check(const Objective& objective, ParamStore params,
                                   const FiniteDiffOptions& options) {
  FiniteDiffReport report;
  Rng rng(options.seed);
  const auto dims = params.dims();

  // Move off any kink so that +-step never crosses one.
  double margin = 0.0;
  GradientBuffer analytic(dims);
  for (;;) {
    analytic.clear();
    objective.evaluate(params, &analytic, &margin);
    if (margin > std::max(10.0 * options.step, options.kink_clearance)) break;
    if (++report.kink_retries > 50) fail(ErrorKind::Numeric, "could not move away from a kink");
    for (auto p : kAllParams) {
      for (auto& x : params.data(p)) x += uniform_real(rng, -1e-3, 1e-3);
    }
  }

  for (auto p : kAllParams) {
    if (!params.has(p)) continue;
    ParamCheck check{p};
    auto data = params.data(p);
    std::vector<std::size_t> entries(data.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (options.max_entries_per_param && entries.size() > options.max_entries_per_param) {
      shuffle(std::span<std::size_t>(entries), rng);
      entries.resize(options.max_entries_per_param);
    }
    const auto grad = analytic.data(p);
    for (auto i : entries) {
      const double saved = data[i];
      double unused = 0.0;
      data[i] = saved + options.step;
      const double plus = objective.evaluate(params, nullptr, &unused);
      data[i] = saved - options.step;
      const double minus = objective.evaluate(params, nullptr, &unused);
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double abs_err = std::abs(grad[i] - numeric);
      const double rel = abs_err / std::max({std::abs(grad[i]), std::abs(numeric), options.floor});
      check.max_abs_error = std::max(check.max_abs_error, abs_err);
      check.max_relative_error = std::max(check.max_relative_error, rel);
      ++check.checked;
    }
    report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
    report.params.push_back(check);
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace lankgc::ad
