#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass. Each node owns its
// value and, once reached during backward, its gradient. Parameters are
// leaves whose gradient accumulates straight into Parameter::grad, so a
// parameter shared by many subgraphs receives the sum of all contributions.
//
// Every tensor is two-dimensional; vectors are 1 x n rows.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "triad/error.hpp"
#include "triad/rng.hpp"

namespace triad::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_)
      throw ModelError("tensor value count " + std::to_string(data_.size()) + " does not match shape " + shape_str());
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_str() const { return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]"; }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

// A trainable tensor plus its Adam moment buffers.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  Parameter(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.rows(), value.cols()),
        m(value.rows(), value.cols()),
        v(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t) { return push(std::move(t), false, nullptr); }

  // Repeated calls for one parameter return the same leaf.
  Var parameter(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var{this, it->second};
    Var v = push(p.value, true, nullptr);
    nodes_[v.id].param = &p;
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  Var push(Tensor value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer of a node, created zeroed on first access.
  Tensor& grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.param) return n.param->grad;
    if (!n.has_grad) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  bool reached(std::uint32_t id) const { return nodes_[id].has_grad || nodes_[id].param; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  // reverse order. The loss must be 1 x 1.
  void backward(Var loss) {
    if (loss.tape != this) throw ModelError("backward: loss belongs to another tape");
    const Tensor& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw ModelError("backward: loss must be 1x1, got " + lv.shape_str());
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.has_grad) n.backward(*this, static_cast<std::uint32_t>(i));
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ModelError(op + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

inline Tape& common_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) throw ModelError(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

// Broadcast one operand dimension against the output dimension.
inline bool broadcastable(std::size_t d, std::size_t out) { return d == out || d == 1; }

template <typename Forward, typename GradA, typename GradB>
Var broadcast_binary(Var a, Var b, const char* op, Forward fwd, GradA ga, GradB gb) {
  Tape& tape = common_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t r = std::max(av.rows(), bv.rows());
  const std::size_t c = std::max(av.cols(), bv.cols());
  if (!broadcastable(av.rows(), r) || !broadcastable(av.cols(), c) || !broadcastable(bv.rows(), r) ||
      !broadcastable(bv.cols(), c))
    shape_error(op, av, bv);
  Tensor out(r, c);
  auto ia = [&av](std::size_t i, std::size_t j) {
    return (av.rows() == 1 ? 0 : i) * av.cols() + (av.cols() == 1 ? 0 : j);
  };
  auto ib = [&bv](std::size_t i, std::size_t j) {
    return (bv.rows() == 1 ? 0 : i) * bv.cols() + (bv.cols() == 1 ? 0 : j);
  };
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = fwd(av[ia(i, j)], bv[ib(i, j)]);
  const bool needs = tape.requires_grad(a) || tape.requires_grad(b);
  const std::uint32_t aid = a.id, bid = b.id;
  return tape.push(std::move(out), needs, [aid, bid, ga, gb](Tape& t, std::uint32_t self) {
    const Tensor& A = t.value(aid);
    const Tensor& B = t.value(bid);
    const Tensor& G = t.grad(self);
    const std::size_t rr = G.rows(), cc = G.cols();
    auto ia2 = [&A](std::size_t i, std::size_t j) {
      return (A.rows() == 1 ? 0 : i) * A.cols() + (A.cols() == 1 ? 0 : j);
    };
    auto ib2 = [&B](std::size_t i, std::size_t j) {
      return (B.rows() == 1 ? 0 : i) * B.cols() + (B.cols() == 1 ? 0 : j);
    };
    if (t.requires_grad(aid)) {
      Tensor& GA = t.grad(aid);
      for (std::size_t i = 0; i < rr; ++i)
        for (std::size_t j = 0; j < cc; ++j) GA[ia2(i, j)] += G(i, j) * ga(A[ia2(i, j)], B[ib2(i, j)]);
    }
    if (t.requires_grad(bid)) {
      Tensor& GB = t.grad(bid);
      for (std::size_t i = 0; i < rr; ++i)
        for (std::size_t j = 0; j < cc; ++j) GB[ib2(i, j)] += G(i, j) * gb(A[ia2(i, j)], B[ib2(i, j)]);
    }
  });
}

template <typename Forward, typename GradFromOutput>
Var unary(Var a, Forward fwd, GradFromOutput grad_from_output) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid, grad_from_output](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const Tensor& Y = t.value(self);
    const Tensor& G = t.grad(self);
    Tensor& GA = t.grad(aid);
    for (std::size_t i = 0; i < Y.size(); ++i) GA[i] += G[i] * grad_from_output(Y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (rank-2 broadcasting: a dimension of 1 stretches)

inline Var add(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double y) { return 1.0 - y * y; });
}

inline double sigmoid_value(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var sigmoid(Var a) {
  return detail::unary(a, sigmoid_value, [](double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------
// Linear algebra and reshaping

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::common_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) detail::shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::uint32_t aid = a.id, bid = b.id;
  const bool needs = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(out), needs, [aid, bid](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    if (t.requires_grad(aid)) as_matrix(t.grad(aid)).noalias() += as_matrix(G) * as_matrix(t.value(bid)).transpose();
    if (t.requires_grad(bid)) as_matrix(t.grad(bid)).noalias() += as_matrix(t.value(aid)).transpose() * as_matrix(G);
  });
}

inline Var transpose(Var a) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.cols(), av.rows());
  as_matrix(out) = as_matrix(av).transpose();
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid](Tape& t, std::uint32_t self) {
    if (t.requires_grad(aid)) as_matrix(t.grad(aid)) += as_matrix(t.grad(self)).transpose();
  });
}

// Concatenation along columns (axis 1) or rows (axis 0).
inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ModelError("concat: no inputs");
  Tape& tape = *parts.front().tape;
  std::size_t rows = 0, cols = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (p.tape != &tape) throw ModelError("concat: operands on different tapes");
    const Tensor& v = p.value();
    if (axis == 1) {
      if (rows == 0 && cols == 0) rows = v.rows();
      if (v.rows() != rows) detail::shape_error("concat(axis=1)", parts.front().value(), v);
      cols += v.cols();
    } else {
      if (rows == 0 && cols == 0) cols = v.cols();
      if (v.cols() != cols) detail::shape_error("concat(axis=0)", parts.front().value(), v);
      rows += v.rows();
    }
    needs = needs || tape.requires_grad(p);
  }
  Tensor out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    ids.push_back(p.id);
    if (axis == 1) {
      for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * v.cols(), v.cols(), out.data() + r * cols + offset);
      offset += v.cols();
    } else {
      std::copy_n(v.data(), v.size(), out.data() + offset * cols);
      offset += v.rows();
    }
  }
  return tape.push(std::move(out), needs, [ids = std::move(ids), axis](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    std::size_t off = 0;
    for (std::uint32_t id : ids) {
      const Tensor& v = t.value(id);
      if (t.requires_grad(id)) {
        Tensor& g = t.grad(id);
        if (axis == 1) {
          for (std::size_t r = 0; r < v.rows(); ++r)
            for (std::size_t c = 0; c < v.cols(); ++c) g(r, c) += G(r, off + c);
        } else {
          for (std::size_t i = 0; i < v.size(); ++i) g[i] += G[off * G.cols() + i];
        }
      }
      off += axis == 1 ? v.cols() : v.rows();
    }
  });
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

// Elementwise sum of equal-shape tensors.
inline Var sum_n(std::span<const Var> parts) {
  if (parts.empty()) throw ModelError("sum_n: no inputs");
  Tape& tape = *parts.front().tape;
  const Tensor& first = parts.front().value();
  Tensor out(first.rows(), first.cols());
  bool needs = false;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (!v.same_shape(first)) detail::shape_error("sum_n", first, v);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
    needs = needs || tape.requires_grad(p);
    ids.push_back(p.id);
  }
  return tape.push(std::move(out), needs, [ids = std::move(ids)](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    for (std::uint32_t id : ids)
      if (t.requires_grad(id)) {
        Tensor& g = t.grad(id);
        for (std::size_t i = 0; i < G.size(); ++i) g[i] += G[i];
      }
  });
}

inline Var sum_n(std::initializer_list<Var> parts) { return sum_n(std::span<const Var>(parts.begin(), parts.size())); }

inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  if (begin + count > av.cols())
    throw ModelError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") outside " + av.shape_str());
  Tensor out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r) std::copy_n(av.data() + r * av.cols() + begin, count, out.data() + r * count);
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid, begin](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const Tensor& G = t.grad(self);
    Tensor& g = t.grad(aid);
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t c = 0; c < G.cols(); ++c) g(r, begin + c) += G(r, c);
  });
}

// out[i] = a[indices[i]]; the backward pass scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  Tensor out(indices.size(), av.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows())
      throw ModelError("gather_rows: index " + std::to_string(indices[i]) + " outside " + av.shape_str());
    std::copy_n(av.data() + indices[i] * av.cols(), av.cols(), out.data() + i * av.cols());
  }
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a),
                   [aid, indices = std::move(indices)](Tape& t, std::uint32_t self) {
                     if (!t.requires_grad(aid)) return;
                     const Tensor& G = t.grad(self);
                     Tensor& g = t.grad(aid);
                     const std::size_t c = G.cols();
                     for (std::size_t i = 0; i < indices.size(); ++i) {
                       double* dst = g.data() + indices[i] * c;
                       const double* src = G.data() + i * c;
                       for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                     }
                   });
}

// ---------------------------------------------------------------------------
// Normalization, pooling, regularization, loss

// Row-wise softmax. `mask` (same shape, or 1 x cols) marks admissible
// columns with 1; excluded columns get probability 0.
inline Var softmax(Var a, const Tensor* mask = nullptr) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  if (mask && !(mask->cols() == av.cols() && (mask->rows() == 1 || mask->rows() == av.rows())))
    detail::shape_error("softmax(mask)", av, *mask);
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto allowed = [&](std::size_t c) { return !mask || (*mask)(mask->rows() == 1 ? 0 : r, c) != 0.0; };
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < av.cols(); ++c)
      if (allowed(c)) mx = std::max(mx, av(r, c));
    if (mx == -std::numeric_limits<double>::infinity())
      throw ModelError("softmax: row " + std::to_string(r) + " has no admissible entries");
    double z = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) {
      out(r, c) = allowed(c) ? std::exp(av(r, c) - mx) : 0.0;
      z += out(r, c);
    }
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) /= z;
  }
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const Tensor& Y = t.value(self);
    const Tensor& G = t.grad(self);
    Tensor& g = t.grad(aid);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < Y.cols(); ++c) dot += G(r, c) * Y(r, c);
      for (std::size_t c = 0; c < Y.cols(); ++c) g(r, c) += Y(r, c) * (G(r, c) - dot);
    }
  });
}

// Mean over the rows flagged in `row_mask`; returns 1 x cols.
inline Var masked_mean(Var a, std::span<const std::uint8_t> row_mask) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  if (row_mask.size() != av.rows())
    throw ModelError("masked_mean: mask length " + std::to_string(row_mask.size()) + " vs " + av.shape_str());
  const double count = static_cast<double>(std::count(row_mask.begin(), row_mask.end(), std::uint8_t{1}));
  if (count == 0) throw ModelError("masked_mean: every row is masked");
  Tensor out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    if (row_mask[r])
      for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c) / count;
  const std::uint32_t aid = a.id;
  std::vector<std::uint8_t> m(row_mask.begin(), row_mask.end());
  return tape.push(std::move(out), tape.requires_grad(a), [aid, m = std::move(m), count](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const Tensor& G = t.grad(self);
    Tensor& g = t.grad(aid);
    for (std::size_t r = 0; r < m.size(); ++r)
      if (m[r])
        for (std::size_t c = 0; c < G.cols(); ++c) g(r, c) += G[c] / count;
  });
}

// Rows are N consecutive blocks of `block` rows; block i is averaged over its
// flagged rows (row_mask has N * block entries). Returns N x cols.
inline Var block_masked_mean(Var a, std::size_t block, std::span<const std::uint8_t> row_mask) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  if (block == 0 || av.rows() % block != 0 || row_mask.size() != av.rows())
    throw ModelError("block_masked_mean: block " + std::to_string(block) + " does not tile " + av.shape_str());
  const std::size_t n = av.rows() / block;
  std::vector<double> counts(n, 0.0);
  for (std::size_t r = 0; r < av.rows(); ++r) counts[r / block] += row_mask[r];
  for (std::size_t i = 0; i < n; ++i)
    if (counts[i] == 0) throw ModelError("block_masked_mean: block " + std::to_string(i) + " fully masked");
  Tensor out(n, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    if (row_mask[r])
      for (std::size_t c = 0; c < av.cols(); ++c) out(r / block, c) += av(r, c) / counts[r / block];
  const std::uint32_t aid = a.id;
  std::vector<std::uint8_t> m(row_mask.begin(), row_mask.end());
  return tape.push(std::move(out), tape.requires_grad(a),
                   [aid, block, m = std::move(m), counts = std::move(counts)](Tape& t, std::uint32_t self) {
                     if (!t.requires_grad(aid)) return;
                     const Tensor& G = t.grad(self);
                     Tensor& g = t.grad(aid);
                     for (std::size_t r = 0; r < m.size(); ++r)
                       if (m[r])
                         for (std::size_t c = 0; c < G.cols(); ++c) g(r, c) += G(r / block, c) / counts[r / block];
                   });
}

// out = keep * a + (1 - keep) * b, keep being a constant rows x 1 column of
// 0/1 flags. Used for masked recurrent state carry-over.
inline Var blend_rows(const Tensor& keep, Var a, Var b) {
  Tape& tape = detail::common_tape(a, b, "blend_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv) || keep.rows() != av.rows() || keep.cols() != 1) detail::shape_error("blend_rows", av, bv);
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const Tensor& src = keep[r] != 0.0 ? av : bv;
    std::copy_n(src.data() + r * av.cols(), av.cols(), out.data() + r * av.cols());
  }
  const std::uint32_t aid = a.id, bid = b.id;
  const bool needs = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(out), needs, [aid, bid, keep](Tape& t, std::uint32_t self) {
    const Tensor& G = t.grad(self);
    for (std::size_t r = 0; r < G.rows(); ++r) {
      const std::uint32_t target = keep[r] != 0.0 ? aid : bid;
      if (!t.requires_grad(target)) continue;
      Tensor& g = t.grad(target);
      for (std::size_t c = 0; c < G.cols(); ++c) g(r, c) += G(r, c);
    }
  });
}

// Inverted dropout: identity unless training; survivors scale by 1/(1-rate).
inline Var dropout(Var a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ModelError("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  Tensor keep(av.rows(), av.cols());
  const double s = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = rng.uniform() < rate ? 0.0 : s;
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * keep[i];
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid, keep = std::move(keep)](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const Tensor& G = t.grad(self);
    Tensor& g = t.grad(aid);
    for (std::size_t i = 0; i < G.size(); ++i) g[i] += G[i] * keep[i];
  });
}

// Sum of all entries, 1 x 1.
inline Var sum(Var a) {
  Tape& tape = *a.tape;
  const Tensor& av = a.value();
  Tensor out(1, 1, std::accumulate(av.values().begin(), av.values().end(), 0.0));
  const std::uint32_t aid = a.id;
  return tape.push(std::move(out), tape.requires_grad(a), [aid](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(aid)) return;
    const double g0 = t.grad(self)[0];
    Tensor& g = t.grad(aid);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0;
  });
}

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross-entropy. Probabilities are clamped to
// [1e-7, 1 - 1e-7]; the gradient is taken at the clamped point.
inline Var bce_loss(Var predictions, const Tensor& labels) {
  Tape& tape = *predictions.tape;
  const Tensor& p = predictions.value();
  if (!p.same_shape(labels)) detail::shape_error("bce_loss", p, labels);
  if (p.size() == 0) throw ModelError("bce_loss: empty input");
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
    total -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  const std::uint32_t pid = predictions.id;
  return tape.push(Tensor(1, 1, total / n), tape.requires_grad(predictions),
                   [pid, labels, n](Tape& t, std::uint32_t self) {
                     if (!t.requires_grad(pid)) return;
                     const double g0 = t.grad(self)[0];
                     const Tensor& P = t.value(pid);
                     Tensor& g = t.grad(pid);
                     for (std::size_t i = 0; i < P.size(); ++i) {
                       const double q = std::clamp(P[i], kBceClamp, 1.0 - kBceClamp);
                       g[i] += g0 * (q - labels[i]) / (q * (1.0 - q)) / n;
                     }
                   });
}

}  // namespace triad::ad
