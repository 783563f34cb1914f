// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/diffcore/tensor.hpp"

namespace fairprog {

enum class OpKind {
  parameter,
  constant,
  matmul,
  add,
  sub,
  mul,
  scale,
  relu,
  tanh,
  sigmoid,
  softmax,
  concat,
  slice,
  take_rows,
  reshape,
  mean,
  sum,
  clamp,
  straight_through,
  cross_entropy,
  rbf_kernel,
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph
/// that created it is alive.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

/// Per-node attributes for the ops that need them.
struct OpAttrs {
  double scalar = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> indices;
};

/// Tape of recorded operations. Nodes are appended in creation order, which
/// is a topological order, so backward is a single reverse sweep.
///
/// A graph is built and differentiated on one thread; separate graphs are
/// independent.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Trainable leaf. Always receives a gradient (zero if unreachable).
  Var parameter(Tensor value) { return record(OpKind::parameter, {}, std::move(value), {}); }

  /// Non-trainable leaf (data, frozen weights).
  Var constant(Tensor value) { return record(OpKind::constant, {}, std::move(value), {}); }

  const Tensor& value(Var v) const { return node(v).value; }
  OpKind kind(Var v) const { return node(v).kind; }
  bool requires_grad(Var v) const { return node(v).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() target w.r.t. v.
  const Tensor& grad(Var v) const {
    const Node& n = node(v);
    if (!n.needs_grad) {
      throw std::logic_error("graph: node " + std::to_string(v.id) + " does not require grad");
    }
    if (!has_grads_) throw std::logic_error("graph: backward() has not been called");
    return n.grad;
  }

  void backward(Var loss);

  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, OpAttrs attrs) {
    bool needs = kind == OpKind::parameter;
    for (std::size_t in : inputs) needs = needs || nodes_[in].needs_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), Tensor(), needs, std::move(attrs)});
    has_grads_ = false;
    return Var{this, nodes_.size() - 1};
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool needs_grad;
    OpAttrs attrs;
  };

  const Node& node(Var v) const {
    if (v.graph != this || v.id >= nodes_.size()) {
      throw std::logic_error("graph: variable does not belong to this graph");
    }
    return nodes_[v.id];
  }

  void propagate(std::size_t id);

  // deque keeps references returned by value() valid as the tape grows
  std::deque<Node> nodes_;
  bool has_grads_ = false;
};

namespace detail {

inline Graph& same_graph(Var a, Var b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw std::logic_error(std::string(op) + ": operands from different graphs");
  }
  return *a.graph;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

inline void add_into(Tensor& acc, const Tensor& t, double factor = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += factor * t[i];
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "matmul");
  return g.record(OpKind::matmul, {a.id, b.id}, matmul(g.value(a), g.value(b)), {});
}

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "add");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  detail::require_same_shape(av, bv, "add");
  Tensor out = av;
  detail::add_into(out, bv);
  return g.record(OpKind::add, {a.id, b.id}, std::move(out), {});
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "sub");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  detail::require_same_shape(av, bv, "sub");
  Tensor out = av;
  detail::add_into(out, bv, -1.0);
  return g.record(OpKind::sub, {a.id, b.id}, std::move(out), {});
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "mul");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  detail::require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record(OpKind::mul, {a.id, b.id}, std::move(out), {});
}

inline Var scale(Var a, double factor) {
  Graph& g = *a.graph;
  OpAttrs attrs;
  attrs.scalar = factor;
  return g.record(OpKind::scale, {a.id}, detail::map(g.value(a), [factor](double x) { return factor * x; }),
                  std::move(attrs));
}

inline Var relu(Var a) {
  Graph& g = *a.graph;
  return g.record(OpKind::relu, {a.id}, detail::map(g.value(a), [](double x) { return x > 0 ? x : 0.0; }), {});
}

inline Var tanh(Var a) {
  Graph& g = *a.graph;
  return g.record(OpKind::tanh, {a.id}, detail::map(g.value(a), [](double x) { return std::tanh(x); }), {});
}

inline Var sigmoid(Var a) {
  Graph& g = *a.graph;
  return g.record(OpKind::sigmoid, {a.id}, detail::map(g.value(a), detail::sigmoid), {});
}

/// Row-wise softmax.
inline Var softmax(Var a) {
  Graph& g = *a.graph;
  return g.record(OpKind::softmax, {a.id}, softmax_rows(g.value(a)), {});
}

/// Column-wise concatenation of two matrices with equal row counts.
inline Var concat(Var a, Var b) {
  Graph& g = detail::same_graph(a, b, "concat");
  detail::require_matrix(g.value(a), "concat");
  detail::require_matrix(g.value(b), "concat");
  OpAttrs attrs;
  attrs.begin = g.value(a).cols();
  return g.record(OpKind::concat, {a.id, b.id}, hconcat(g.value(a), g.value(b)), std::move(attrs));
}

/// Columns [begin, end) of a matrix.
inline Var slice(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Tensor& av = g.value(a);
  detail::require_matrix(av, "slice");
  if (begin >= end || end > av.cols()) {
    throw ShapeError("slice: columns [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_string(av.shape()));
  }
  Tensor out({av.rows(), end - begin});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  }
  OpAttrs attrs;
  attrs.begin = begin;
  attrs.end = end;
  return g.record(OpKind::slice, {a.id}, std::move(out), std::move(attrs));
}

/// Gathers rows of a matrix by index.
inline Var take_rows(Var a, std::vector<std::size_t> rows) {
  Graph& g = *a.graph;
  detail::require_matrix(g.value(a), "take_rows");
  Tensor out = take_rows(g.value(a), rows);
  OpAttrs attrs;
  attrs.indices = std::move(rows);
  return g.record(OpKind::take_rows, {a.id}, std::move(out), std::move(attrs));
}

/// Same values, new shape.
inline Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  const Tensor& av = g.value(a);
  if (shape_size(shape) != av.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(av.shape()) + " as " + shape_string(shape));
  }
  return g.record(OpKind::reshape, {a.id}, av.reshaped(std::move(shape)), {});
}

inline Var sum(Var a) {
  Graph& g = *a.graph;
  double total = 0.0;
  for (double v : g.value(a).values()) total += v;
  return g.record(OpKind::sum, {a.id}, Tensor::scalar(total), {});
}

inline Var mean(Var a) {
  Graph& g = *a.graph;
  const Tensor& av = g.value(a);
  double total = 0.0;
  for (double v : av.values()) total += v;
  return g.record(OpKind::mean, {a.id}, Tensor::scalar(total / static_cast<double>(av.size())), {});
}

/// Clamps into [lo, hi]; the gradient passes wherever the input lies inside
/// the closed interval.
inline Var clamp(Var a, double lo, double hi) {
  Graph& g = *a.graph;
  OpAttrs attrs;
  attrs.lo = lo;
  attrs.hi = hi;
  return g.record(OpKind::clamp, {a.id},
                  detail::map(g.value(a), [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                  std::move(attrs));
}

/// Forward: one-hot of each row's argmax (ties go to the lowest index).
/// Backward: identity.
inline Var straight_through(Var a) {
  Graph& g = *a.graph;
  const Tensor& av = g.value(a);
  Tensor out(av.shape());
  const auto best = argmax_rows(av);
  for (std::size_t i = 0; i < av.rows(); ++i) out[i * av.cols() + best[i]] = 1.0;
  return g.record(OpKind::straight_through, {a.id}, std::move(out), {});
}

/// Mean over rows of -log softmax(logits)[label].
inline Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Graph& g = *logits.graph;
  const Tensor& lv = g.value(logits);
  detail::require_matrix(lv, "cross_entropy");
  if (lv.cols() < 2) throw ShapeError("cross_entropy: need at least 2 classes, got " + shape_string(lv.shape()));
  if (labels.size() != lv.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(lv.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    if (labels[i] >= lv.cols()) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) + " out of range [0, " +
                              std::to_string(lv.cols()) + ")");
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < lv.cols(); ++j) {
      if (lv(i, j) > lv(i, best)) best = j;
    }
    // log-sum-exp split as max + log1p(rest) keeps tiny losses accurate
    double rest = 0.0;
    for (std::size_t j = 0; j < lv.cols(); ++j) {
      if (j != best) rest += std::exp(lv(i, j) - lv(i, best));
    }
    total += (lv(i, best) - lv(i, labels[i])) + std::log1p(rest);
  }
  OpAttrs attrs;
  attrs.indices.assign(labels.begin(), labels.end());
  return g.record(OpKind::cross_entropy, {logits.id}, Tensor::scalar(total / static_cast<double>(lv.rows())),
                  std::move(attrs));
}

/// Gaussian kernel matrix K[i][j] = exp(-|a_i - b_j|^2 / (2 bandwidth^2)).
inline Var rbf_kernel(Var a, Var b, double bandwidth) {
  Graph& g = detail::same_graph(a, b, "rbf_kernel");
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  detail::require_matrix(av, "rbf_kernel");
  detail::require_matrix(bv, "rbf_kernel");
  if (av.cols() != bv.cols()) {
    throw ShapeError("rbf_kernel: feature mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  }
  if (!(bandwidth > 0)) throw std::invalid_argument("rbf_kernel: bandwidth must be positive");
  Tensor out({av.rows(), bv.rows()});
  const double denom = 2.0 * bandwidth * bandwidth;
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < av.cols(); ++c) {
        const double diff = av(i, c) - bv(j, c);
        d2 += diff * diff;
      }
      out(i, j) = std::exp(-d2 / denom);
    }
  }
  OpAttrs attrs;
  attrs.scalar = bandwidth;
  return g.record(OpKind::rbf_kernel, {a.id, b.id}, std::move(out), std::move(attrs));
}

inline void Graph::backward(Var loss) {
  const Node& target = node(loss);
  if (target.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(target.value.shape()));
  }
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Tensor::zeros_like(n.value);
  }
  has_grads_ = true;
  if (!target.needs_grad) return;
  nodes_[loss.id].grad[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (nodes_[id].needs_grad) propagate(id);
  }
}

inline void Graph::propagate(std::size_t id) {
  Node& n = nodes_[id];
  const Tensor& gout = n.grad;
  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
  auto wants = [&](std::size_t k) { return input(k).needs_grad; };

  switch (n.kind) {
    case OpKind::parameter:
    case OpKind::constant:
      return;
    case OpKind::matmul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      if (wants(0)) detail::add_into(input(0).grad, fairprog::matmul(gout, transpose(b)));
      if (wants(1)) detail::add_into(input(1).grad, fairprog::matmul(transpose(a), gout));
      return;
    }
    case OpKind::add:
      if (wants(0)) detail::add_into(input(0).grad, gout);
      if (wants(1)) detail::add_into(input(1).grad, gout);
      return;
    case OpKind::sub:
      if (wants(0)) detail::add_into(input(0).grad, gout);
      if (wants(1)) detail::add_into(input(1).grad, gout, -1.0);
      return;
    case OpKind::mul: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      for (std::size_t i = 0; i < gout.size(); ++i) {
        if (wants(0)) input(0).grad[i] += gout[i] * b[i];
        if (wants(1)) input(1).grad[i] += gout[i] * a[i];
      }
      return;
    }
    case OpKind::scale:
      detail::add_into(input(0).grad, gout, n.attrs.scalar);
      return;
    case OpKind::relu: {
      const Tensor& a = input(0).value;
      for (std::size_t i = 0; i < gout.size(); ++i) {
        if (a[i] > 0) input(0).grad[i] += gout[i];
      }
      return;
    }
    case OpKind::tanh:
      for (std::size_t i = 0; i < gout.size(); ++i) {
        input(0).grad[i] += gout[i] * (1.0 - n.value[i] * n.value[i]);
      }
      return;
    case OpKind::sigmoid:
      for (std::size_t i = 0; i < gout.size(); ++i) {
        input(0).grad[i] += gout[i] * n.value[i] * (1.0 - n.value[i]);
      }
      return;
    case OpKind::softmax: {
      const Tensor& y = n.value;
      Tensor& ga = input(0).grad;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += gout(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (gout(r, c) - dot);
      }
      return;
    }
    case OpKind::concat: {
      const std::size_t split = n.attrs.begin;
      for (std::size_t r = 0; r < gout.rows(); ++r) {
        for (std::size_t c = 0; c < gout.cols(); ++c) {
          if (c < split) {
            if (wants(0)) input(0).grad(r, c) += gout(r, c);
          } else if (wants(1)) {
            input(1).grad(r, c - split) += gout(r, c);
          }
        }
      }
      return;
    }
    case OpKind::slice:
      for (std::size_t r = 0; r < gout.rows(); ++r) {
        for (std::size_t c = 0; c < gout.cols(); ++c) input(0).grad(r, c + n.attrs.begin) += gout(r, c);
      }
      return;
    case OpKind::take_rows:
      for (std::size_t r = 0; r < gout.rows(); ++r) {
        for (std::size_t c = 0; c < gout.cols(); ++c) input(0).grad(n.attrs.indices[r], c) += gout(r, c);
      }
      return;
    case OpKind::reshape:
      detail::add_into(input(0).grad, gout);
      return;
    case OpKind::sum:
      for (double& v : input(0).grad.values()) v += gout[0];
      return;
    case OpKind::mean: {
      const double share = gout[0] / static_cast<double>(input(0).value.size());
      for (double& v : input(0).grad.values()) v += share;
      return;
    }
    case OpKind::clamp: {
      const Tensor& a = input(0).value;
      for (std::size_t i = 0; i < gout.size(); ++i) {
        if (a[i] >= n.attrs.lo && a[i] <= n.attrs.hi) input(0).grad[i] += gout[i];
      }
      return;
    }
    case OpKind::straight_through:
      detail::add_into(input(0).grad, gout);
      return;
    case OpKind::cross_entropy: {
      const Tensor p = softmax_rows(input(0).value);
      const double share = gout[0] / static_cast<double>(p.rows());
      Tensor& ga = input(0).grad;
      for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < p.cols(); ++c) {
          const double onehot = c == n.attrs.indices[r] ? 1.0 : 0.0;
          ga(r, c) += share * (p(r, c) - onehot);
        }
      }
      return;
    }
    case OpKind::rbf_kernel: {
      const Tensor& a = input(0).value;
      const Tensor& b = input(1).value;
      const double inv = 1.0 / (n.attrs.scalar * n.attrs.scalar);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
          const double w = gout(i, j) * n.value(i, j) * inv;
          if (w == 0.0) continue;
          for (std::size_t c = 0; c < a.cols(); ++c) {
            const double diff = a(i, c) - b(j, c);
            if (wants(0)) input(0).grad(i, c) -= w * diff;
            if (wants(1)) input(1).grad(j, c) += w * diff;
          }
        }
      }
      return;
    }
  }
}

}  // namespace fairprog
