// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fairprog/checksum.hpp"
#include "fairprog/diffcore/graph.hpp"
#include "fairprog/rng.hpp"

namespace fairprog {

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu|tanh)");
}

/// Layer widths from input to output; the network emits logits.
struct NetSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::relu;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }

  void validate() const {
    if (widths.size() < 3) {
      throw std::invalid_argument("net spec: need input, at least one hidden layer and output widths");
    }
    for (std::size_t w : widths) {
      if (w == 0) throw std::invalid_argument("net spec: widths must be positive");
    }
  }

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// Classifier used for the tabular experiments: two hidden layers of 64.
inline NetSpec classifier_spec(std::size_t input_width, std::size_t classes,
                               std::vector<std::size_t> hidden = {64, 64},
                               Activation act = Activation::relu) {
  NetSpec spec;
  spec.widths.push_back(input_width);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(classes);
  spec.activation = act;
  return spec;
}

/// Adversary: three hidden layers of 32 with a softmax head over groups.
inline NetSpec discriminator_spec(std::size_t input_width, std::size_t groups) {
  return classifier_spec(input_width, groups, {32, 32, 32});
}

/// Feed-forward network. Weights are stored input-major ({fan_in, fan_out})
/// so a batch propagates as x * W + b; biases are {1, fan_out}.
///
/// A frozen model refuses mutable access to its parameters.
class NetModel {
 public:
  NetModel(NetSpec spec, std::vector<Tensor> params, bool frozen = false)
      : spec_(std::move(spec)), params_(std::move(params)), frozen_(frozen) {
    spec_.validate();
    if (params_.size() != 2 * spec_.layer_count()) {
      throw ShapeError("net: expected " + std::to_string(2 * spec_.layer_count()) + " parameter tensors, got " +
                       std::to_string(params_.size()));
    }
    for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
      const Shape w{spec_.widths[l], spec_.widths[l + 1]};
      const Shape b{1, spec_.widths[l + 1]};
      if (params_[2 * l].shape() != w || params_[2 * l + 1].shape() != b) {
        throw ShapeError("net: layer " + std::to_string(l) + " expects weight " + shape_string(w) + " and bias " +
                         shape_string(b) + ", got " + shape_string(params_[2 * l].shape()) + " and " +
                         shape_string(params_[2 * l + 1].shape()));
      }
    }
  }

  const NetSpec& spec() const { return spec_; }
  std::span<const Tensor> parameters() const { return params_; }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  std::vector<Tensor>& mutable_parameters() {
    if (frozen_) throw std::logic_error("net: parameters of a frozen model cannot be modified");
    return params_;
  }

  NetModel unfrozen_copy() const { return NetModel(spec_, params_, false); }

  std::string parameter_name(std::size_t k) const {
    return "layer" + std::to_string(k / 2) + (k % 2 == 0 ? ".weight" : ".bias");
  }

  friend bool operator==(const NetModel&, const NetModel&) = default;

 private:
  NetSpec spec_;
  std::vector<Tensor> params_;
  bool frozen_;
};

/// Glorot-uniform weights, zero biases.
inline NetModel init_model(const NetSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Tensor> params;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    params.push_back(std::move(w));
    params.emplace_back(Shape{1, fan_out}, 0.0);
  }
  return NetModel(spec, std::move(params));
}

/// Checksum over spec, frozen flag and parameter bits.
inline std::uint64_t checksum(const NetModel& model) {
  Fnv1a h;
  for (std::size_t w : model.spec().widths) h.update(std::to_string(w) + ",");
  h.update(to_string(model.spec().activation));
  h.update(model.frozen() ? "F" : "T");
  for (const Tensor& p : model.parameters()) h.update(p.values());
  return h.digest();
}

/// Model parameters registered on a graph.
struct BoundNet {
  const NetModel* model = nullptr;
  std::vector<Var> params;
};

/// Frozen models (or trainable=false) are bound as constants: the network
/// still passes gradients to its input but none to its weights.
inline BoundNet bind(Graph& g, const NetModel& model, bool trainable) {
  if (trainable && model.frozen()) throw std::logic_error("net: cannot bind a frozen model as trainable");
  BoundNet bound{&model, {}};
  for (const Tensor& p : model.parameters()) {
    bound.params.push_back(trainable ? g.parameter(p) : g.constant(p));
  }
  return bound;
}

inline Var forward(const BoundNet& net, Var x) {
  Graph& g = *x.graph;
  const NetSpec& spec = net.model->spec();
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || xv.cols() != spec.input_width()) {
    throw ShapeError("net: input " + shape_string(xv.shape()) + " does not match input width " +
                     std::to_string(spec.input_width()));
  }
  const Var ones = g.constant(Tensor({xv.rows(), 1}, 1.0));
  Var h = x;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    h = add(matmul(h, net.params[2 * l]), matmul(ones, net.params[2 * l + 1]));
    if (l + 1 < spec.layer_count()) h = spec.activation == Activation::relu ? relu(h) : tanh(h);
  }
  return h;
}

/// Graph-free inference.
inline Tensor forward(const NetModel& model, const Tensor& x) {
  const NetSpec& spec = model.spec();
  if (x.rank() != 2 || x.cols() != spec.input_width()) {
    throw ShapeError("net: input " + shape_string(x.shape()) + " does not match input width " +
                     std::to_string(spec.input_width()));
  }
  Tensor h = x;
  const auto params = model.parameters();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    h = matmul(h, params[2 * l]);
    const Tensor& b = params[2 * l + 1];
    const bool last = l + 1 == spec.layer_count();
    for (std::size_t i = 0; i < h.rows(); ++i) {
      for (std::size_t j = 0; j < h.cols(); ++j) {
        double v = h(i, j) + b[j];
        if (!last) v = spec.activation == Activation::relu ? (v > 0 ? v : 0.0) : std::tanh(v);
        h(i, j) = v;
      }
    }
  }
  return h;
}

inline Tensor predict_proba(const NetModel& model, const Tensor& x) { return softmax_rows(forward(model, x)); }

enum class Criterion { eo, dp };

inline std::string to_string(Criterion c) { return c == Criterion::eo ? "EO" : "DP"; }

inline Criterion parse_criterion(const std::string& s) {
  if (s == "EO" || s == "eo") return Criterion::eo;
  if (s == "DP" || s == "dp") return Criterion::dp;
  throw std::invalid_argument("unknown criterion '" + s + "' (expected EO|DP)");
}

inline std::size_t discriminator_input_width(std::size_t classes, Criterion c) {
  return c == Criterion::eo ? 2 * classes : classes;
}

namespace detail {

inline void require_probability_rows(const Tensor& probs) {
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      if (probs(i, j) < 0) throw std::invalid_argument("discriminator input: negative probability in row " + std::to_string(i));
      total += probs(i, j);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::invalid_argument("discriminator input: row " + std::to_string(i) + " sums to " +
                                  std::to_string(total));
    }
  }
}

inline Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor out({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw std::out_of_range("one_hot: label " + std::to_string(labels[i]) + " >= " + std::to_string(classes));
    }
    out(i, labels[i]) = 1.0;
  }
  return out;
}

}  // namespace detail

/// What the adversary sees: predicted probabilities, plus the one-hot true
/// label under equalized odds.
inline Tensor discriminator_input(const Tensor& probs, std::span<const std::size_t> y, Criterion c) {
  detail::require_probability_rows(probs);
  if (c == Criterion::dp) return probs;
  if (y.size() != probs.rows()) {
    throw ShapeError("discriminator input: " + std::to_string(y.size()) + " labels for " + shape_string(probs.shape()));
  }
  return hconcat(probs, detail::one_hot(y, probs.cols()));
}

inline Var discriminator_input(Var probs, std::span<const std::size_t> y, Criterion c) {
  Graph& g = *probs.graph;
  detail::require_probability_rows(g.value(probs));
  if (c == Criterion::dp) return probs;
  if (y.size() != g.value(probs).rows()) {
    throw ShapeError("discriminator input: " + std::to_string(y.size()) + " labels for " +
                     shape_string(g.value(probs).shape()));
  }
  return concat(probs, g.constant(detail::one_hot(y, g.value(probs).cols())));
}

}  // namespace fairprog
