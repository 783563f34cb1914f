// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/diffcore/tensor.hpp"

namespace fairprog {

/// Predictions alongside the true labels and demographic groups.
struct EvalBatch {
  Tensor probs;                    // {n, k}
  std::vector<std::size_t> yhat;   // argmax of probs
  std::vector<std::size_t> y;
  std::vector<std::size_t> z;

  std::size_t size() const { return y.size(); }
  std::size_t classes() const { return probs.cols(); }
};

/// Bias scores are nonnegative; they are reported externally as negatives.
struct BiasScores {
  double dp = 0.0;
  double eo = 0.0;
  double accuracy = 0.0;
};

inline EvalBatch make_eval_batch(Tensor probs, std::vector<std::size_t> y, std::vector<std::size_t> z) {
  if (probs.rank() != 2) throw ShapeError("eval batch: probabilities must be a matrix");
  if (y.size() != probs.rows() || z.size() != probs.rows()) {
    throw ShapeError("eval batch: " + std::to_string(probs.rows()) + " probability rows, " +
                     std::to_string(y.size()) + " labels, " + std::to_string(z.size()) + " groups");
  }
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) total += probs(i, j);
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::invalid_argument("eval batch: probability row " + std::to_string(i) + " sums to " +
                                  std::to_string(total));
    }
  }
  EvalBatch b{std::move(probs), {}, std::move(y), std::move(z)};
  b.yhat = argmax_rows(b.probs);
  return b;
}

/// Batch from hard predictions only (probabilities become one-hot rows).
inline EvalBatch make_eval_batch_from_labels(std::span<const std::size_t> yhat, std::vector<std::size_t> y,
                                             std::vector<std::size_t> z, std::size_t classes = 2) {
  if (yhat.empty()) throw std::invalid_argument("eval batch: empty");
  Tensor probs({yhat.size(), classes});
  for (std::size_t i = 0; i < yhat.size(); ++i) {
    if (yhat[i] >= classes) throw std::out_of_range("eval batch: prediction out of range");
    probs(i, yhat[i]) = 1.0;
  }
  return make_eval_batch(std::move(probs), std::move(y), std::move(z));
}

namespace detail {

inline void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

/// sum over groups of |p(pred) - p(pred | group)|
inline double dp_binary(const std::vector<bool>& pred, std::span<const std::size_t> z) {
  require_nonempty(pred.size(), "dp_score");
  std::map<std::size_t, std::pair<double, double>> groups;  // group -> (positives, count)
  double pos = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& g = groups[z[i]];
    g.first += pred[i] ? 1.0 : 0.0;
    g.second += 1.0;
    pos += pred[i] ? 1.0 : 0.0;
  }
  const double marginal = pos / static_cast<double>(pred.size());
  double score = 0.0;
  for (const auto& [group, counts] : groups) score += std::abs(marginal - counts.first / counts.second);
  return score;
}

/// sum over groups of (|FPR - FPR_z| + |FNR - FNR_z|) / 2, skipping
/// half-terms whose rate is undefined.
inline double eo_binary(const std::vector<bool>& pred, const std::vector<bool>& truth,
                        std::span<const std::size_t> z) {
  require_nonempty(pred.size(), "eo_score");
  struct Counts {
    double fp = 0, neg = 0, fn = 0, pos = 0;
  };
  Counts all;
  std::map<std::size_t, Counts> groups;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (Counts* c : {&all, &groups[z[i]]}) {
      if (truth[i]) {
        c->pos += 1;
        c->fn += pred[i] ? 0 : 1;
      } else {
        c->neg += 1;
        c->fp += pred[i] ? 1 : 0;
      }
    }
  }
  double score = 0.0;
  for (const auto& [group, c] : groups) {
    if (c.neg > 0 && all.neg > 0) score += std::abs(all.fp / all.neg - c.fp / c.neg) / 2.0;
    if (c.pos > 0 && all.pos > 0) score += std::abs(all.fn / all.pos - c.fn / c.pos) / 2.0;
  }
  return score;
}

inline void require_binary(const EvalBatch& b, const char* what) {
  if (b.classes() != 2) {
    throw std::invalid_argument(std::string(what) + ": binary formula needs 2 classes, got " +
                                std::to_string(b.classes()) + " (use multiclass_bias)");
  }
}

}  // namespace detail

/// Demographic-parity gap with class 1 as the positive outcome.
inline double dp_score(const EvalBatch& b) {
  detail::require_nonempty(b.size(), "dp_score");
  detail::require_binary(b, "dp_score");
  std::vector<bool> pred(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) pred[i] = b.yhat[i] == 1;
  return detail::dp_binary(pred, b.z);
}

/// Equalized-odds gap; marginal rates use the whole batch.
inline double eo_score(const EvalBatch& b) {
  detail::require_nonempty(b.size(), "eo_score");
  detail::require_binary(b, "eo_score");
  std::vector<bool> pred(b.size()), truth(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    pred[i] = b.yhat[i] == 1;
    truth[i] = b.y[i] == 1;
  }
  return detail::eo_binary(pred, truth, b.z);
}

enum class Metric { dp, eo };

/// One-vs-all average of the binary metric over the k classes.
inline double multiclass_bias(const EvalBatch& b, Metric metric) {
  detail::require_nonempty(b.size(), "multiclass_bias");
  if (b.classes() < 2) throw std::invalid_argument("multiclass_bias: need at least 2 classes");
  double total = 0.0;
  for (std::size_t c = 0; c < b.classes(); ++c) {
    std::vector<bool> pred(b.size()), truth(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
      pred[i] = b.yhat[i] == c;
      truth[i] = b.y[i] == c;
    }
    total += metric == Metric::dp ? detail::dp_binary(pred, b.z) : detail::eo_binary(pred, truth, b.z);
  }
  return total / static_cast<double>(b.classes());
}

inline double accuracy(const EvalBatch& b) {
  detail::require_nonempty(b.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b.size(); ++i) hits += b.yhat[i] == b.y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(b.size());
}

/// Binary formulas for k = 2, one-vs-all averages otherwise.
inline BiasScores bias_scores(const EvalBatch& b) {
  BiasScores s;
  s.accuracy = accuracy(b);
  if (b.classes() == 2) {
    s.dp = dp_score(b);
    s.eo = eo_score(b);
  } else {
    s.dp = multiclass_bias(b, Metric::dp);
    s.eo = multiclass_bias(b, Metric::eo);
  }
  return s;
}

}  // namespace fairprog
