// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/diffcore/graph.hpp"
#include "fairprog/models/net.hpp"

namespace fairprog {

enum class FairnessLoss { adversarial, mmd };

inline std::string to_string(FairnessLoss l) { return l == FairnessLoss::adversarial ? "adversarial" : "mmd"; }

inline FairnessLoss parse_fairness_loss(const std::string& s) {
  if (s == "adversarial") return FairnessLoss::adversarial;
  if (s == "mmd") return FairnessLoss::mmd;
  throw std::invalid_argument("unknown fairness loss '" + s + "' (expected adversarial|mmd)");
}

/// Cross-entropy of the discriminator predicting z from the predictions
/// (and y under equalized odds). The discriminator minimizes this; the
/// fairness loss is its negative.
inline Var discriminator_ce(Var probs, std::span<const std::size_t> y, std::span<const std::size_t> z,
                            const BoundNet& disc, Criterion criterion) {
  const Var in = discriminator_input(probs, y, criterion);
  const std::size_t want = disc.model->spec().input_width();
  if (probs.graph->value(in).cols() != want) {
    throw ShapeError("adv_fairness_loss: discriminator expects width " + std::to_string(want) + ", input has " +
                     std::to_string(probs.graph->value(in).cols()));
  }
  return cross_entropy(forward(disc, in), z);
}

/// -CE(z, d(input)), to be minimized by whoever controls the predictions.
inline Var adv_fairness_loss(Var probs, std::span<const std::size_t> y, std::span<const std::size_t> z,
                             const BoundNet& disc, Criterion criterion) {
  return scale(discriminator_ce(probs, y, z, disc, criterion), -1.0);
}

inline double adv_fairness_loss(const Tensor& probs, std::span<const std::size_t> y, std::span<const std::size_t> z,
                                const NetModel& disc, Criterion criterion) {
  Graph g;
  const BoundNet bound = bind(g, disc, false);
  return g.value(adv_fairness_loss(g.constant(probs), y, z, bound, criterion)).item();
}

/// Median of pairwise Euclidean distances over all rows; 1 when the median is 0.
inline double median_bandwidth(const Tensor& x) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      d.push_back(std::sqrt(s));
    }
  }
  if (d.empty()) return 1.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return med > 0.0 ? med : 1.0;
}

/// Squared MMD between group-conditional prediction samples (biased
/// V-statistic, Gaussian kernel), averaged over all pairs of present groups.
/// The bandwidth defaults to the median heuristic over the pooled batch and
/// is treated as a constant for differentiation.
inline Var mmd_fairness_loss(Var probs, std::span<const std::size_t> z, std::optional<double> bandwidth = {}) {
  Graph& g = *probs.graph;
  const Tensor& pv = g.value(probs);
  if (z.size() != pv.rows()) {
    throw ShapeError("mmd_fairness_loss: " + std::to_string(z.size()) + " groups for " + shape_string(pv.shape()));
  }
  std::map<std::size_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < z.size(); ++i) members[z[i]].push_back(i);
  if (members.size() < 2) throw std::invalid_argument("mmd_fairness_loss: need at least two groups present");
  const double bw = bandwidth ? *bandwidth : median_bandwidth(pv);

  std::vector<Var> samples;
  for (auto& [group, rows] : members) samples.push_back(take_rows(probs, rows));
  std::vector<Var> self;
  for (Var s : samples) self.push_back(mean(rbf_kernel(s, s, bw)));
  Var total = g.constant(Tensor::scalar(0.0));
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      const Var cross = mean(rbf_kernel(samples[a], samples[b], bw));
      total = add(total, sub(add(self[a], self[b]), scale(cross, 2.0)));
      ++pairs;
    }
  }
  // rounding can leave a tiny negative value for identical samples
  return clamp(scale(total, 1.0 / static_cast<double>(pairs)), 0.0, std::numeric_limits<double>::infinity());
}

inline double mmd_fairness_loss(const Tensor& probs, std::span<const std::size_t> z,
                                std::optional<double> bandwidth = {}) {
  Graph g;
  return g.value(mmd_fairness_loss(g.constant(probs), z, bandwidth)).item();
}

}  // namespace fairprog
