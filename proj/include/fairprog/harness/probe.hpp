// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/training/train.hpp"

namespace fairprog {

/// Area under the ROC curve of `scores` for the positive rows, with ties
/// counted as one half (Mann-Whitney statistic).
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("roc_auc: length mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t lo = 0; lo < idx.size();) {
    std::size_t hi = lo;
    while (hi + 1 < idx.size() && scores[idx[hi + 1]] == scores[idx[lo]]) ++hi;
    const double avg_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (positive[idx[k]]) {
        rank_sum += avg_rank;
        ++pos;
      } else {
        ++neg;
      }
    }
    lo = hi + 1;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: need both positive and negative rows");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

/// One-vs-rest AUC of a group classifier, averaged over groups present.
inline double group_auc(const NetModel& probe, const Tensor& x, const std::vector<std::size_t>& z) {
  const Tensor p = predict_proba(probe, x);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t g = 0; g < p.cols(); ++g) {
    std::vector<double> s(z.size());
    std::vector<bool> pos(z.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      s[i] = p(i, g);
      pos[i] = z[i] == g;
      hits += pos[i];
    }
    if (hits == 0 || hits == z.size()) continue;
    total += roc_auc(s, pos);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("group_auc: need at least two groups");
  return total / static_cast<double>(counted);
}

class ProbeQualityError : public std::runtime_error {
 public:
  ProbeQualityError(double auc, double floor)
      : std::runtime_error("probe: validation AUC " + std::to_string(auc) + " is below the floor " +
                           std::to_string(floor)),
        auc_(auc) {}
  double auc() const { return auc_; }

 private:
  double auc_;
};

struct DemographicProbe {
  NetModel model;
  double validation_auc = 0.0;
};

inline constexpr double probe_auc_floor = 0.95;

/// Trains a classifier of Z from X on trigger-free inputs (the datasets are
/// already at the model's input width) and gates it on validation AUC.
inline DemographicProbe train_probe(const LabeledDataset& train, const LabeledDataset& val, const NetSpec& spec,
                                    const TrainConfig& cfg, double floor = probe_auc_floor) {
  auto relabel = [](LabeledDataset ds) {
    ds.y = ds.z;
    return ds;
  };
  const LabeledDataset tz = relabel(train), vz = relabel(val);
  NetModel model = train_base(tz, spec, cfg, &vz);
  const double auc = group_auc(model, vz.x, vz.z);
  if (auc < floor) throw ProbeQualityError(auc, floor);
  return {std::move(model), auc};
}

/// The probe's group probabilities on the all-zero input with the trigger
/// applied.
inline std::vector<double> demographic_probe(const DemographicProbe& probe, const Trigger& trigger,
                                             std::size_t data_width) {
  const Tensor p = predict_proba(probe.model, apply_trigger(trigger, Tensor({1, data_width}, 0.0)));
  return {p.values().begin(), p.values().end()};
}

/// The probe's output on the plain null input (empty trigger slots).
inline std::vector<double> null_probe(const DemographicProbe& probe, const TriggerGeometry& g) {
  const Tensor p = predict_proba(probe.model, plain_input(g, Tensor({1, g.data_width}, 0.0)));
  return {p.values().begin(), p.values().end()};
}

}  // namespace fairprog
