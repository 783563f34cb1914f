// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "fairprog/fairness/losses.hpp"
#include "fairprog/models/net.hpp"

namespace fairprog {

struct TrainConfig {
  double lambda = 0.0;
  Criterion criterion = Criterion::eo;
  FairnessLoss fairness_loss = FairnessLoss::adversarial;
  std::size_t epochs = 50;
  std::size_t batch = 128;
  double lr_classifier = 1e-3;
  double lr_trigger = 0.1;
  double lr_disc = 0.01;
  std::size_t disc_steps = 1;
  /// Drives shuffling and the discriminator.
  std::uint64_t seed = 0;
  /// Drives model initialization (and token embeddings), so that models
  /// trained with different shuffles can share a starting point.
  std::uint64_t init_seed = 0;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("train config: lambda must be >= 0");
    if (batch == 0) throw std::invalid_argument("train config: batch must be positive");
    if (disc_steps == 0) throw std::invalid_argument("train config: disc_steps must be positive");
    for (double lr : {lr_classifier, lr_trigger, lr_disc}) {
      if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train config: learning rates must be positive");
    }
  }
};

/// Reprogramming runs default to 30 epochs; base training to 50.
inline TrainConfig reprogram_defaults() {
  TrainConfig cfg;
  cfg.epochs = 30;
  return cfg;
}

/// One point of a fairness/accuracy trade-off curve. Bias scores are
/// reported as negatives, so larger is fairer.
struct TradeoffPoint {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double neg_dp = 0.0;
  double neg_eo = 0.0;
};

}  // namespace fairprog
