// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "fairprog/training/train.hpp"
#include "fairprog/triggers/trigger.hpp"

namespace fairprog {

struct ReprogramOptions {
  /// Drop the fairness term and the discriminator entirely.
  bool utility_only = false;
  /// Validation set for checkpoint selection; the final trigger is kept
  /// when absent.
  const LabeledDataset* val = nullptr;
};

struct ZerothOrderOptions {
  std::size_t queries = 30;
  double smoothing = 1e-3;
};

/// Two-point random-direction gradient estimate
///   g = (d / q) sum_i [(L(x + mu u_i) - L(x - mu u_i)) / (2 mu)] u_i
/// with u_i uniform on the unit sphere and d the parameter count.
inline Tensor zo_gradient(const std::function<double(const Tensor&)>& loss, const Tensor& at,
                          const ZerothOrderOptions& opt, Rng& rng) {
  if (opt.queries == 0) throw std::invalid_argument("zo_gradient: query count must be positive");
  if (!(opt.smoothing > 0.0)) throw std::invalid_argument("zo_gradient: smoothing must be positive");
  const std::size_t d = at.size();
  Tensor grad = Tensor::zeros_like(at);
  Tensor probe = at;
  std::vector<double> u(d);
  for (std::size_t q = 0; q < opt.queries; ++q) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
    for (std::size_t i = 0; i < d; ++i) probe[i] = at[i] + opt.smoothing * u[i];
    const double up = loss(probe);
    for (std::size_t i = 0; i < d; ++i) probe[i] = at[i] - opt.smoothing * u[i];
    const double down = loss(probe);
    const double slope = (up - down) / (2.0 * opt.smoothing);
    for (std::size_t i = 0; i < d; ++i) grad[i] += slope * u[i];
  }
  const double factor = static_cast<double>(d) / static_cast<double>(opt.queries);
  for (double& v : grad.values()) v *= factor;
  return grad;
}

namespace detail {

inline void require_reprogrammable(const NetModel& base, const Trigger& trigger, const LabeledDataset& data) {
  if (!base.frozen()) throw std::logic_error("reprogram: the base model must be frozen");
  data.validate();
  const std::size_t width = model_input_width(geometry_of(trigger, data.d()));
  if (width != base.spec().input_width()) {
    throw ShapeError("reprogram: trigger produces width " + std::to_string(width) + " but the model expects " +
                     std::to_string(base.spec().input_width()));
  }
}

inline void trigger_adam_step(Trigger& trigger, const Tensor& grad, AdamState& state, double lr) {
  AdamOptions o;
  o.lr = lr;
  std::span<Tensor> params(&trainable(trigger), 1);
  const std::vector<Tensor> grads{grad};
  adam_step(params, grads, state, o);
  project_slots(trigger);
}

inline Learner trigger_learner(const NetModel& base, Trigger& trigger, Trigger& best, const LabeledDataset* val) {
  Learner l;
  l.classes = base.spec().output_width();
  l.proba = [&base, &trigger](const Tensor& x) { return predict_proba(base, apply_trigger(trigger, x)); };
  l.snapshot = [&trigger, &best] { best = trigger; };
  l.restore = [&trigger, &best] { trigger = best; };
  l.validate = [&base, &trigger, val] { return evaluate(base, trigger, *val); };
  return l;
}

inline Trigger run_trigger_loop(Learner& learner, Trigger& trigger, const LabeledDataset& tune,
                                const TrainConfig& cfg, const ReprogramOptions& opt) {
  LoopOptions loop;
  loop.fairness_term = !opt.utility_only;
  loop.select = opt.val != nullptr;
  loop.select_by_bias = !opt.utility_only && cfg.lambda > 0.0;
  alternating_loop(learner, tune, cfg, loop);
  return trigger;
}

}  // namespace detail

/// Optimizes a trigger against a frozen classifier: per batch the
/// discriminator takes its ascent steps, then the trigger takes one Adam
/// step on CE + lambda * fairness loss. Token triggers are projected back
/// onto the simplex after every step. With a validation set the epoch
/// checkpoint with the lowest bias (highest accuracy when lambda = 0) wins.
inline Trigger reprogram(const NetModel& base, const LabeledDataset& tune, const Trigger& initial,
                         const TrainConfig& cfg, const ReprogramOptions& opt = {}) {
  cfg.validate();
  detail::require_reprogrammable(base, initial, tune);
  Trigger trigger = initial;
  Trigger best = initial;
  AdamState state;
  detail::Learner learner = detail::trigger_learner(base, trigger, best, opt.val);
  const bool fairness = !opt.utility_only;
  learner.step = [&](const detail::BatchView& b, const NetModel* disc) {
    Graph g;
    const Var param = g.parameter(trainable(trigger));
    const BoundNet f = bind(g, base, false);
    const Var logits = forward(f, apply_trigger(trigger, param, g.constant(b.x)));
    g.backward(detail::objective(logits, b, cfg, fairness, disc));
    detail::trigger_adam_step(trigger, g.grad(param), state, cfg.lr_trigger);
  };
  return detail::run_trigger_loop(learner, trigger, tune, cfg, opt);
}

inline Trigger reprogram(const NetModel& base, const LabeledDataset& tune, const TriggerGeometry& geometry,
                         const TrainConfig& cfg, const ReprogramOptions& opt = {}) {
  return reprogram(base, tune, init_trigger(geometry, cfg.init_seed), cfg, opt);
}

/// Same loop with the trigger gradient replaced by a zeroth-order estimate:
/// the classifier is only queried for its outputs.
inline Trigger reprogram_blackbox(const NetModel& base, const LabeledDataset& tune, const Trigger& initial,
                                  const TrainConfig& cfg, const ZerothOrderOptions& zo = {},
                                  const ReprogramOptions& opt = {}) {
  cfg.validate();
  if (zo.queries == 0) throw std::invalid_argument("reprogram_blackbox: query count must be positive");
  detail::require_reprogrammable(base, initial, tune);
  Trigger trigger = initial;
  Trigger best = initial;
  AdamState state;
  Rng query_rng(derive_seed(cfg.seed, seed_tags::queries));
  detail::Learner learner = detail::trigger_learner(base, trigger, best, opt.val);
  const bool fairness = !opt.utility_only;
  learner.step = [&](const detail::BatchView& b, const NetModel* disc) {
    const auto loss = [&](const Tensor& param) {
      Trigger probe = trigger;
      trainable(probe) = param;
      Graph g;
      // only output scores of the classifier enter the loss
      const Var logits = g.constant(forward(base, apply_trigger(probe, b.x)));
      return g.value(detail::objective(logits, b, cfg, fairness, disc)).item();
    };
    detail::trigger_adam_step(trigger, zo_gradient(loss, trainable(trigger), zo, query_rng), state, cfg.lr_trigger);
  };
  return detail::run_trigger_loop(learner, trigger, tune, cfg, opt);
}

inline Trigger reprogram_blackbox(const NetModel& base, const LabeledDataset& tune, const TriggerGeometry& geometry,
                                  const TrainConfig& cfg, const ZerothOrderOptions& zo = {},
                                  const ReprogramOptions& opt = {}) {
  return reprogram_blackbox(base, tune, init_trigger(geometry, cfg.init_seed), cfg, zo, opt);
}

}  // namespace fairprog
