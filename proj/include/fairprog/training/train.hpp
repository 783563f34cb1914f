// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fairprog/diffcore/adam.hpp"
#include "fairprog/fairness/losses.hpp"
#include "fairprog/fairness/metrics.hpp"
#include "fairprog/harness/dataset.hpp"
#include "fairprog/models/net.hpp"
#include "fairprog/training/config.hpp"
#include "fairprog/triggers/trigger.hpp"

namespace fairprog {

namespace seed_tags {
inline constexpr std::uint64_t shuffle = 0x5348;
inline constexpr std::uint64_t discriminator = 0x4449;
inline constexpr std::uint64_t queries = 0x5a4f;
}  // namespace seed_tags

/// The dataset as the classifier sees it with no trigger (zero slots for
/// slot-style triggers).
inline LabeledDataset plain_dataset(const LabeledDataset& ds, const TriggerGeometry& g) {
  LabeledDataset out = ds;
  out.x = plain_input(g, ds.x);
  if (out.x.cols() != ds.x.cols()) out.side = 0;
  return out;
}

inline EvalBatch eval_batch(const NetModel& model, const Tensor& inputs, const LabeledDataset& ds) {
  return make_eval_batch(predict_proba(model, inputs), ds.y, ds.z);
}

/// Scores of the model on the dataset's features as given.
inline BiasScores evaluate(const NetModel& model, const LabeledDataset& ds) {
  return bias_scores(eval_batch(model, ds.x, ds));
}

/// Scores with the trigger applied to every row.
inline BiasScores evaluate(const NetModel& model, const Trigger& trigger, const LabeledDataset& ds) {
  return bias_scores(eval_batch(model, apply_trigger(trigger, ds.x), ds));
}

inline double criterion_bias(const BiasScores& s, Criterion c) { return c == Criterion::eo ? s.eo : s.dp; }

namespace detail {

/// Checkpoint ranking: accuracy when the run has no fairness pressure,
/// otherwise lowest bias with accuracy breaking ties.
inline bool better_checkpoint(const BiasScores& cand, const BiasScores& best, bool by_bias, Criterion c) {
  if (!by_bias) return cand.accuracy > best.accuracy;
  const double a = criterion_bias(cand, c), b = criterion_bias(best, c);
  if (a != b) return a < b;
  return cand.accuracy > best.accuracy;
}

/// Batch handed to a learner step.
struct BatchView {
  Tensor x;
  std::vector<std::size_t> y;
  std::vector<std::size_t> z;
};

/// CE + lambda * fairness loss on a batch, given the batch logits. `disc`
/// is the current discriminator (adversarial loss) or null (MMD or no
/// fairness term).
inline Var objective(Var logits, const BatchView& b, const TrainConfig& cfg, bool fairness_term,
                     const NetModel* disc) {
  Graph& g = *logits.graph;
  Var loss = cross_entropy(logits, b.y);
  if (!fairness_term) return loss;
  const Var probs = softmax(logits);
  std::optional<Var> fair;
  if (cfg.fairness_loss == FairnessLoss::adversarial) {
    const BoundNet d = bind(g, *disc, false);
    fair = adv_fairness_loss(probs, b.y, b.z, d, cfg.criterion);
  } else {
    std::vector<std::size_t> seen(b.z);
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() >= 2) fair = mmd_fairness_loss(probs, b.z);
  }
  if (fair) loss = add(loss, scale(*fair, cfg.lambda));
  return loss;
}

/// What the alternating loop trains: a classifier's weights or a trigger.
struct Learner {
  /// Width of the classifier output.
  std::size_t classes = 2;
  /// Graph-free class probabilities.
  std::function<Tensor(const Tensor& x)> proba;
  /// One descent step on the objective for this batch.
  std::function<void(const BatchView&, const NetModel* disc)> step;
  /// Checkpointing for model selection.
  std::function<void()> snapshot;
  std::function<void()> restore;
  std::function<BiasScores()> validate;
};

struct LoopOptions {
  bool fairness_term = true;
  bool select = false;  // choose the best epoch checkpoint via validate()
  bool select_by_bias = false;
};

inline std::vector<std::vector<std::size_t>> batches(Rng& rng, std::size_t n, std::size_t batch) {
  const auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t lo = 0; lo < n; lo += batch) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + batch)));
  }
  return out;
}

/// Alternating optimization: per batch, the discriminator ascends the
/// demographic-recovery objective, then the learner descends
/// CE + lambda * fairness loss.
inline void alternating_loop(Learner& learner, const LabeledDataset& data, const TrainConfig& cfg,
                             const LoopOptions& opt) {
  const std::size_t k = learner.classes;
  const std::size_t groups = std::max<std::size_t>(2, data.groups());
  const bool adversarial = opt.fairness_term && cfg.fairness_loss == FairnessLoss::adversarial;
  std::optional<NetModel> disc;
  AdamState disc_state;
  AdamOptions disc_opt;
  disc_opt.lr = cfg.lr_disc;
  if (adversarial) {
    disc = init_model(discriminator_spec(discriminator_input_width(k, cfg.criterion), groups),
                      derive_seed(cfg.seed, seed_tags::discriminator));
  }
  Rng shuffle(derive_seed(cfg.seed, seed_tags::shuffle));
  std::optional<BiasScores> best;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& rows : batches(shuffle, data.n(), cfg.batch)) {
      BatchView b{take_rows(data.x, rows), {}, {}};
      for (auto r : rows) {
        b.y.push_back(data.y[r]);
        b.z.push_back(data.z[r]);
      }
      if (adversarial) {
        const Tensor probs = learner.proba(b.x);
        for (std::size_t s = 0; s < cfg.disc_steps; ++s) {
          Graph g;
          const BoundNet d = bind(g, *disc, true);
          const Var ce = discriminator_ce(g.constant(probs), b.y, b.z, d, cfg.criterion);
          g.backward(ce);
          std::vector<Tensor> grads;
          for (Var p : d.params) grads.push_back(g.grad(p));
          adam_step(disc->mutable_parameters(), grads, disc_state, disc_opt);
        }
      }
      learner.step(b, disc ? &*disc : nullptr);
    }
    if (opt.select) {
      const BiasScores scores = learner.validate();
      if (!best || better_checkpoint(scores, *best, opt.select_by_bias, cfg.criterion)) {
        best = scores;
        learner.snapshot();
      }
    }
  }
  if (opt.select && best) learner.restore();
}

inline void require_trainable_data(const LabeledDataset& ds, const NetSpec& spec, const char* what) {
  ds.validate();
  if (ds.d() != spec.input_width()) {
    throw ShapeError(std::string(what) + ": data width " + std::to_string(ds.d()) + " does not match model input " +
                     std::to_string(spec.input_width()));
  }
  for (auto y : ds.y) {
    if (y >= spec.output_width()) {
      throw std::out_of_range(std::string(what) + ": label " + std::to_string(y) + " exceeds class count " +
                              std::to_string(spec.output_width()));
    }
  }
}

inline Learner model_learner(NetModel& model, const TrainConfig& cfg, bool fairness, AdamState& state,
                             NetModel& best, const LabeledDataset* val) {
  Learner l;
  l.classes = model.spec().output_width();
  l.proba = [&model](const Tensor& x) { return predict_proba(model, x); };
  l.step = [&model, &state, &cfg, fairness](const BatchView& b, const NetModel* disc) {
    Graph g;
    const BoundNet f = bind(g, model, true);
    g.backward(objective(forward(f, g.constant(b.x)), b, cfg, fairness, disc));
    std::vector<Tensor> grads;
    for (Var p : f.params) grads.push_back(g.grad(p));
    AdamOptions o;
    o.lr = cfg.lr_classifier;
    adam_step(model.mutable_parameters(), grads, state, o);
  };
  l.snapshot = [&model, &best] { best = model; };
  l.restore = [&model, &best] { model = best; };
  l.validate = [&model, val] { return evaluate(model, *val); };
  return l;
}

inline NetModel train_model(NetModel model, const LabeledDataset& train, const TrainConfig& cfg,
                            const LabeledDataset* val, bool fairness, bool select_by_bias) {
  AdamState state;
  NetModel best = model;
  Learner learner = model_learner(model, cfg, fairness, state, best, val);
  LoopOptions opt;
  opt.fairness_term = fairness;
  opt.select = val != nullptr;
  opt.select_by_bias = select_by_bias;
  alternating_loop(learner, train, cfg, opt);
  return model;
}

}  // namespace detail

/// Empirical risk minimization with cross-entropy. With a validation set
/// the most accurate epoch is kept. The result is frozen.
inline NetModel train_base(const LabeledDataset& train, const NetSpec& spec, const TrainConfig& cfg,
                           const LabeledDataset* val = nullptr) {
  cfg.validate();
  detail::require_trainable_data(train, spec, "train_base");
  NetModel model = detail::train_model(init_model(spec, cfg.init_seed), train, cfg, val, false, false);
  model.freeze();
  return model;
}

/// In-processing adversarial debiasing: the classifier is trained from
/// scratch against a discriminator. With lambda = 0 the result equals
/// train_base under the same configuration.
inline NetModel train_adv_in(const LabeledDataset& train, const NetSpec& spec, const TrainConfig& cfg,
                             const LabeledDataset* val = nullptr) {
  cfg.validate();
  detail::require_trainable_data(train, spec, "train_adv_in");
  NetModel model =
      detail::train_model(init_model(spec, cfg.init_seed), train, cfg, val, true, cfg.lambda > 0.0);
  model.freeze();
  return model;
}

/// Post-processing variant: the same objective, started from a copy of
/// the base weights and trained for a fixed number of epochs on the tuning
/// set only.
inline NetModel finetune_adv_post(const NetModel& base, const LabeledDataset& tune, const TrainConfig& cfg) {
  cfg.validate();
  detail::require_trainable_data(tune, base.spec(), "finetune_adv_post");
  NetModel model = detail::train_model(base.unfrozen_copy(), tune, cfg, nullptr, true, false);
  model.freeze();
  return model;
}

}  // namespace fairprog
