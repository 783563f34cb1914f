// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "fairprog/models/io.hpp"
#include "fairprog/training/protocols.hpp"

namespace fp = fairprog;
using fp::Tensor;

namespace {

// Two well-separated blobs on the first coordinate.
fp::LabeledDataset separable(std::size_t n, std::uint64_t seed) {
  fp::Rng rng(seed);
  fp::LabeledDataset ds;
  ds.x = Tensor({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i % 2;
    ds.y.push_back(y);
    ds.z.push_back(rng.bernoulli(0.5) ? 1 : 0);
    ds.x(i, 0) = (y == 1 ? 2.0 : -2.0) + 0.3 * rng.normal();
    ds.x(i, 1) = rng.normal();
  }
  return ds;
}

fp::TriggerGeometry concat_geometry(std::size_t d, std::size_t p) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::concat;
  g.data_width = d;
  g.size = p;
  return g;
}

// Small biased problem shared by the reprogramming tests.
struct Bench {
  fp::Splits raw;
  fp::TriggerGeometry geometry;
  fp::NetModel base;
};

const Bench& small_bench() {
  static const Bench b = [] {
    fp::GenSpec gs;
    gs.n = 800;
    gs.d = 12;
    gs.seed = 11;
    const auto raw = fp::split(fp::gen_synth(gs), fp::SplitRatios{}, 3);
    const auto geo = concat_geometry(12, 6);
    fp::TrainConfig cfg;
    cfg.epochs = 25;
    cfg.seed = cfg.init_seed = 1;
    const auto val = fp::plain_dataset(raw.val, geo);
    auto base = fp::train_base(fp::plain_dataset(raw.train, geo), fp::classifier_spec(18, 2), cfg, &val);
    return Bench{raw, geo, std::move(base)};
  }();
  return b;
}

fp::TrainConfig quick_reprogram(double lambda, std::uint64_t seed) {
  fp::TrainConfig cfg = fp::reprogram_defaults();
  cfg.epochs = 8;
  cfg.lambda = lambda;
  cfg.seed = seed;
  cfg.init_seed = 1;
  return cfg;
}

std::vector<Tensor> params(const fp::NetModel& m) { return {m.parameters().begin(), m.parameters().end()}; }

double tune_loss(const fp::NetModel& m, const fp::LabeledDataset& ds) {
  fp::Graph g;
  return g.value(fp::cross_entropy(g.constant(fp::forward(m, ds.x)), ds.y)).item();
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(TrainBase, SeparableToyReachesHighTrainingAccuracy) {
  const auto ds = separable(400, 5);
  fp::TrainConfig cfg;
  const auto model = fp::train_base(ds, fp::classifier_spec(2, 2, {16, 16}), cfg);
  EXPECT_TRUE(model.frozen());
  EXPECT_GE(fp::evaluate(model, ds).accuracy, 0.99);
}

TEST(TrainBase, ZeroEpochsReturnsInitialization) {
  const auto ds = separable(50, 1);
  fp::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.init_seed = 42;
  const auto spec = fp::classifier_spec(2, 2, {8});
  EXPECT_EQ(params(fp::train_base(ds, spec, cfg)), params(fp::init_model(spec, 42)));
}

TEST(TrainBase, Deterministic) {
  const auto ds = separable(120, 2);
  fp::TrainConfig cfg;
  cfg.epochs = 5;
  const auto spec = fp::classifier_spec(2, 2, {8});
  EXPECT_EQ(params(fp::train_base(ds, spec, cfg)), params(fp::train_base(ds, spec, cfg)));
}

TEST(TrainBase, RejectsEmptyAndOutOfRangeLabels) {
  fp::TrainConfig cfg;
  const auto spec = fp::classifier_spec(2, 2, {8});
  EXPECT_THROW(fp::train_base(fp::LabeledDataset{Tensor({0, 2}), {}, {}, "", 0}, spec, cfg), std::invalid_argument);
  auto ds = separable(10, 3);
  ds.y[0] = 5;
  EXPECT_THROW(fp::train_base(ds, spec, cfg), std::out_of_range);
}

TEST(TrainAdvIn, ZeroLambdaMatchesBase) {
  const auto& b = small_bench();
  const auto train = fp::plain_dataset(b.raw.train, b.geometry);
  fp::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 3;
  cfg.init_seed = 9;
  const auto spec = fp::classifier_spec(18, 2);
  EXPECT_EQ(params(fp::train_adv_in(train, spec, cfg)), params(fp::train_base(train, spec, cfg)));
}

TEST(TrainAdvIn, LargeLambdaLowersEqualizedOddsGap) {
  const auto& b = small_bench();
  const auto train = fp::plain_dataset(b.raw.train, b.geometry);
  const auto test = fp::plain_dataset(b.raw.test, b.geometry);
  fp::TrainConfig cfg;
  cfg.epochs = 25;
  cfg.seed = cfg.init_seed = 1;
  cfg.lambda = 5.0;
  const auto model = fp::train_adv_in(train, fp::classifier_spec(18, 2), cfg);
  EXPECT_EQ(model.parameters().size(), params(b.base).size());
  EXPECT_LT(fp::evaluate(model, test).eo, fp::evaluate(b.base, test).eo);
}

TEST(FinetuneAdvPost, ZeroEpochsReturnsBaseParameters) {
  const auto& b = small_bench();
  fp::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(params(fp::finetune_adv_post(b.base, fp::plain_dataset(b.raw.tune, b.geometry), cfg)),
            params(b.base));
}

TEST(FinetuneAdvPost, ZeroLambdaTuneLossDoesNotGrow) {
  const auto& b = small_bench();
  const auto tune = fp::plain_dataset(b.raw.tune, b.geometry);
  fp::TrainConfig cfg;
  double prev = tune_loss(b.base, tune);
  for (std::size_t e = 1; e <= 5; ++e) {
    cfg.epochs = e;
    const double cur = tune_loss(fp::finetune_adv_post(b.base, tune, cfg), tune);
    EXPECT_LE(cur, prev * 1.05) << "epoch " << e;
    prev = cur;
  }
}

TEST(FinetuneAdvPost, LeavesBaseFileUntouched) {
  const auto& b = small_bench();
  const auto path = (std::filesystem::temp_directory_path() / "fairprog_advpost_base.json").string();
  fp::save_model(b.base, path);
  const std::string before = fp::read_file(path);
  fp::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lambda = 1.0;
  const auto tuned = fp::finetune_adv_post(b.base, fp::plain_dataset(b.raw.tune, b.geometry), cfg);
  EXPECT_NE(params(tuned), params(b.base));
  EXPECT_EQ(fp::read_file(path), before);
  std::filesystem::remove(path);
}

TEST(Reprogram, RejectsUnfrozenBase) {
  const auto& b = small_bench();
  const auto unfrozen = b.base.unfrozen_copy();
  EXPECT_THROW(fp::reprogram(unfrozen, b.raw.tune, b.geometry, quick_reprogram(1, 0)), std::logic_error);
}

TEST(Reprogram, RejectsWidthMismatch) {
  const auto& b = small_bench();
  EXPECT_THROW(fp::reprogram(b.base, b.raw.tune, concat_geometry(12, 3), quick_reprogram(1, 0)), fp::ShapeError);
}

TEST(Reprogram, ZeroEpochsReturnsInitialTrigger) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(5, 0);
  cfg.epochs = 0;
  const auto t = fp::reprogram(b.base, b.raw.tune, b.geometry, cfg);
  EXPECT_EQ(fp::trainable(t), fp::trainable(fp::init_trigger(b.geometry, cfg.init_seed)));
}

TEST(Reprogram, ZeroLambdaEqualsUtilityOnlyRun) {
  const auto& b = small_bench();
  for (auto loss : {fp::FairnessLoss::adversarial, fp::FairnessLoss::mmd}) {
    auto cfg = quick_reprogram(0.0, 4);
    cfg.fairness_loss = loss;
    fp::ReprogramOptions with_val;
    with_val.val = &b.raw.val;
    fp::ReprogramOptions utility = with_val;
    utility.utility_only = true;
    const auto a = fp::trainable(fp::reprogram(b.base, b.raw.tune, b.geometry, cfg, with_val));
    const auto u = fp::trainable(fp::reprogram(b.base, b.raw.tune, b.geometry, cfg, utility));
    ASSERT_EQ(a.shape(), u.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a[i] - u[i]), 1e-12);
  }
}

TEST(Reprogram, LeavesBaseChecksumUnchanged) {
  const auto& b = small_bench();
  const auto before = fp::checksum(b.base);
  fp::reprogram(b.base, b.raw.tune, b.geometry, quick_reprogram(10, 1));
  EXPECT_EQ(fp::checksum(b.base), before);
}

TEST(Reprogram, HighLambdaLowersEqualizedOddsGap) {
  const auto& b = small_bench();
  fp::ReprogramOptions ro;
  ro.val = &b.raw.val;
  auto cfg = quick_reprogram(20, 0);
  cfg.epochs = 20;
  const auto t = fp::reprogram(b.base, b.raw.tune, b.geometry, cfg, ro);
  EXPECT_LT(fp::evaluate(b.base, t, b.raw.test).eo, fp::evaluate(b.base, fp::plain_dataset(b.raw.test, b.geometry)).eo);
}

TEST(Reprogram, Deterministic) {
  const auto& b = small_bench();
  const auto cfg = quick_reprogram(3, 2);
  EXPECT_EQ(fp::trainable(fp::reprogram(b.base, b.raw.tune, b.geometry, cfg)),
            fp::trainable(fp::reprogram(b.base, b.raw.tune, b.geometry, cfg)));
}

TEST(Reprogram, SoftTriggerStaysOnSimplex) {
  fp::GenSpec gs;
  gs.n = 300;
  gs.d = 8;
  gs.y_dims = gs.z_dims = 3;
  const auto ds = fp::gen_synth(gs);
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::soft;
  g.data_width = 8;
  g.size = 3;
  g.vocab = 6;
  g.embed_dim = 2;
  fp::TrainConfig bc;
  bc.epochs = 3;
  const auto base = fp::train_base(fp::plain_dataset(ds, g), fp::classifier_spec(14, 2, {16}), bc);
  auto cfg = quick_reprogram(5, 0);
  cfg.epochs = 3;
  for (auto kind : {fp::TriggerKind::soft, fp::TriggerKind::hard}) {
    g.kind = kind;
    const auto t = fp::reprogram(base, ds, g, cfg);
    const Tensor& v = fp::trainable(t);
    for (std::size_t i = 0; i < v.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < v.cols(); ++j) {
        EXPECT_GE(v(i, j), 0.0);
        sum += v(i, j);
      }
      EXPECT_NEAR(sum, 1.0, 1e-8);
    }
  }
}

TEST(ZerothOrder, QuadraticAtOriginGivesZero) {
  fp::Rng rng(1);
  const auto loss = [](const Tensor& d) {
    double s = 0;
    for (double v : d.values()) s += v * v;
    return s;
  };
  const Tensor g = fp::zo_gradient(loss, Tensor({10}, 0.0), {}, rng);
  for (double v : g.values()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(ZerothOrder, AlignsWithAnalyticGradient) {
  fp::Rng rng(2);
  const auto loss = [](const Tensor& d) {
    double s = 0;
    for (double v : d.values()) s += v * v;
    return s;
  };
  Tensor at({10}, 0.0);
  at[0] = 1.0;
  Tensor analytic({10}, 0.0);
  analytic[0] = 2.0;
  double total = 0;
  for (int t = 0; t < 100; ++t) total += cosine(fp::zo_gradient(loss, at, {30, 1e-3}, rng), analytic);
  EXPECT_GE(total / 100, 0.7);
}

TEST(ZerothOrder, VarianceShrinksWithQueries) {
  const auto loss = [](const Tensor& d) {
    double s = 0;
    for (std::size_t i = 0; i < d.size(); ++i) s += static_cast<double>(i + 1) * d[i] * d[i];
    return s;
  };
  Tensor at({10}, 0.5);
  auto variance = [&](std::size_t q) {
    fp::Rng rng(7);
    std::vector<Tensor> draws;
    for (int r = 0; r < 200; ++r) draws.push_back(fp::zo_gradient(loss, at, {q, 1e-3}, rng));
    double v = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      double mean = 0;
      for (const auto& d : draws) mean += d[i] / static_cast<double>(draws.size());
      for (const auto& d : draws) v += (d[i] - mean) * (d[i] - mean) / static_cast<double>(draws.size());
    }
    return v;
  };
  EXPECT_GT(variance(5) / variance(50), 2.0);
}

TEST(ZerothOrder, RejectsZeroQueries) {
  fp::Rng rng(1);
  EXPECT_THROW(fp::zo_gradient([](const Tensor&) { return 0.0; }, Tensor({2}, 0.0), {0, 1e-3}, rng),
               std::invalid_argument);
  const auto& b = small_bench();
  EXPECT_THROW(fp::reprogram_blackbox(b.base, b.raw.tune, b.geometry, quick_reprogram(1, 0), {0, 1e-3}),
               std::invalid_argument);
}

TEST(ReprogramBlackbox, RunsWithFrozenBaseAndIsDeterministic) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(5, 0);
  cfg.epochs = 2;
  const auto before = fp::checksum(b.base);
  const auto t1 = fp::reprogram_blackbox(b.base, b.raw.tune, b.geometry, cfg, {10, 1e-3});
  const auto t2 = fp::reprogram_blackbox(b.base, b.raw.tune, b.geometry, cfg, {10, 1e-3});
  EXPECT_EQ(fp::trainable(t1), fp::trainable(t2));
  EXPECT_NE(fp::trainable(t1), fp::trainable(fp::init_trigger(b.geometry, cfg.init_seed)));
  EXPECT_EQ(fp::checksum(b.base), before);
}

TEST(LambdaSweep, OneSortedRowPerCellWithNonPositiveBias) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(0, 0);
  cfg.epochs = 2;
  fp::SweepOptions so;
  so.threads = 2;
  const auto before = fp::checksum(b.base);
  const auto cells = fp::lambda_sweep(b.base, b.raw.tune, b.raw.test, b.geometry, {5, 0, 1}, {3, 1}, cfg, so);
  ASSERT_EQ(cells.size(), 6u);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_LE(cells[i].point.neg_dp, 0.0);
    EXPECT_LE(cells[i].point.neg_eo, 0.0);
    EXPECT_GE(cells[i].point.accuracy, 0.0);
    EXPECT_LE(cells[i].point.accuracy, 1.0);
    if (i > 0) {
      const auto& p = cells[i - 1].point;
      const auto& c = cells[i].point;
      EXPECT_TRUE(p.lambda < c.lambda || (p.lambda == c.lambda && p.seed < c.seed));
    }
  }
  EXPECT_EQ(fp::checksum(b.base), before);
  EXPECT_THROW(fp::lambda_sweep(b.base, b.raw.tune, b.raw.test, b.geometry, {}, {0}, cfg), std::invalid_argument);
}

TEST(LambdaSweep, CellsMatchIndependentRunsRegardlessOfThreads) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(0, 0);
  cfg.epochs = 2;
  fp::SweepOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = fp::lambda_sweep(b.base, b.raw.tune, b.raw.test, b.geometry, {0, 2}, {0, 1}, cfg, one);
  const auto c = fp::lambda_sweep(b.base, b.raw.tune, b.raw.test, b.geometry, {0, 2}, {0, 1}, cfg, many);
  EXPECT_EQ(fp::sweep_to_csv(fp::points_of(a)), fp::sweep_to_csv(fp::points_of(c)));
  auto solo = cfg;
  solo.lambda = 2;
  solo.seed = 1;
  EXPECT_EQ(fp::trainable(a.back().trigger), fp::trainable(fp::reprogram(b.base, b.raw.tune, b.geometry, solo)));
}

TEST(SweepCsv, FormatsSixDecimalsSortedWithoutNegativeZero) {
  std::vector<fp::TradeoffPoint> pts{{2, 1, 0.5, -0.25, -1e-9}, {0.5, 3, 1, 0, -0.125}, {0.5, 0, 0.75, -0.1, -0.2}};
  EXPECT_EQ(fp::sweep_to_csv(pts),
            "lambda,seed,accuracy,neg_dp,neg_eo\n"
            "0.500000,0,0.750000,-0.100000,-0.200000\n"
            "0.500000,3,1.000000,0.000000,-0.125000\n"
            "2.000000,1,0.500000,-0.250000,0.000000\n");
}

TEST(TransferEval, OwnSourceReproducesSweepScores) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(0, 0);
  cfg.epochs = 2;
  const auto cells = fp::lambda_sweep(b.base, b.raw.tune, b.raw.test, b.geometry, {4}, {0}, cfg);
  const auto s = fp::transfer_eval(cells[0].trigger, b.base, b.raw.test);
  EXPECT_EQ(s.accuracy, cells[0].point.accuracy);
  EXPECT_EQ(-s.eo, cells[0].point.neg_eo);
  EXPECT_EQ(-s.dp, cells[0].point.neg_dp);
}

TEST(TransferEval, ZeroAdditiveTriggerGivesTargetBaseScores) {
  const auto& b = small_bench();
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::additive;
  g.data_width = 12;
  fp::TrainConfig cfg;
  cfg.epochs = 3;
  const auto target = fp::train_base(b.raw.train, fp::classifier_spec(12, 2), cfg);
  const auto with = fp::transfer_eval(fp::init_trigger(g, 0), target, b.raw.test);
  const auto without = fp::evaluate(target, b.raw.test);
  EXPECT_EQ(with.accuracy, without.accuracy);
  EXPECT_EQ(with.dp, without.dp);
  EXPECT_EQ(with.eo, without.eo);
}

TEST(TransferEval, RejectsGeometryMismatch) {
  const auto& b = small_bench();
  EXPECT_THROW(fp::transfer_eval(fp::init_trigger(concat_geometry(12, 2), 0), b.base, b.raw.test), fp::ShapeError);
}

TEST(SubsampleTune, FullRatioIsIdentity) {
  const auto& b = small_bench();
  EXPECT_EQ(fp::subsample_tune(b.raw.tune, 1.0, 3), b.raw.tune);
}

TEST(SubsampleTune, HalfKeepsStrataProportions) {
  fp::GenSpec gs;
  gs.n = 100;
  gs.d = 10;
  const auto ds = fp::gen_synth(gs);
  const auto half = fp::subsample_tune(ds, 0.5, 9);
  EXPECT_NEAR(static_cast<double>(half.n()), 50.0, 2.0);
  std::map<std::pair<std::size_t, std::size_t>, double> full_count, half_count;
  for (std::size_t i = 0; i < ds.n(); ++i) full_count[{ds.y[i], ds.z[i]}] += 1;
  for (std::size_t i = 0; i < half.n(); ++i) half_count[{half.y[i], half.z[i]}] += 1;
  for (const auto& [cell, n] : full_count) {
    EXPECT_NEAR(half_count[cell] / static_cast<double>(half.n()), n / static_cast<double>(ds.n()), 1.0 / n + 0.02);
  }
  EXPECT_EQ(fp::subsample_tune(ds, 0.5, 9), half);
}

TEST(SubsampleTune, TinyRatioKeepsOneRowPerCell) {
  fp::GenSpec gs;
  gs.n = 200;
  gs.d = 10;
  const auto ds = fp::gen_synth(gs);
  const auto tiny = fp::subsample_tune(ds, 0.001, 1);
  std::set<std::pair<std::size_t, std::size_t>> cells_full, cells_tiny;
  for (std::size_t i = 0; i < ds.n(); ++i) cells_full.insert({ds.y[i], ds.z[i]});
  for (std::size_t i = 0; i < tiny.n(); ++i) cells_tiny.insert({tiny.y[i], tiny.z[i]});
  EXPECT_EQ(tiny.n(), cells_full.size());
  EXPECT_EQ(cells_tiny, cells_full);
}

TEST(SubsampleTune, RejectsRatioOutsideUnitInterval) {
  const auto& b = small_bench();
  EXPECT_THROW(fp::subsample_tune(b.raw.tune, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(fp::subsample_tune(b.raw.tune, 1.5, 1), std::invalid_argument);
}

TEST(LimitedData, OnePointPerRatioAndFrozenBase) {
  const auto& b = small_bench();
  auto cfg = quick_reprogram(5, 0);
  cfg.epochs = 2;
  const auto before = fp::checksum(b.base);
  const auto pts = fp::limited_data(b.base, b.raw.tune, b.raw.test, b.geometry, {1, 0.5, 0.2, 0.1, 0.01}, cfg);
  ASSERT_EQ(pts.size(), 5u);
  EXPECT_EQ(pts[0].tune_rows, b.raw.tune.n());
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE(pts[i].tune_rows, pts[i - 1].tune_rows);
  EXPECT_EQ(fp::checksum(b.base), before);
}

TEST(Spearman, MatchesHandComputedRanks) {
  EXPECT_DOUBLE_EQ(fp::spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(fp::spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  // ranks a = (1, 2.5, 2.5, 4), b = (1, 3, 2, 4): Pearson of the ranks
  const std::vector<double> ra{1, 2.5, 2.5, 4}, rb{1, 3, 2, 4};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - 2.5) * (rb[i] - 2.5);
    saa += (ra[i] - 2.5) * (ra[i] - 2.5);
    sbb += (rb[i] - 2.5) * (rb[i] - 2.5);
  }
  EXPECT_NEAR(fp::spearman({0, 5, 5, 9}, {1, 7, 3, 8}), sab / std::sqrt(saa * sbb), 1e-15);
}

TEST(TrainConfig, RejectsInvalidValues) {
  fp::TrainConfig cfg;
  cfg.lambda = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr_trigger = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
