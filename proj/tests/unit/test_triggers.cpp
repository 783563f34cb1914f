// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "fairprog/diffcore/gradcheck.hpp"
#include "fairprog/rng.hpp"
#include "fairprog/triggers/io.hpp"
#include "fairprog/triggers/simplex.hpp"
#include "fairprog/triggers/trigger.hpp"

namespace fp = fairprog;
using fp::Tensor;

namespace {

// Sort-based exact projection: with u sorted descending, rho is the largest
// j such that u_j - (sum_{i<=j} u_i - 1)/j > 0.
std::vector<double> sort_projection(const std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0) theta = t;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Simplex, PointOnSimplexIsFixed) {
  const auto p = fp::project_simplex(std::vector<double>{0.3, 0.7});
  EXPECT_NEAR(p[0], 0.3, 1e-12);
  EXPECT_NEAR(p[1], 0.7, 1e-12);
}

TEST(Simplex, SymmetricInput) {
  for (double x : fp::project_simplex(std::vector<double>{2, 2, 2})) EXPECT_NEAR(x, 1.0 / 3.0, 1e-12);
}

TEST(Simplex, TwoDimensionalClosedForm) {
  // On two coordinates the piecewise-linear equation max(1.2-t,0)+max(-0.2-t,0)=1
  // has root t = 0.2 on the branch where only the first term is active.
  const auto p = fp::project_simplex(std::vector<double>{1.2, -0.2});
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Simplex, MatchesSortOracleAndInvariants) {
  fp::Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = 2 + rng.below(49);
    std::vector<double> v(dim);
    const double spread = rng.uniform(0.1, 5.0);
    for (double& x : v) x = rng.normal() * spread;
    const auto p = fp::project_simplex(v);
    const auto oracle = sort_projection(v);
    for (std::size_t i = 0; i < dim; ++i) ASSERT_NEAR(p[i], oracle[i], 1e-6);
    EXPECT_GE(*std::min_element(p.begin(), p.end()), 0.0);
    EXPECT_LE(std::abs(sum_of(p) - 1.0), 1e-8);
    const auto pp = fp::project_simplex(p);
    for (std::size_t i = 0; i < dim; ++i) ASSERT_LE(std::abs(pp[i] - p[i]), 1e-10);
  }
}

TEST(StraightThrough, ArgmaxAndTieBreak) {
  EXPECT_EQ(fp::straight_through_emit(std::vector<double>{0.2, 0.8}), (std::vector<double>{0, 1}));
  EXPECT_EQ(fp::straight_through_emit(std::vector<double>{0.5, 0.5}), (std::vector<double>{1, 0}));
}

TEST(Apply, ConcatPrepends) {
  const fp::Trigger t = fp::ConcatTrigger{Tensor::vector({9}), fp::SlotPosition::prefix};
  EXPECT_EQ(fp::apply_trigger(t, Tensor::matrix({{1, 2}})), Tensor::matrix({{9, 1, 2}}));
  const fp::Trigger s = fp::ConcatTrigger{Tensor::vector({9}), fp::SlotPosition::suffix};
  EXPECT_EQ(fp::apply_trigger(s, Tensor::matrix({{1, 2}})), Tensor::matrix({{1, 2, 9}}));
}

TEST(Apply, ConcatKeepsFeaturesExactly) {
  fp::Rng rng(3);
  Tensor x({5, 4});
  for (double& v : x.values()) v = rng.normal();
  const fp::Trigger t = fp::ConcatTrigger{Tensor::vector({0.1, -2, 3}), fp::SlotPosition::prefix};
  const Tensor out = fp::apply_trigger(t, x);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out(i, 3 + j), x(i, j));
  }
}

TEST(Apply, PatchOverwritesBlock) {
  const fp::Trigger t = fp::PatchTrigger{4, 2, 0, 0, Tensor({4}, 5.0)};
  // clamping to the pixel range maps 5 to 1
  const Tensor out = fp::apply_trigger(t, Tensor({1, 16}, 0.0));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out[r * 4 + c], (r < 2 && c < 2) ? 1.0 : 0.0);
  }
  const fp::Trigger mid = fp::PatchTrigger{4, 2, 0, 0, Tensor({4}, 0.5)};
  const Tensor o2 = fp::apply_trigger(mid, Tensor({1, 16}, 0.0));
  EXPECT_EQ(o2[0], 0.5);
  EXPECT_EQ(o2[5], 0.5);
  EXPECT_EQ(o2[2], 0.0);
}

TEST(Apply, AdditiveZeroIsIdentity) {
  const fp::Trigger t = fp::AdditiveTrigger{Tensor({3}, 0.0)};
  const Tensor x = Tensor::matrix({{1, -2, 3}, {0.5, 0.25, -8}});
  EXPECT_EQ(fp::apply_trigger(t, x), x);
}

TEST(Apply, GeometryMismatchRejected) {
  const fp::Trigger add = fp::AdditiveTrigger{Tensor({3}, 0.0)};
  EXPECT_THROW(fp::apply_trigger(add, Tensor({2, 4}, 0.0)), fp::ShapeError);
  const fp::Trigger patch = fp::PatchTrigger{4, 2, 0, 0, Tensor({4}, 0.0)};
  EXPECT_THROW(fp::apply_trigger(patch, Tensor({2, 15}, 0.0)), fp::ShapeError);
}

TEST(Apply, PixelPartitionForImageTriggers) {
  fp::Rng rng(8);
  const std::size_t s = 8;
  Tensor img({1, s * s});
  for (double& v : img.values()) v = rng.uniform(0.05, 0.95);
  Tensor square({s, s}, img.data());

  fp::BorderTrigger border{s, 2, Tensor({fp::ring_size(s, 2)})};
  for (double& v : border.delta.values()) v = rng.uniform(0.1, 0.9);
  const Tensor inner = fp::downscale(square, s - 4);
  const Tensor bout = fp::apply_trigger(fp::Trigger(border), img);
  std::size_t ring = 0;
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const bool interior = r >= 2 && r < s - 2 && c >= 2 && c < s - 2;
      if (interior) {
        EXPECT_NEAR(bout[r * s + c], inner(r - 2, c - 2), 1e-14);
      } else {
        EXPECT_EQ(bout[r * s + c], border.delta[ring++]);
      }
    }
  }

  fp::PatchTrigger patch{s, 3, 2, 4, Tensor({9})};
  for (double& v : patch.delta.values()) v = rng.uniform(0.1, 0.9);
  const Tensor pout = fp::apply_trigger(fp::Trigger(patch), img);
  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const bool inside = r >= 2 && r < 5 && c >= 4 && c < 7;
      EXPECT_EQ(pout[r * s + c], inside ? patch.delta[(r - 2) * 3 + (c - 4)] : img[r * s + c]);
    }
  }
}

TEST(Apply, GradientReachesTriggerNotData) {
  fp::Rng rng(4);
  const fp::Trigger t = fp::ConcatTrigger{Tensor::vector({0.3, -0.1}), fp::SlotPosition::prefix};
  fp::Graph g;
  const fp::Var p = g.parameter(fp::trainable(t));
  const fp::Var x = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const fp::Var out = fp::apply_trigger(t, p, x);
  g.backward(fp::sum(fp::mul(out, out)));
  EXPECT_FALSE(g.requires_grad(x));
  // d/d delta of sum over 2 rows of delta^2 = 4 delta
  EXPECT_NEAR(g.grad(p)[0], 1.2, 1e-15);
  EXPECT_NEAR(g.grad(p)[1], -0.4, 1e-15);
}

TEST(Apply, BorderAndPatchGradientsMatchFiniteDifferences) {
  fp::Rng rng(10);
  const std::size_t s = 6;
  Tensor img({2, s * s});
  for (double& v : img.values()) v = rng.uniform(0.1, 0.6);
  Tensor proj({2, s * s});
  for (double& v : proj.values()) v = rng.normal();
  for (int which = 0; which < 2; ++which) {
    fp::Trigger t = which == 0 ? fp::Trigger(fp::BorderTrigger{s, 1, Tensor({fp::ring_size(s, 1)})})
                               : fp::Trigger(fp::PatchTrigger{s, 2, 1, 3, Tensor({4})});
    for (double& v : fp::trainable(t).values()) v = rng.uniform(0.2, 0.8);
    const fp::LossBuilder build = [&](fp::Graph& g, const std::vector<fp::Var>& v) {
      return fp::sum(fp::mul(fp::apply_trigger(t, v[0], g.constant(img)), g.constant(proj)));
    };
    EXPECT_LT(fp::check_gradients(build, {fp::trainable(t)}).max_rel_error, 1e-4);
  }
}

TEST(Downscale, IdentityMeanAndConstant) {
  const Tensor img = Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_EQ(fp::downscale(img, 3), img);
  EXPECT_EQ(fp::downscale(Tensor::matrix({{0, 0}, {4, 4}}), 1), Tensor::matrix({{2}}));
  const Tensor c = fp::downscale(Tensor({5, 5}, 0.4), 3);
  for (double v : c.values()) EXPECT_NEAR(v, 0.4, 1e-15);
  EXPECT_THROW(fp::downscale(img, 0), std::invalid_argument);
}

TEST(Downscale, FractionalBoxesWeightedByOverlap) {
  // 3 -> 2: output cell 0 covers source [0, 1.5): weights 2/3, 1/3
  const Tensor img = Tensor::matrix({{3, 0, 0}, {0, 0, 0}, {0, 0, 0}});
  const Tensor out = fp::downscale(img, 2);
  EXPECT_NEAR(out(0, 0), 3.0 * (2.0 / 3.0) * (2.0 / 3.0), 1e-15);
  EXPECT_EQ(out(1, 1), 0.0);
}

TEST(Init, AdditiveIdentityAndDeterminism) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::additive;
  g.data_width = 4;
  const auto t = fp::init_trigger(g, 5);
  const Tensor x = Tensor::matrix({{1, 2, 3, 4}});
  EXPECT_EQ(fp::apply_trigger(t, x), x);
  g.kind = fp::TriggerKind::soft;
  g.size = 3;
  EXPECT_EQ(fp::trigger_to_json(fp::init_trigger(g, 5)), fp::trigger_to_json(fp::init_trigger(g, 5)));
}

TEST(Init, SoftUniformEmitsEmbeddingMean) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::soft;
  g.data_width = 2;
  g.size = 2;
  g.vocab = 5;
  g.embed_dim = 3;
  const auto t = fp::init_trigger(g, 17);
  const auto& soft = std::get<fp::SoftSimplexTrigger>(t);
  const Tensor out = fp::apply_trigger(t, Tensor::matrix({{7, 8}}));
  ASSERT_EQ(out.cols(), 2 * 3 + 2u);
  for (std::size_t slot = 0; slot < 2; ++slot) {
    for (std::size_t e = 0; e < 3; ++e) {
      double mean = 0.0;
      for (std::size_t w = 0; w < 5; ++w) mean += soft.embedding(w, e);
      EXPECT_NEAR(out[slot * 3 + e], mean / 5.0, 1e-14);
    }
  }
  EXPECT_EQ(out[6], 7.0);
  EXPECT_EQ(out[7], 8.0);
}

TEST(Init, HardUniformEmitsTokenZero) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::hard;
  g.data_width = 1;
  g.size = 1;
  g.vocab = 4;
  g.embed_dim = 2;
  const auto t = fp::init_trigger(g, 3);
  const auto& hard = std::get<fp::HardTrigger>(t);
  const Tensor out = fp::apply_trigger(t, Tensor::matrix({{0.5}}));
  EXPECT_EQ(out[0], hard.embedding(0, 0));
  EXPECT_EQ(out[1], hard.embedding(0, 1));
}

TEST(Init, InvalidGeometryRejected) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::border;
  g.data_width = 15;
  g.side = 4;
  EXPECT_THROW(fp::init_trigger(g, 0), fp::ShapeError);
  g.kind = fp::TriggerKind::patch;
  g.data_width = 16;
  g.size = 3;
  g.anchor_row = 2;
  EXPECT_THROW(fp::init_trigger(g, 0), fp::ShapeError);
}

TEST(Init, DefaultImageSizesScaleWithSide) {
  EXPECT_EQ(fp::default_image_trigger_size(fp::TriggerKind::border, 224), 20u);
  EXPECT_EQ(fp::default_image_trigger_size(fp::TriggerKind::patch, 224), 80u);
  EXPECT_EQ(fp::default_image_trigger_size(fp::TriggerKind::patch, 28), 10u);
}

TEST(Hard, ForwardAlwaysOneHotAndGradientStraightThrough) {
  fp::Rng rng(21);
  fp::TokenSlots slots{Tensor({3, 4}), Tensor({4, 4}), fp::SlotPosition::prefix};
  for (std::size_t i = 0; i < 4; ++i) slots.embedding(i, i) = 1.0;  // identity embedding exposes the one-hot
  for (int trial = 0; trial < 50; ++trial) {
    for (double& v : slots.v.values()) v = rng.uniform();
    fp::Trigger t = fp::HardTrigger{slots};
    fp::project_slots(t);
    const Tensor out = fp::apply_trigger(t, Tensor::matrix({{0.0}}));
    for (std::size_t s = 0; s < 3; ++s) {
      double total = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double e = out[s * 4 + k];
        EXPECT_TRUE(e == 0.0 || e == 1.0);
        total += e;
      }
      EXPECT_EQ(total, 1.0);
    }
  }
  fp::Graph g;
  const fp::Trigger t = fp::HardTrigger{slots};
  const fp::Var v = g.parameter(fp::trainable(t));
  Tensor w({1, 13});
  for (double& x : w.values()) x = rng.normal();
  g.backward(fp::sum(fp::mul(fp::apply_trigger(t, v, g.constant(Tensor::matrix({{0.0}}))), g.constant(w))));
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(g.grad(v)(s, k), w[s * 4 + k]);
  }
}

TEST(ProjectSlots, KeepsEverySlotOnSimplex) {
  fp::Rng rng(6);
  fp::TokenSlots slots{Tensor({4, 7}), Tensor({7, 2}, 1.0), fp::SlotPosition::suffix};
  for (double& v : slots.v.values()) v = rng.normal();
  fp::Trigger t = fp::SoftSimplexTrigger{slots};
  fp::project_slots(t);
  const Tensor& v = fp::trainable(t);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
      EXPECT_GE(v(i, k), 0.0);
      total += v(i, k);
    }
    EXPECT_NEAR(total, 1.0, 1e-8);
  }
}

TEST(PlainInput, ZeroSlotsForConcat) {
  fp::TriggerGeometry g;
  g.kind = fp::TriggerKind::concat;
  g.data_width = 2;
  g.size = 3;
  EXPECT_EQ(fp::model_input_width(g), 5u);
  EXPECT_EQ(fp::plain_input(g, Tensor::matrix({{1, 2}})), Tensor::matrix({{0, 0, 0, 1, 2}}));
  const auto t = fp::init_trigger(g, 0);
  EXPECT_EQ(fp::apply_trigger(t, Tensor::matrix({{1, 2}})), fp::plain_input(g, Tensor::matrix({{1, 2}})));
}

TEST(TriggerFile, RoundTripEveryKind) {
  const auto dir = std::filesystem::temp_directory_path() / "fairprog_test_triggers";
  std::filesystem::create_directories(dir);
  fp::Rng rng(1);
  for (auto kind : {fp::TriggerKind::additive, fp::TriggerKind::concat, fp::TriggerKind::border,
                    fp::TriggerKind::patch, fp::TriggerKind::soft, fp::TriggerKind::hard}) {
    fp::TriggerGeometry g;
    g.kind = kind;
    g.side = 6;
    g.data_width = 36;
    g.size = 2;
    g.anchor_row = 1;
    g.anchor_col = 2;
    auto t = fp::init_trigger(g, 9);
    for (double& v : fp::trainable(t).values()) v = rng.normal();
    const auto path = (dir / (fp::to_string(kind) + ".json")).string();
    fp::save_trigger(t, path);
    const auto back = fp::load_trigger(path);
    EXPECT_EQ(fp::kind_of(back), kind);
    EXPECT_EQ(fp::serialize_trigger(back), fp::serialize_trigger(t));
    EXPECT_EQ(fp::trainable(back), fp::trainable(t));
  }
}

TEST(TriggerFile, RejectsInconsistentGeometry) {
  auto j = fp::trigger_to_json(fp::Trigger(fp::PatchTrigger{4, 2, 0, 0, Tensor({4}, 0.0)}));
  j["patch"] = 3;
  EXPECT_THROW(fp::trigger_from_json(j), fp::FormatError);
}
