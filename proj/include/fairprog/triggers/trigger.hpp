// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fairprog/diffcore/graph.hpp"
#include "fairprog/rng.hpp"
#include "fairprog/triggers/simplex.hpp"

namespace fairprog {

enum class TriggerKind { additive, concat, border, patch, soft, hard };

inline std::string to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::additive: return "additive";
    case TriggerKind::concat: return "concat";
    case TriggerKind::border: return "border";
    case TriggerKind::patch: return "patch";
    case TriggerKind::soft: return "soft";
    case TriggerKind::hard: return "hard";
  }
  return "?";
}

inline TriggerKind parse_trigger_kind(const std::string& s) {
  for (auto k : {TriggerKind::additive, TriggerKind::concat, TriggerKind::border, TriggerKind::patch,
                 TriggerKind::soft, TriggerKind::hard}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown trigger kind '" + s + "' (expected additive|concat|border|patch|soft|hard)");
}

/// Where appended slots go relative to the features.
enum class SlotPosition { prefix, suffix };

inline std::string to_string(SlotPosition p) { return p == SlotPosition::prefix ? "prefix" : "suffix"; }

inline SlotPosition parse_position(const std::string& s) {
  if (s == "prefix") return SlotPosition::prefix;
  if (s == "suffix") return SlotPosition::suffix;
  throw std::invalid_argument("unknown trigger position '" + s + "' (expected prefix|suffix)");
}

/// x + delta, same width as x.
struct AdditiveTrigger {
  Tensor delta;  // {d}
};

/// [delta, x] (or [x, delta]); g is the identity.
struct ConcatTrigger {
  Tensor delta;  // {p}
  SlotPosition position = SlotPosition::prefix;
};

/// The image is shrunk to (side - 2 width)^2 and framed by a ring of trigger
/// pixels. delta lists the ring pixels in row-major order.
struct BorderTrigger {
  std::size_t side = 0;
  std::size_t width = 0;
  Tensor delta;
};

/// A patch x patch block at (row, col) is replaced by delta.
struct PatchTrigger {
  std::size_t side = 0;
  std::size_t patch = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  Tensor delta;  // {patch * patch}
};

/// Text-style slots: slot i emits embedding^T v_i. `v` holds one
/// probability vector per slot ({slots, vocab}); `embedding` is fixed.
struct TokenSlots {
  Tensor v;
  Tensor embedding;  // {vocab, embed_dim}
  SlotPosition position = SlotPosition::prefix;

  std::size_t slots() const { return v.rows(); }
  std::size_t vocab() const { return embedding.rows(); }
  std::size_t embed_dim() const { return embedding.cols(); }
};

/// Continuous mixture of embeddings, kept on the simplex after every step.
struct SoftSimplexTrigger : TokenSlots {};

/// Emits the embedding of argmax v_i; gradients pass straight through.
struct HardTrigger : TokenSlots {};

using Trigger = std::variant<AdditiveTrigger, ConcatTrigger, BorderTrigger, PatchTrigger, SoftSimplexTrigger, HardTrigger>;

inline TriggerKind kind_of(const Trigger& t) { return static_cast<TriggerKind>(t.index()); }

/// The tensor the optimizer updates.
inline Tensor& trainable(Trigger& t) {
  return std::visit(
      [](auto& trig) -> Tensor& {
        if constexpr (std::is_base_of_v<TokenSlots, std::decay_t<decltype(trig)>>) {
          return trig.v;
        } else {
          return trig.delta;
        }
      },
      t);
}

inline const Tensor& trainable(const Trigger& t) { return trainable(const_cast<Trigger&>(t)); }

/// Everything needed to build a fresh trigger of a kind.
struct TriggerGeometry {
  TriggerKind kind = TriggerKind::concat;
  std::size_t data_width = 0;  // d, or side^2 for images
  std::size_t size = 5;        // concat/token slots, border width or patch side
  std::size_t side = 0;        // image side (border/patch)
  std::size_t anchor_row = 0;
  std::size_t anchor_col = 0;
  std::size_t vocab = 16;
  std::size_t embed_dim = 4;
  SlotPosition position = SlotPosition::prefix;
};

/// Border and patch sizes scaled from 20 and 80 pixels at 224 resolution.
inline std::size_t default_image_trigger_size(TriggerKind kind, std::size_t side) {
  const double frac = kind == TriggerKind::border ? 20.0 / 224.0 : 80.0 / 224.0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frac * static_cast<double>(side))));
}

inline std::size_t ring_size(std::size_t side, std::size_t width) {
  const std::size_t inner = side - 2 * width;
  return side * side - inner * inner;
}

inline void validate(const TriggerGeometry& g) {
  auto fail = [](const std::string& m) { throw ShapeError("trigger geometry: " + m); };
  if (g.data_width == 0) fail("data width must be positive");
  switch (g.kind) {
    case TriggerKind::additive: break;
    case TriggerKind::concat:
      if (g.size == 0) fail("concat trigger needs at least one slot");
      break;
    case TriggerKind::soft:
    case TriggerKind::hard:
      if (g.size == 0 || g.vocab < 2 || g.embed_dim == 0) fail("token trigger needs slots, vocab >= 2, embed_dim >= 1");
      break;
    case TriggerKind::border:
      if (g.side * g.side != g.data_width) fail("data width " + std::to_string(g.data_width) + " is not side^2");
      if (g.size == 0 || 2 * g.size >= g.side) fail("border width must leave an interior");
      break;
    case TriggerKind::patch:
      if (g.side * g.side != g.data_width) fail("data width " + std::to_string(g.data_width) + " is not side^2");
      if (g.size == 0 || g.anchor_row + g.size > g.side || g.anchor_col + g.size > g.side) {
        fail("patch does not fit inside the image");
      }
      break;
  }
}

/// Fresh trigger: zero deltas, uniform slot distributions. The seed only
/// feeds the token embedding matrix.
inline Trigger init_trigger(const TriggerGeometry& g, std::uint64_t seed) {
  validate(g);
  switch (g.kind) {
    case TriggerKind::additive: return AdditiveTrigger{Tensor({g.data_width}, 0.0)};
    case TriggerKind::concat: return ConcatTrigger{Tensor({g.size}, 0.0), g.position};
    case TriggerKind::border: return BorderTrigger{g.side, g.size, Tensor({ring_size(g.side, g.size)}, 0.0)};
    case TriggerKind::patch:
      return PatchTrigger{g.side, g.size, g.anchor_row, g.anchor_col, Tensor({g.size * g.size}, 0.0)};
    case TriggerKind::soft:
    case TriggerKind::hard: {
      Rng rng(seed);
      Tensor emb({g.vocab, g.embed_dim});
      for (double& e : emb.values()) e = rng.normal();
      TokenSlots slots{Tensor({g.size, g.vocab}, 1.0 / static_cast<double>(g.vocab)), std::move(emb), g.position};
      if (g.kind == TriggerKind::soft) return SoftSimplexTrigger{std::move(slots)};
      return HardTrigger{std::move(slots)};
    }
  }
  throw std::logic_error("init_trigger: unreachable");
}

/// Width of the classifier input once this trigger is applied to rows of
/// width `data_width`.
inline std::size_t model_input_width(const TriggerGeometry& g) {
  switch (g.kind) {
    case TriggerKind::concat: return g.data_width + g.size;
    case TriggerKind::soft:
    case TriggerKind::hard: return g.data_width + g.size * g.embed_dim;
    default: return g.data_width;
  }
}

inline TriggerGeometry geometry_of(const Trigger& t, std::size_t data_width) {
  TriggerGeometry g;
  g.kind = kind_of(t);
  g.data_width = data_width;
  std::visit(
      [&](const auto& trig) {
        using T = std::decay_t<decltype(trig)>;
        if constexpr (std::is_same_v<T, ConcatTrigger>) {
          g.size = trig.delta.size();
          g.position = trig.position;
        } else if constexpr (std::is_same_v<T, BorderTrigger>) {
          g.side = trig.side;
          g.size = trig.width;
        } else if constexpr (std::is_same_v<T, PatchTrigger>) {
          g.side = trig.side;
          g.size = trig.patch;
          g.anchor_row = trig.row;
          g.anchor_col = trig.col;
        } else if constexpr (std::is_base_of_v<TokenSlots, T>) {
          g.size = trig.slots();
          g.vocab = trig.vocab();
          g.embed_dim = trig.embed_dim();
          g.position = trig.position;
        }
      },
      t);
  return g;
}

/// Area-averaging weights from `from` source cells onto `to` target cells;
/// row a of the result spreads target cell a over the source cells it covers.
inline Tensor area_weights(std::size_t from, std::size_t to) {
  if (to == 0 || to > from) {
    throw std::invalid_argument("downscale: target " + std::to_string(to) + " must be in [1, " + std::to_string(from) + "]");
  }
  Tensor w({to, from});
  const double scale = static_cast<double>(from) / static_cast<double>(to);
  for (std::size_t a = 0; a < to; ++a) {
    const double lo = static_cast<double>(a) * scale;
    const double hi = static_cast<double>(a + 1) * scale;
    for (std::size_t i = 0; i < from; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) w(a, i) = overlap / scale;
    }
  }
  return w;
}

/// Area-average pooling of a square image to target x target.
inline Tensor downscale(const Tensor& image, std::size_t target) {
  if (image.rank() != 2 || image.rows() != image.cols()) {
    throw ShapeError("downscale: expected a square image, got " + shape_string(image.shape()));
  }
  const Tensor w = area_weights(image.rows(), target);
  return matmul(matmul(w, image), transpose(w));
}

namespace detail {

/// Linear maps for image triggers on flattened rows: out = x * keep + delta * place.
struct ImageMaps {
  Tensor keep;   // {s^2, s^2}
  Tensor place;  // {|delta|, s^2}
};

inline ImageMaps border_maps(std::size_t side, std::size_t width) {
  const std::size_t inner = side - 2 * width;
  const Tensor w = area_weights(side, inner);
  const std::size_t n = side * side;
  ImageMaps m{Tensor({n, n}), Tensor({ring_size(side, width), n})};
  std::size_t ring = 0;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const std::size_t out = r * side + c;
      const bool interior = r >= width && r < side - width && c >= width && c < side - width;
      if (!interior) {
        m.place(ring++, out) = 1.0;
        continue;
      }
      const std::size_t a = r - width, b = c - width;
      for (std::size_t i = 0; i < side; ++i) {
        if (w(a, i) == 0.0) continue;
        for (std::size_t j = 0; j < side; ++j) {
          if (w(b, j) != 0.0) m.keep(i * side + j, out) = w(a, i) * w(b, j);
        }
      }
    }
  }
  return m;
}

inline ImageMaps patch_maps(const PatchTrigger& t) {
  const std::size_t n = t.side * t.side;
  ImageMaps m{Tensor({n, n}), Tensor({t.patch * t.patch, n})};
  for (std::size_t r = 0; r < t.side; ++r) {
    for (std::size_t c = 0; c < t.side; ++c) {
      const std::size_t out = r * t.side + c;
      const bool inside = r >= t.row && r < t.row + t.patch && c >= t.col && c < t.col + t.patch;
      if (inside) {
        m.place((r - t.row) * t.patch + (c - t.col), out) = 1.0;
      } else {
        m.keep(out, out) = 1.0;
      }
    }
  }
  return m;
}

inline Var broadcast_row(Var row, std::size_t n) {
  Graph& g = *row.graph;
  const Tensor& rv = g.value(row);
  Var as_row = rv.rank() == 2 && rv.rows() == 1 ? row : reshape(row, {1, rv.size()});
  return matmul(g.constant(Tensor({n, 1}, 1.0)), as_row);
}

inline Var place_slots(Var slots_row, Var x, SlotPosition pos) {
  const Var tiled = broadcast_row(slots_row, x.graph->value(x).rows());
  return pos == SlotPosition::prefix ? concat(tiled, x) : concat(x, tiled);
}

inline void require_width(const Tensor& x, std::size_t width, const char* kind) {
  if (x.rank() != 2 || x.cols() != width) {
    throw ShapeError(std::string(kind) + " trigger: input " + shape_string(x.shape()) + " needs " +
                     std::to_string(width) + " columns");
  }
}

}  // namespace detail

/// Applies a trigger to a batch on the graph. `param` must hold the
/// trigger's trainable tensor (so gradients reach it); `x` is data and is
/// normally a constant.
inline Var apply_trigger(const Trigger& trigger, Var param, Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  if (g.value(param).shape() != trainable(trigger).shape()) {
    throw ShapeError("apply_trigger: parameter " + shape_string(g.value(param).shape()) + " does not match trigger " +
                     shape_string(trainable(trigger).shape()));
  }
  return std::visit(
      [&](const auto& t) -> Var {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, AdditiveTrigger>) {
          detail::require_width(xv, t.delta.size(), "additive");
          return add(x, detail::broadcast_row(param, xv.rows()));
        } else if constexpr (std::is_same_v<T, ConcatTrigger>) {
          if (xv.rank() != 2) throw ShapeError("concat trigger: input must be a matrix");
          return detail::place_slots(param, x, t.position);
        } else if constexpr (std::is_same_v<T, BorderTrigger>) {
          detail::require_width(xv, t.side * t.side, "border");
          const auto maps = detail::border_maps(t.side, t.width);
          const Var ring = matmul(reshape(param, {1, t.delta.size()}), g.constant(maps.place));
          return clamp(add(matmul(x, g.constant(maps.keep)), detail::broadcast_row(ring, xv.rows())), 0.0, 1.0);
        } else if constexpr (std::is_same_v<T, PatchTrigger>) {
          detail::require_width(xv, t.side * t.side, "patch");
          const auto maps = detail::patch_maps(t);
          const Var block = matmul(reshape(param, {1, t.delta.size()}), g.constant(maps.place));
          return clamp(add(matmul(x, g.constant(maps.keep)), detail::broadcast_row(block, xv.rows())), 0.0, 1.0);
        } else {
          if (xv.rank() != 2) throw ShapeError("token trigger: input must be a matrix");
          Var weights = param;
          if constexpr (std::is_same_v<T, HardTrigger>) weights = straight_through(param);
          const Var slots = matmul(weights, g.constant(t.embedding));
          return detail::place_slots(reshape(slots, {1, t.slots() * t.embed_dim()}), x, t.position);
        }
      },
      trigger);
}

/// Graph-free application.
inline Tensor apply_trigger(const Trigger& trigger, const Tensor& x) {
  Graph g;
  const Var param = g.constant(trainable(trigger));
  return g.value(apply_trigger(trigger, param, g.constant(x)));
}

/// What the classifier sees with no trigger: slot-style triggers get empty
/// (zero) slots, every other kind leaves the input untouched.
inline Tensor plain_input(const TriggerGeometry& g, const Tensor& x) {
  const std::size_t extra = model_input_width(g) - g.data_width;
  if (x.rank() != 2 || x.cols() != g.data_width) {
    throw ShapeError("plain_input: input " + shape_string(x.shape()) + " needs " + std::to_string(g.data_width) +
                     " columns");
  }
  if (extra == 0) return x;
  const Tensor zeros({x.rows(), extra}, 0.0);
  return g.position == SlotPosition::prefix ? hconcat(zeros, x) : hconcat(x, zeros);
}

/// Re-projects every slot distribution of a token trigger onto the simplex;
/// no-op for other kinds.
inline void project_slots(Trigger& trigger) {
  std::visit(
      [](auto& t) {
        if constexpr (std::is_base_of_v<TokenSlots, std::decay_t<decltype(t)>>) {
          for (std::size_t i = 0; i < t.v.rows(); ++i) {
            auto row = t.v.values().subspan(i * t.v.cols(), t.v.cols());
            const auto projected = project_simplex(row);
            std::copy(projected.begin(), projected.end(), row.begin());
          }
        }
      },
      trigger);
}

}  // namespace fairprog
