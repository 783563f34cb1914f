// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairprog {

struct SimplexOptions {
  double tau_tolerance = 1e-10;
  int max_iterations = 200;
};

/// Euclidean projection onto the probability simplex,
/// out_i = max(v_i - tau, 0) with tau chosen so the outputs sum to one.
///
/// tau is located by bisection on the decreasing function
/// sum_i max(v_i - tau, 0) - 1, bracketed by [min(v) - 1, max(v)]. Once the
/// bracket is tight the support is fixed, and tau is recomputed in closed
/// form on that support so the sum error drops to rounding level.
inline std::vector<double> project_simplex(std::span<const double> v, const SimplexOptions& opt = {}) {
  if (v.empty()) throw std::invalid_argument("project_simplex: empty vector");
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument("project_simplex: non-finite input");
  }
  const auto excess = [&](double tau) {
    double s = 0.0;
    for (double x : v) s += std::max(x - tau, 0.0);
    return s - 1.0;
  };
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  double lo = *mn - 1.0;
  double hi = *mx;
  for (int it = 0; it < opt.max_iterations && hi - lo > opt.tau_tolerance; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (excess(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double tau = 0.5 * (lo + hi);
  for (int pass = 0; pass < 3; ++pass) {
    double total = 0.0;
    std::size_t active = 0;
    for (double x : v) {
      if (x > tau) {
        total += x;
        ++active;
      }
    }
    if (active == 0) break;
    const double refined = (total - 1.0) / static_cast<double>(active);
    if (refined == tau) break;
    tau = refined;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

/// One-hot at the argmax; ties resolve to the lowest index.
inline std::vector<double> straight_through_emit(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("straight_through_emit: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  std::vector<double> out(v.size(), 0.0);
  out[best] = 1.0;
  return out;
}

}  // namespace fairprog
