// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fairprog/diffcore/graph.hpp"

namespace fairprog {

/// Builds a scalar loss from leaf variables holding `inputs`.
using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

/// Error between analytic and numeric derivatives, measured relative to the
/// larger magnitude with a floor of 1 so that near-zero derivatives are
/// compared absolutely.
inline double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
}

/// Compares reverse-mode gradients against central differences for every
/// coordinate of every input.
inline GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor>& inputs,
                                       double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(g.parameter(t));
    g.backward(build(g, leaves));
    for (Var v : leaves) analytic.push_back(g.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& at) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& t : at) leaves.push_back(g.constant(t));
    return g.value(build(g, leaves)).item();
  };
  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double base = inputs[k][i];
      probe[k][i] = base + step;
      const double up = eval(probe);
      probe[k][i] = base - step;
      const double down = eval(probe);
      probe[k][i] = base;
      const double numeric = (up - down) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, gradient_rel_error(analytic[k][i], numeric));
      ++result.probes;
    }
  }
  return result;
}

}  // namespace fairprog
