// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fairprog/training/reprogram.hpp"

namespace fairprog {

inline TradeoffPoint tradeoff_point(double lambda, std::uint64_t seed, const BiasScores& s) {
  return TradeoffPoint{lambda, seed, s.accuracy, -s.dp, -s.eo};
}

struct SweepCell {
  TradeoffPoint point;
  Trigger trigger;
};

struct SweepOptions {
  /// Selection set passed to every reprogramming run (may be null).
  const LabeledDataset* val = nullptr;
  /// Worker threads; 0 picks the hardware concurrency.
  std::size_t threads = 0;
};

namespace detail {

/// Runs `job(i)` for i in [0, count) on a small pool. Each job writes only
/// its own slot, so the outcome does not depend on scheduling.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job job) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// One reprogramming run per (lambda, seed) cell, scored on `eval` with the
/// trained trigger applied. Cells are independent and run in parallel; the
/// result is sorted by (lambda, seed).
inline std::vector<SweepCell> lambda_sweep(const NetModel& base, const LabeledDataset& tune,
                                           const LabeledDataset& eval, const TriggerGeometry& geometry,
                                           const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds,
                                           const TrainConfig& cfg, const SweepOptions& opt = {}) {
  if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: empty lambda list");
  if (seeds.empty()) throw std::invalid_argument("lambda_sweep: empty seed list");
  std::vector<std::pair<double, std::uint64_t>> keys;
  for (double l : lambdas) {
    for (auto s : seeds) keys.emplace_back(l, s);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<std::optional<SweepCell>> cells(keys.size());
  detail::parallel_for(keys.size(), opt.threads, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.lambda = keys[i].first;
    c.seed = keys[i].second;
    ReprogramOptions ro;
    ro.val = opt.val;
    Trigger trigger = reprogram(base, tune, geometry, c, ro);
    const BiasScores s = evaluate(base, trigger, eval);
    cells[i] = SweepCell{tradeoff_point(c.lambda, c.seed, s), std::move(trigger)};
  });
  std::vector<SweepCell> out;
  for (auto& c : cells) out.push_back(std::move(*c));
  return out;
}

/// Fixed-point text with the given decimals; negative zero prints as zero.
inline std::string format_fixed(double v, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string sweep_to_csv(const std::vector<TradeoffPoint>& points) {
  std::vector<TradeoffPoint> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const TradeoffPoint& a, const TradeoffPoint& b) {
    return a.lambda != b.lambda ? a.lambda < b.lambda : a.seed < b.seed;
  });
  std::string out = "lambda,seed,accuracy,neg_dp,neg_eo\n";
  for (const auto& p : sorted) {
    out += format_fixed(p.lambda) + "," + std::to_string(p.seed) + "," + format_fixed(p.accuracy) + "," +
           format_fixed(p.neg_dp) + "," + format_fixed(p.neg_eo) + "\n";
  }
  return out;
}

inline std::vector<TradeoffPoint> points_of(const std::vector<SweepCell>& cells) {
  std::vector<TradeoffPoint> out;
  for (const auto& c : cells) out.push_back(c.point);
  return out;
}

/// Scores a trigger on a model it was not trained against.
inline BiasScores transfer_eval(const Trigger& trigger, const NetModel& target, const LabeledDataset& eval) {
  eval.validate();
  const std::size_t width = model_input_width(geometry_of(trigger, eval.d()));
  if (width != target.spec().input_width()) {
    throw ShapeError("transfer_eval: trigger yields width " + std::to_string(width) + " but the target expects " +
                     std::to_string(target.spec().input_width()));
  }
  return evaluate(target, trigger, eval);
}

/// Stratified subsample: each (y, z) cell keeps round(ratio * size) rows,
/// at least one. Row order follows the source.
inline LabeledDataset subsample_tune(const LabeledDataset& tune, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("subsample_tune: ratio must lie in (0, 1]");
  tune.validate();
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < tune.n(); ++i) cells[{tune.y[i], tune.z[i]}].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& [key, rows] : cells) {
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(rows.size()))));
    rng.shuffle(rows);
    keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min(k, rows.size())));
  }
  std::sort(keep.begin(), keep.end());
  return tune.subset(keep);
}

struct LimitedDataPoint {
  double ratio = 1.0;
  std::size_t tune_rows = 0;
  BiasScores scores;
};

/// Reprograms once per tuning-data ratio with the same configuration.
inline std::vector<LimitedDataPoint> limited_data(const NetModel& base, const LabeledDataset& tune,
                                                  const LabeledDataset& eval, const TriggerGeometry& geometry,
                                                  const std::vector<double>& ratios, const TrainConfig& cfg,
                                                  const SweepOptions& opt = {}) {
  if (ratios.empty()) throw std::invalid_argument("limited_data: empty ratio list");
  std::vector<LimitedDataPoint> out(ratios.size());
  detail::parallel_for(ratios.size(), opt.threads, [&](std::size_t i) {
    const LabeledDataset part = subsample_tune(tune, ratios[i], derive_seed(cfg.seed, i));
    ReprogramOptions ro;
    ro.val = opt.val;
    const Trigger trigger = reprogram(base, part, geometry, cfg, ro);
    out[i] = LimitedDataPoint{ratios[i], part.n(), evaluate(base, trigger, eval)};
  });
  return out;
}

inline std::string limited_data_to_csv(const std::vector<LimitedDataPoint>& points) {
  std::string out = "ratio,tune_rows,accuracy,neg_dp,neg_eo\n";
  for (const auto& p : points) {
    out += format_fixed(p.ratio) + "," + std::to_string(p.tune_rows) + "," + format_fixed(p.scores.accuracy) + "," +
           format_fixed(-p.scores.dp) + "," + format_fixed(-p.scores.eo) + "\n";
  }
  return out;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t lo = 0; lo < idx.size();) {
      std::size_t hi = lo;
      while (hi + 1 < idx.size() && v[idx[hi + 1]] == v[idx[lo]]) ++hi;
      for (std::size_t k = lo; k <= hi; ++k) r[idx[k]] = 0.5 * static_cast<double>(lo + hi) + 1.0;
      lo = hi + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace fairprog
