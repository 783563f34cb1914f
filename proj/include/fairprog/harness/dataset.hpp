// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/checksum.hpp"
#include "fairprog/diffcore/tensor.hpp"
#include "fairprog/fileio.hpp"
#include "fairprog/rng.hpp"

namespace fairprog {

/// Feature rows with a class label and a demographic group per row. Image
/// datasets store each side x side image flattened row-major and record the
/// side length.
struct LabeledDataset {
  Tensor x;  // {n, d}
  std::vector<std::size_t> y;
  std::vector<std::size_t> z;
  std::string provenance;
  std::size_t side = 0;

  std::size_t n() const { return y.size(); }
  std::size_t d() const { return x.cols(); }

  /// Number of classes implied by the labels (at least 2).
  std::size_t classes() const {
    std::size_t k = 2;
    for (auto v : y) k = std::max(k, v + 1);
    return k;
  }

  std::size_t groups() const {
    std::size_t k = 1;
    for (auto v : z) k = std::max(k, v + 1);
    return k;
  }

  void validate() const {
    if (y.empty()) throw std::invalid_argument("dataset: no rows");
    if (x.rank() != 2 || x.rows() != y.size() || z.size() != y.size()) {
      throw ShapeError("dataset: features " + shape_string(x.shape()) + " with " + std::to_string(y.size()) +
                       " labels and " + std::to_string(z.size()) + " groups");
    }
    if (!x.all_finite()) throw std::invalid_argument("dataset: non-finite feature value");
    if (side != 0 && side * side != d()) {
      throw ShapeError("dataset: side " + std::to_string(side) + " does not match width " + std::to_string(d()));
    }
  }

  LabeledDataset subset(std::span<const std::size_t> rows) const {
    LabeledDataset out;
    out.x = take_rows(x, rows);
    for (auto r : rows) {
      out.y.push_back(y[r]);
      out.z.push_back(z[r]);
    }
    out.provenance = provenance;
    out.side = side;
    return out;
  }

  friend bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
    return a.x == b.x && a.y == b.y && a.z == b.z && a.side == b.side;
  }
};

inline std::uint64_t checksum(const LabeledDataset& ds) {
  Fnv1a h;
  h.update(std::to_string(ds.n()) + "x" + std::to_string(ds.d()) + ";");
  h.update(ds.x.values());
  std::string labels;
  for (std::size_t i = 0; i < ds.n(); ++i) labels += std::to_string(ds.y[i]) + "," + std::to_string(ds.z[i]) + ";";
  h.update(labels);
  return h.digest();
}

/// Synthetic data where Y and Z are spuriously correlated: Z copies Y with
/// probability (1 + bias) / 2. The first y_dims features are shifted by
/// y_signal * Y, the next z_dims by z_signal * Z, and every feature carries
/// N(0, noise^2). Features are rounded to single precision so that text
/// round trips are exact.
///
/// In grid mode d = side^2 and each pixel is squashed to [0, 1] as
/// clamp(0.5 + 0.15 v) of the same construction.
struct GenSpec {
  std::size_t n = 2000;
  std::size_t d = 20;
  double bias = 0.8;
  double y_signal = 1.2;
  double z_signal = 2.0;
  double noise = 1.0;
  std::size_t y_dims = 5;
  std::size_t z_dims = 5;
  std::uint64_t seed = 7;
  bool grid = false;
  std::size_t side = 0;

  void validate() const {
    if (n == 0) throw std::invalid_argument("gen spec: n must be positive");
    if (!(bias >= 0.0 && bias <= 1.0)) throw std::invalid_argument("gen spec: bias must lie in [0, 1]");
    if (!(noise >= 0.0)) throw std::invalid_argument("gen spec: noise must be nonnegative");
    const std::size_t width = grid ? side * side : d;
    if (width == 0) throw std::invalid_argument("gen spec: feature width must be positive");
    if (y_dims + z_dims > width) throw std::invalid_argument("gen spec: signal blocks exceed feature width");
  }
};

inline LabeledDataset gen_synth(const GenSpec& spec) {
  spec.validate();
  const std::size_t d = spec.grid ? spec.side * spec.side : spec.d;
  Rng rng(spec.seed);
  LabeledDataset ds;
  ds.x = Tensor({spec.n, d});
  ds.y.resize(spec.n);
  ds.z.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t y = rng.bernoulli(0.5) ? 1 : 0;
    const bool keep = rng.bernoulli((1.0 + spec.bias) / 2.0);
    const std::size_t z = keep ? y : 1 - y;
    ds.y[i] = y;
    ds.z[i] = z;
    for (std::size_t j = 0; j < d; ++j) {
      double v = spec.noise * rng.normal();
      if (j < spec.y_dims) {
        v += spec.y_signal * static_cast<double>(y);
      } else if (j < spec.y_dims + spec.z_dims) {
        v += spec.z_signal * static_cast<double>(z);
      }
      if (spec.grid) v = std::clamp(0.5 + 0.15 * v, 0.0, 1.0);
      ds.x(i, j) = static_cast<double>(static_cast<float>(v));
    }
  }
  ds.side = spec.grid ? spec.side : 0;
  std::ostringstream prov;
  prov << "synthetic:n=" << spec.n << ",d=" << d << ",bias=" << spec.bias << ",seed=" << spec.seed;
  ds.provenance = prov.str();
  return ds;
}

struct SplitRatios {
  double train = 0.6;
  double tune = 0.2;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  LabeledDataset train, tune, val, test;
};

/// Seeded shuffle, then consecutive blocks; rounding leftovers go to test.
inline Splits split(const LabeledDataset& ds, const SplitRatios& r, std::uint64_t seed) {
  for (double v : {r.train, r.tune, r.val, r.test}) {
    if (!(v >= 0.0)) throw std::invalid_argument("split: ratios must be nonnegative");
  }
  const double total = r.train + r.tune + r.val + r.test;
  if (!(total > 0.0)) throw std::invalid_argument("split: ratios sum to zero");
  Rng rng(seed);
  const auto perm = rng.permutation(ds.n());
  const auto count = [&](double v) {
    return static_cast<std::size_t>(std::floor(v / total * static_cast<double>(ds.n())));
  };
  const std::size_t a = count(r.train), b = count(r.tune), c = count(r.val);
  auto take = [&](std::size_t lo, std::size_t hi) {
    if (hi <= lo) throw std::invalid_argument("split: a part would be empty");
    return ds.subset(std::span<const std::size_t>(perm).subspan(lo, hi - lo));
  };
  return Splits{take(0, a), take(a, a + b), take(a + b, a + b + c), take(a + b + c, ds.n())};
}

inline std::string format_feature(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(static_cast<float>(v)));
  return buf;
}

/// Header `y,z,f0,...`; features with 9 significant digits, which is
/// enough to read single-precision values back exactly.
inline std::string dataset_to_csv(const LabeledDataset& ds) {
  std::string out = "y,z";
  for (std::size_t j = 0; j < ds.d(); ++j) out += ",f" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out += std::to_string(ds.y[i]) + "," + std::to_string(ds.z[i]);
    for (std::size_t j = 0; j < ds.d(); ++j) out += "," + format_feature(ds.x(i, j));
    out += "\n";
  }
  return out;
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  write_file_atomic(path, dataset_to_csv(ds));
}

/// Malformed CSV input; the message names the offending line.
class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline LabeledDataset dataset_from_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> CsvError {
    return CsvError(where + ":" + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(in, line)) {
    lineno = 1;
    throw fail("missing header");
  }
  lineno = 1;
  const auto header = detail::split_fields(line);
  if (header.size() < 3 || header[0] != "y" || header[1] != "z") throw fail("header must start with y,z and name at least one feature");
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j] != "f" + std::to_string(j - 2)) throw fail("expected column f" + std::to_string(j - 2) + ", got '" + header[j] + "'");
  }
  const std::size_t d = header.size() - 2;
  std::vector<double> values;
  LabeledDataset ds;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_fields(line);
    if (f.size() != d + 2) {
      throw fail("expected " + std::to_string(d + 2) + " columns, got " + std::to_string(f.size()));
    }
    for (int k = 0; k < 2; ++k) {
      const std::string& cell = f[static_cast<std::size_t>(k)];
      char* end = nullptr;
      const unsigned long long v = std::strtoull(cell.c_str(), &end, 10);
      if (cell.empty() || cell[0] == '-' || *end != '\0') throw fail("'" + cell + "' is not a nonnegative integer");
      (k == 0 ? ds.y : ds.z).push_back(static_cast<std::size_t>(v));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = f[j + 2];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0' || !std::isfinite(v)) throw fail("feature f" + std::to_string(j) + " '" + cell + "' is not a finite number");
      values.push_back(static_cast<double>(static_cast<float>(v)));
    }
  }
  if (ds.y.empty()) throw fail("no data rows");
  ds.x = Tensor({ds.y.size(), d}, std::move(values));
  ds.provenance = "csv:" + where;
  return ds;
}

inline LabeledDataset load_csv(const std::string& path) { return dataset_from_csv(read_file(path), path); }

}  // namespace fairprog
