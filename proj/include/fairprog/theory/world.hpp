// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairprog::theory {

using Distribution = std::vector<double>;
using Table = std::vector<Distribution>;

/// Parameters of the discrete generative model
///   C -> Y -> X^y (len_y i.i.d. tokens),  C -> Z -> X^z (len_z i.i.d. tokens).
/// Tokens carry global ids; the two vocabularies must not overlap.
struct WorldSpec {
  Distribution prior_c;
  Table y_given_c;  // [c][y]
  Table z_given_c;  // [c][z]
  std::vector<std::size_t> vocab_y;
  std::vector<std::size_t> vocab_z;
  Table token_given_y;  // [y][position in vocab_y]
  Table token_given_z;  // [z][position in vocab_z]
  std::size_t len_y = 0;
  std::size_t len_z = 0;
};

namespace detail {

inline void require_distribution(const Distribution& d, const std::string& what) {
  if (d.empty()) throw std::invalid_argument(what + ": empty distribution");
  double total = 0.0;
  for (double p : d) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument(what + ": negative or non-finite probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument(what + ": sums to " + std::to_string(total));
}

inline void require_table(const Table& t, std::size_t rows, std::size_t cols, const std::string& what) {
  if (t.size() != rows) {
    throw std::invalid_argument(what + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(t.size()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (t[r].size() != cols) {
      throw std::invalid_argument(what + ": row " + std::to_string(r) + " has " + std::to_string(t[r].size()) +
                                  " entries, expected " + std::to_string(cols));
    }
    require_distribution(t[r], what + " row " + std::to_string(r));
  }
}

}  // namespace detail

class TheoryWorld {
 public:
  explicit TheoryWorld(WorldSpec spec) : s_(std::move(spec)) {
    detail::require_distribution(s_.prior_c, "prior p(C)");
    const std::size_t nc = s_.prior_c.size();
    if (s_.y_given_c.empty() || s_.z_given_c.empty()) throw std::invalid_argument("world: missing p(Y|C) or p(Z|C)");
    const std::size_t ny = s_.y_given_c.front().size(), nz = s_.z_given_c.front().size();
    detail::require_table(s_.y_given_c, nc, ny, "p(Y|C)");
    detail::require_table(s_.z_given_c, nc, nz, "p(Z|C)");
    detail::require_table(s_.token_given_y, ny, s_.vocab_y.size(), "p(x|Y)");
    detail::require_table(s_.token_given_z, nz, s_.vocab_z.size(), "p(x|Z)");
    std::set<std::size_t> ys(s_.vocab_y.begin(), s_.vocab_y.end());
    std::set<std::size_t> zs(s_.vocab_z.begin(), s_.vocab_z.end());
    if (ys.size() != s_.vocab_y.size() || zs.size() != s_.vocab_z.size()) {
      throw std::invalid_argument("world: duplicate token id within a vocabulary");
    }
    for (auto t : ys) {
      if (zs.count(t)) {
        throw std::invalid_argument("world: token " + std::to_string(t) + " appears in both vocabularies");
      }
    }
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) {
        double p = 0.0;
        for (std::size_t c = 0; c < nc; ++c) p += s_.prior_c[c] * s_.y_given_c[c][y] * s_.z_given_c[c][z];
        joint_yz_.push_back(p);
      }
    }
  }

  const WorldSpec& spec() const { return s_; }
  std::size_t nc() const { return s_.prior_c.size(); }
  std::size_t ny() const { return s_.y_given_c.front().size(); }
  std::size_t nz() const { return s_.z_given_c.front().size(); }

  /// p(Y = y, Z = z) with C marginalized.
  double p_yz(std::size_t y, std::size_t z) const { return joint_yz_[y * nz() + z]; }
  double p_y(std::size_t y) const {
    double p = 0.0;
    for (std::size_t z = 0; z < nz(); ++z) p += p_yz(y, z);
    return p;
  }
  double p_z(std::size_t z) const {
    double p = 0.0;
    for (std::size_t y = 0; y < ny(); ++y) p += p_yz(y, z);
    return p;
  }

  /// Position of a token in its vocabulary; throws for foreign tokens.
  std::size_t local_y(std::size_t token) const { return local(s_.vocab_y, token, "Y"); }
  std::size_t local_z(std::size_t token) const { return local(s_.vocab_z, token, "Z"); }

 private:
  static std::size_t local(const std::vector<std::size_t>& vocab, std::size_t token, const char* which) {
    const auto it = std::find(vocab.begin(), vocab.end(), token);
    if (it == vocab.end()) {
      throw std::invalid_argument(std::string("token ") + std::to_string(token) + " is not in the " + which +
                                  " vocabulary");
    }
    return static_cast<std::size_t>(it - vocab.begin());
  }

  WorldSpec s_;
  std::vector<double> joint_yz_;
};

/// |C| = 2 uniform, binary Y and Z each copying C with probability 0.9,
/// four tokens per vocabulary, two tokens per document field.
inline TheoryWorld reference_world() {
  WorldSpec s;
  s.prior_c = {0.5, 0.5};
  s.y_given_c = {{0.9, 0.1}, {0.1, 0.9}};
  s.z_given_c = {{0.9, 0.1}, {0.1, 0.9}};
  s.vocab_y = {0, 1, 2, 3};
  s.vocab_z = {4, 5, 6, 7};
  s.token_given_y = {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}};
  s.token_given_z = {{0.4, 0.3, 0.2, 0.1}, {0.1, 0.2, 0.3, 0.4}};
  s.len_y = 2;
  s.len_z = 2;
  return TheoryWorld(std::move(s));
}

/// Documents of a field are indexed by the base-|V| number of their token
/// positions, first token most significant.
inline std::size_t document_count(std::size_t vocab, std::size_t length) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < length; ++i) n *= vocab;
  return n;
}

inline std::vector<std::size_t> decode_document(std::size_t index, const std::vector<std::size_t>& vocab,
                                                std::size_t length) {
  std::vector<std::size_t> tokens(length);
  for (std::size_t i = length; i-- > 0;) {
    tokens[i] = vocab[index % vocab.size()];
    index /= vocab.size();
  }
  return tokens;
}

struct Outcome {
  std::size_t c, y, z;
  std::size_t doc_y, doc_z;  // document indices
  double p;
};

struct Joint {
  std::vector<Outcome> outcomes;
  double total() const {
    double t = 0.0;
    for (const auto& o : outcomes) t += o.p;
    return t;
  }
};

inline constexpr double default_enumeration_cap = 1e7;

/// Every (C, Y, Z, X^y, X^z) outcome with its exact probability.
inline Joint enumerate_joint(const TheoryWorld& w, double cap = default_enumeration_cap) {
  const auto& s = w.spec();
  const double required = std::pow(static_cast<double>(s.vocab_y.size()), static_cast<double>(s.len_y)) *
                          std::pow(static_cast<double>(s.vocab_z.size()), static_cast<double>(s.len_z)) *
                          static_cast<double>(w.nc() * w.ny() * w.nz());
  if (required > cap) {
    throw std::length_error("enumerate_joint: " + std::to_string(static_cast<long long>(required)) +
                            " outcomes exceed the cap of " + std::to_string(static_cast<long long>(cap)));
  }
  const std::size_t dy = document_count(s.vocab_y.size(), s.len_y);
  const std::size_t dz = document_count(s.vocab_z.size(), s.len_z);
  auto doc_likelihood = [](const Distribution& row, std::size_t index, std::size_t vocab, std::size_t length) {
    double p = 1.0;
    for (std::size_t i = 0; i < length; ++i) {
      p *= row[index % vocab];
      index /= vocab;
    }
    return p;
  };
  Table ly(w.ny(), Distribution(dy)), lz(w.nz(), Distribution(dz));
  for (std::size_t y = 0; y < w.ny(); ++y)
    for (std::size_t d = 0; d < dy; ++d) ly[y][d] = doc_likelihood(s.token_given_y[y], d, s.vocab_y.size(), s.len_y);
  for (std::size_t z = 0; z < w.nz(); ++z)
    for (std::size_t d = 0; d < dz; ++d) lz[z][d] = doc_likelihood(s.token_given_z[z], d, s.vocab_z.size(), s.len_z);

  Joint j;
  j.outcomes.reserve(static_cast<std::size_t>(required));
  for (std::size_t c = 0; c < w.nc(); ++c)
    for (std::size_t y = 0; y < w.ny(); ++y)
      for (std::size_t z = 0; z < w.nz(); ++z) {
        const double pcyz = s.prior_c[c] * s.y_given_c[c][y] * s.z_given_c[c][z];
        for (std::size_t a = 0; a < dy; ++a)
          for (std::size_t b = 0; b < dz; ++b) j.outcomes.push_back({c, y, z, a, b, pcyz * ly[y][a] * lz[z][b]});
      }
  return j;
}

namespace detail {

inline Distribution normalized(Distribution d) {
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  if (!(total > 0.0)) throw std::domain_error("posterior: evidence has zero probability");
  for (double& v : d) v /= total;
  return d;
}

}  // namespace detail

/// p(Y | X^y) by Bayes with i.i.d. tokens.
inline Distribution posterior_y(const TheoryWorld& w, const std::vector<std::size_t>& tokens) {
  Distribution post(w.ny());
  for (std::size_t y = 0; y < w.ny(); ++y) {
    double p = w.p_y(y);
    for (auto t : tokens) p *= w.spec().token_given_y[y][w.local_y(t)];
    post[y] = p;
  }
  return detail::normalized(std::move(post));
}

/// Per-group likelihood of one extra demographic-field token that is not
/// part of the vocabulary (a trigger).
using TokenLikelihood = Distribution;

/// p(Z | X^z), optionally with extra tokens given directly by their
/// likelihood vectors.
inline Distribution posterior_z(const TheoryWorld& w, const std::vector<std::size_t>& tokens,
                                const std::vector<TokenLikelihood>& extra = {}) {
  Distribution post(w.nz());
  for (std::size_t z = 0; z < w.nz(); ++z) {
    double p = w.p_z(z);
    for (const auto& l : extra) p *= l.at(z);
    for (auto t : tokens) p *= w.spec().token_given_z[z][w.local_z(t)];
    post[z] = p;
  }
  return detail::normalized(std::move(post));
}

struct PosteriorPair {
  Distribution py;
  Distribution pz;
};

/// The classifier rebuilt from the two sufficient statistics:
///   h(y) ∝ sum_z p(y, z) [pY(y) / p(y)] [pZ(z) / p(z)],
/// which equals p(Y | X^y, X^z) when the pair comes from that document.
inline Distribution classifier_h(const PosteriorPair& pair, const TheoryWorld& w) {
  if (pair.py.size() != w.ny() || pair.pz.size() != w.nz()) {
    throw std::invalid_argument("classifier_h: posterior sizes do not match the world");
  }
  Distribution out(w.ny(), 0.0);
  for (std::size_t y = 0; y < w.ny(); ++y) {
    const double py = w.p_y(y);
    if (py == 0.0 || pair.py[y] == 0.0) continue;
    double acc = 0.0;
    for (std::size_t z = 0; z < w.nz(); ++z) {
      const double pz = w.p_z(z);
      if (pz == 0.0 || pair.pz[z] == 0.0) continue;
      acc += w.p_yz(y, z) * pair.pz[z] / pz;
    }
    out[y] = acc * pair.py[y] / py;
  }
  return detail::normalized(std::move(out));
}

inline std::size_t argmax_lowest(const Distribution& d) {
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace fairprog::theory
