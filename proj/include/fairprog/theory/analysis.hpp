// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/theory/world.hpp"

namespace fairprog::theory {

/// Joint distribution over (Ŷ, Z, Y), stored [yhat][z][y].
struct TripleTable {
  std::size_t n_yhat = 0, n_z = 0, n_y = 0;
  std::vector<double> p;

  TripleTable() = default;
  TripleTable(std::size_t a, std::size_t b, std::size_t c) : n_yhat(a), n_z(b), n_y(c), p(a * b * c, 0.0) {}
  double& at(std::size_t yhat, std::size_t z, std::size_t y) { return p[(yhat * n_z + z) * n_y + y]; }
  double at(std::size_t yhat, std::size_t z, std::size_t y) const { return p[(yhat * n_z + z) * n_y + y]; }
};

/// MI(Ŷ, Z | Y) in nats with 0 log 0 = 0.
inline double mi_conditional(const TripleTable& t) {
  if (t.p.size() != t.n_yhat * t.n_z * t.n_y || t.p.empty()) throw std::invalid_argument("mi_conditional: bad table shape");
  double total = 0.0;
  for (double v : t.p) {
    if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument("mi_conditional: negative or non-finite mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mi_conditional: mass sums to " + std::to_string(total));
  std::vector<double> py(t.n_y, 0.0), pay(t.n_yhat * t.n_y, 0.0), pzy(t.n_z * t.n_y, 0.0);
  for (std::size_t a = 0; a < t.n_yhat; ++a)
    for (std::size_t b = 0; b < t.n_z; ++b)
      for (std::size_t c = 0; c < t.n_y; ++c) {
        const double v = t.at(a, b, c);
        py[c] += v;
        pay[a * t.n_y + c] += v;
        pzy[b * t.n_y + c] += v;
      }
  double mi = 0.0;
  for (std::size_t a = 0; a < t.n_yhat; ++a)
    for (std::size_t b = 0; b < t.n_z; ++b)
      for (std::size_t c = 0; c < t.n_y; ++c) {
        const double v = t.at(a, b, c);
        if (v == 0.0) continue;
        mi += v * std::log(v * py[c] / (pay[a * t.n_y + c] * pzy[b * t.n_y + c]));
      }
  return std::max(0.0, mi);
}

/// Likelihoods of a trigger token whose own posterior puts mass `strength`
/// on `target` and splits the rest evenly over the other groups.
inline TokenLikelihood trigger_likelihood(const TheoryWorld& w, std::size_t target, double strength) {
  if (!(strength > 0.0 && strength <= 1.0)) throw std::invalid_argument("trigger strength must lie in (0, 1]");
  if (target >= w.nz()) throw std::invalid_argument("trigger target group out of range");
  TokenLikelihood l(w.nz());
  const double others = w.nz() > 1 ? (1.0 - strength) / static_cast<double>(w.nz() - 1) : 0.0;
  for (std::size_t z = 0; z < w.nz(); ++z) {
    const double pz = w.p_z(z);
    if (pz == 0.0) throw std::invalid_argument("trigger: group " + std::to_string(z) + " has zero prior");
    l[z] = (z == target ? strength : others) / pz;
  }
  return l;
}

enum class Prediction { sampled, argmax };

struct MiResult {
  double mi = 0.0;
  /// Every demographic document got the same posterior, so Ŷ depends on
  /// X^y alone and the MI is zero by construction.
  bool constant_demographic_posterior = false;
};

/// MI(Ŷ, Z | Y) on the true data distribution when the classifier sees
/// posterior_z computed over the demographic field with `trigger` tokens
/// prepended.
inline MiResult prediction_mi(const TheoryWorld& w, const std::vector<TokenLikelihood>& trigger,
                              Prediction mode = Prediction::sampled) {
  const auto& s = w.spec();
  const std::size_t dy = document_count(s.vocab_y.size(), s.len_y);
  const std::size_t dz = document_count(s.vocab_z.size(), s.len_z);
  std::vector<Distribution> post_y(dy), post_z(dz);
  Table ly(w.ny(), Distribution(dy)), lz(w.nz(), Distribution(dz));
  for (std::size_t a = 0; a < dy; ++a) {
    const auto doc = decode_document(a, s.vocab_y, s.len_y);
    post_y[a] = posterior_y(w, doc);
    for (std::size_t y = 0; y < w.ny(); ++y) {
      double p = 1.0;
      for (auto t : doc) p *= s.token_given_y[y][w.local_y(t)];
      ly[y][a] = p;
    }
  }
  bool constant = true;
  for (std::size_t b = 0; b < dz; ++b) {
    const auto doc = decode_document(b, s.vocab_z, s.len_z);
    post_z[b] = posterior_z(w, doc, trigger);
    if (post_z[b] != post_z[0]) constant = false;
    for (std::size_t z = 0; z < w.nz(); ++z) {
      double p = 1.0;
      for (auto t : doc) p *= s.token_given_z[z][w.local_z(t)];
      lz[z][b] = p;
    }
  }
  if (constant) return {0.0, true};

  TripleTable t(w.ny(), w.nz(), w.ny());
  for (std::size_t a = 0; a < dy; ++a)
    for (std::size_t b = 0; b < dz; ++b) {
      const Distribution h = classifier_h({post_y[a], post_z[b]}, w);
      for (std::size_t y = 0; y < w.ny(); ++y)
        for (std::size_t z = 0; z < w.nz(); ++z) {
          const double mass = w.p_yz(y, z) * ly[y][a] * lz[z][b];
          if (mode == Prediction::argmax) {
            t.at(argmax_lowest(h), z, y) += mass;
          } else {
            for (std::size_t yh = 0; yh < w.ny(); ++yh) t.at(yh, z, y) += mass * h[yh];
          }
        }
    }
  return {mi_conditional(t), false};
}

struct CurvePoint {
  double strength = 0.0;
  double mi = 0.0;
};

/// MI(Ŷ, Z | Y) as the trigger's indication of `target` strengthens.
inline std::vector<CurvePoint> theorem1_curve(const TheoryWorld& w, std::size_t target,
                                              const std::vector<double>& strengths,
                                              Prediction mode = Prediction::sampled) {
  for (std::size_t i = 0; i < strengths.size(); ++i) {
    if (!(strengths[i] > 0.0 && strengths[i] <= 1.0)) {
      throw std::invalid_argument("theorem1_curve: strength " + std::to_string(strengths[i]) + " outside (0, 1]");
    }
    if (i > 0 && strengths[i] < strengths[i - 1]) throw std::invalid_argument("theorem1_curve: strengths must ascend");
  }
  std::vector<CurvePoint> out;
  for (double s : strengths) out.push_back({s, prediction_mi(w, {trigger_likelihood(w, target, s)}, mode).mi});
  return out;
}

inline std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "strength,mi_nats\n";
  char buf[80];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.strength, p.mi);
    out += buf;
  }
  return out;
}

namespace detail {

inline std::vector<long long> rounded_key(const Distribution& d) {
  std::vector<long long> key;
  for (double v : d) key.push_back(std::llround(v * 1e9));
  return key;
}

}  // namespace detail

struct SufficiencyReport {
  bool passed = true;
  std::size_t documents = 0;
  std::size_t groups = 0;
  /// Groups holding more than one document (the non-vacuous part).
  std::size_t shared_groups = 0;
  double max_deviation = 0.0;
};

/// Groups demographic documents by their Z posterior and checks that
/// p(Y | X^z), taken from the enumerated joint, agrees within each group.
inline SufficiencyReport check_sufficiency(const TheoryWorld& w, double tol = 1e-9) {
  const auto& s = w.spec();
  const std::size_t dz = document_count(s.vocab_z.size(), s.len_z);
  Table mass(dz, Distribution(w.ny(), 0.0));
  for (const auto& o : enumerate_joint(w).outcomes) mass[o.doc_z][o.y] += o.p;
  std::map<std::vector<long long>, std::vector<std::size_t>> groups;
  for (std::size_t b = 0; b < dz; ++b) {
    groups[detail::rounded_key(posterior_z(w, decode_document(b, s.vocab_z, s.len_z)))].push_back(b);
  }
  SufficiencyReport r;
  r.documents = dz;
  r.groups = groups.size();
  for (const auto& [key, docs] : groups) {
    if (docs.size() > 1) ++r.shared_groups;
    const Distribution first = detail::normalized(mass[docs.front()]);
    for (auto b : docs) {
      const Distribution cur = detail::normalized(mass[b]);
      for (std::size_t y = 0; y < w.ny(); ++y) r.max_deviation = std::max(r.max_deviation, std::abs(cur[y] - first[y]));
    }
  }
  r.passed = r.max_deviation <= tol;
  return r;
}

struct Assumption2Row {
  double sigma = 0.0;
  double mass = 0.0;
};

/// Probability that a demographic document is weak evidence for `target`:
/// p(X^z in S(sigma)) with S(sigma) = {x : p(Z = target | X^z = x) <= sigma}.
inline std::vector<Assumption2Row> check_assumption2(const TheoryWorld& w, std::size_t target,
                                                     const std::vector<double>& sigmas) {
  if (target >= w.nz()) throw std::invalid_argument("check_assumption2: target group out of range");
  const auto& s = w.spec();
  const std::size_t dz = document_count(s.vocab_z.size(), s.len_z);
  std::vector<double> doc_mass(dz, 0.0), doc_post(dz);
  for (std::size_t b = 0; b < dz; ++b) {
    const auto doc = decode_document(b, s.vocab_z, s.len_z);
    doc_post[b] = posterior_z(w, doc)[target];
    for (std::size_t z = 0; z < w.nz(); ++z) {
      double p = w.p_z(z);
      for (auto t : doc) p *= s.token_given_z[z][w.local_z(t)];
      doc_mass[b] += p;
    }
  }
  std::vector<Assumption2Row> out;
  for (double sigma : sigmas) {
    double m = 0.0;
    for (std::size_t b = 0; b < dz; ++b) {
      if (doc_post[b] <= sigma) m += doc_mass[b];
    }
    out.push_back({sigma, m});
  }
  return out;
}

}  // namespace fairprog::theory
