// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprog/harness/dataset.hpp"
#include "fairprog/theory/world.hpp"
#include "fairprog/training/config.hpp"
#include "fairprog/triggers/trigger.hpp"
#include "json.hpp"

namespace fairprog {

/// Invalid experiment configuration; raised before any computation starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Protocol { base, advin, advpost, reprogram, sweep, limited_data, transfer, theory, probe };

inline const std::vector<std::pair<Protocol, std::string>>& protocol_names() {
  static const std::vector<std::pair<Protocol, std::string>> names{
      {Protocol::base, "base"},         {Protocol::advin, "advin"},
      {Protocol::advpost, "advpost"},   {Protocol::reprogram, "reprogram"},
      {Protocol::sweep, "sweep"},       {Protocol::limited_data, "limited-data"},
      {Protocol::transfer, "transfer"}, {Protocol::theory, "theory"},
      {Protocol::probe, "probe"}};
  return names;
}

inline std::string to_string(Protocol p) {
  for (const auto& [k, v] : protocol_names()) {
    if (k == p) return v;
  }
  return "?";
}

inline Protocol parse_protocol(const std::string& s) {
  for (const auto& [k, v] : protocol_names()) {
    if (v == s) return k;
  }
  throw ConfigError("unknown protocol '" + s + "'");
}

struct DataSection {
  std::string source = "synthetic";  // or a CSV path
  GenSpec gen;
  std::uint64_t split_seed = 7;
  SplitRatios ratios;
};

struct ModelSection {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
};

struct TrainSection {
  TrainConfig cfg = reprogram_defaults();
  std::size_t base_epochs = 50;
  /// Base model seed: drives its initialization and batch order.
  std::uint64_t seed = 1;
  /// Adaptation seeds (sweep cells; single runs use the first).
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> lambdas{0.0, 0.5, 2.0, 10.0, 50.0};
  std::vector<double> ratios{1.0, 0.5, 0.2, 0.1, 0.01};
  bool select = true;
  bool blackbox = false;
  std::size_t queries = 30;
  double smoothing = 1e-3;
  std::size_t threads = 0;
};

struct TheorySection {
  std::optional<theory::WorldSpec> world;  // reference world when absent
  std::size_t target = 1;
  std::vector<double> strengths{0.5, 0.9, 0.99, 0.999, 1.0 - 1e-6, 1.0};
  std::vector<double> sigmas{0.0, 0.01, 0.05, 0.1, 0.5, 1.0};
};

struct ExperimentConfig {
  Protocol protocol = Protocol::base;
  DataSection data;
  ModelSection model;
  TrainSection train;
  TriggerGeometry trigger;
  bool trigger_size_given = false;
  std::uint64_t transfer_target_seed = 2;
  TheorySection theory;
  std::string output_dir = "runs/out";
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ConfigError(path + (path.empty() ? "" : ".") + key + ": unknown field");
    }
  }
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

template <typename T>
T read_as(const json& v, const std::string& where) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
    } else if constexpr (std::is_unsigned_v<T>) {
      const bool nonneg = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
      if (!nonneg) throw ConfigError(where + ": expected a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <typename T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  out = read_as<T>(obj.at(key), join(path, key));
}

template <typename T>
void read_list(const json& obj, const std::string& path, const char* key, std::vector<T>& out) {
  if (!obj.contains(key)) return;
  const std::string where = join(path, key);
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(where + ": expected a list");
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(read_as<T>(v[i], where + "[" + std::to_string(i) + "]"));
}

template <typename Parse>
auto read_enum(const json& obj, const std::string& path, const char* key, Parse parse) -> std::optional<decltype(parse(std::string()))> {
  if (!obj.contains(key)) return std::nullopt;
  const std::string where = join(path, key);
  try {
    return parse(read_as<std::string>(obj.at(key), where));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline theory::Table read_table(const json& v, const std::string& where) {
  theory::Table t;
  if (!v.is_array()) throw ConfigError(where + ": expected a list of rows");
  for (std::size_t r = 0; r < v.size(); ++r) {
    const json& row = v[r];
    if (!row.is_array()) throw ConfigError(where + "[" + std::to_string(r) + "]: expected a list");
    theory::Distribution d;
    for (std::size_t c = 0; c < row.size(); ++c) d.push_back(read_as<double>(row[c], where));
    t.push_back(std::move(d));
  }
  return t;
}

inline theory::WorldSpec read_world(const json& j, const std::string& path) {
  check_keys(j, path, {"prior_c", "y_given_c", "z_given_c", "vocab_y", "vocab_z", "token_given_y", "token_given_z",
                       "len_y", "len_z"});
  for (const char* k : {"prior_c", "y_given_c", "z_given_c", "vocab_y", "vocab_z", "token_given_y", "token_given_z",
                        "len_y", "len_z"}) {
    if (!j.contains(k)) throw ConfigError(join(path, k) + ": required field missing");
  }
  theory::WorldSpec s;
  read_list(j, path, "prior_c", s.prior_c);
  s.y_given_c = read_table(j.at("y_given_c"), join(path, "y_given_c"));
  s.z_given_c = read_table(j.at("z_given_c"), join(path, "z_given_c"));
  read_list(j, path, "vocab_y", s.vocab_y);
  read_list(j, path, "vocab_z", s.vocab_z);
  s.token_given_y = read_table(j.at("token_given_y"), join(path, "token_given_y"));
  s.token_given_z = read_table(j.at("token_given_z"), join(path, "token_given_z"));
  read(j, path, "len_y", s.len_y);
  read(j, path, "len_z", s.len_z);
  try {
    theory::TheoryWorld check(s);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

inline json world_to_json(const theory::WorldSpec& s) {
  return json{{"prior_c", s.prior_c},       {"y_given_c", s.y_given_c},         {"z_given_c", s.z_given_c},
              {"vocab_y", s.vocab_y},       {"vocab_z", s.vocab_z},             {"token_given_y", s.token_given_y},
              {"token_given_z", s.token_given_z}, {"len_y", s.len_y},           {"len_z", s.len_z}};
}

}  // namespace detail

/// Parses and validates a configuration document. Every field is optional
/// except `protocol`; unknown fields are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  using detail::read_list;
  using detail::read_enum;
  detail::check_keys(j, "", {"protocol", "data", "model", "train", "trigger", "transfer", "theory", "output"});
  if (!j.contains("protocol")) throw ConfigError("protocol: required field missing");
  ExperimentConfig c;
  c.protocol = parse_protocol(detail::read_as<std::string>(j.at("protocol"), "protocol"));

  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::check_keys(d, "data", {"source", "n", "d", "bias", "seed", "grid", "side", "split_seed", "split",
                                   "y_signal", "z_signal", "noise", "y_dims", "z_dims"});
    read(d, "data", "source", c.data.source);
    read(d, "data", "n", c.data.gen.n);
    read(d, "data", "d", c.data.gen.d);
    read(d, "data", "bias", c.data.gen.bias);
    read(d, "data", "seed", c.data.gen.seed);
    read(d, "data", "grid", c.data.gen.grid);
    read(d, "data", "side", c.data.gen.side);
    read(d, "data", "y_signal", c.data.gen.y_signal);
    read(d, "data", "z_signal", c.data.gen.z_signal);
    read(d, "data", "noise", c.data.gen.noise);
    read(d, "data", "y_dims", c.data.gen.y_dims);
    read(d, "data", "z_dims", c.data.gen.z_dims);
    c.data.split_seed = c.data.gen.seed;
    read(d, "data", "split_seed", c.data.split_seed);
    if (d.contains("split")) {
      std::vector<double> r;
      read_list(d, "data", "split", r);
      if (r.size() != 4) throw ConfigError("data.split: expected [train, tune, val, test]");
      c.data.ratios = SplitRatios{r[0], r[1], r[2], r[3]};
    }
  }
  if (c.data.source == "synthetic") {
    try {
      c.data.gen.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, "model", {"hidden", "activation"});
    read_list(m, "model", "hidden", c.model.hidden);
    if (auto a = read_enum(m, "model", "activation", parse_activation)) c.model.activation = *a;
    if (c.model.hidden.empty()) throw ConfigError("model.hidden: need at least one hidden layer");
    for (auto h : c.model.hidden) {
      if (h == 0) throw ConfigError("model.hidden: widths must be positive");
    }
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, "train", {"lambda", "lambdas", "criterion", "fairness_loss", "epochs", "base_epochs", "batch",
                                    "lrs", "disc_steps", "seed", "seeds", "ratios", "select", "blackbox", "queries",
                                    "smoothing", "threads"});
    auto& cfg = c.train.cfg;
    read(t, "train", "lambda", cfg.lambda);
    read_list(t, "train", "lambdas", c.train.lambdas);
    if (auto v = read_enum(t, "train", "criterion", parse_criterion)) cfg.criterion = *v;
    if (auto v = read_enum(t, "train", "fairness_loss", parse_fairness_loss)) cfg.fairness_loss = *v;
    read(t, "train", "epochs", cfg.epochs);
    read(t, "train", "base_epochs", c.train.base_epochs);
    read(t, "train", "batch", cfg.batch);
    if (t.contains("lrs")) {
      const auto& l = t.at("lrs");
      detail::check_keys(l, "train.lrs", {"classifier", "trigger", "disc"});
      read(l, "train.lrs", "classifier", cfg.lr_classifier);
      read(l, "train.lrs", "trigger", cfg.lr_trigger);
      read(l, "train.lrs", "disc", cfg.lr_disc);
    }
    read(t, "train", "disc_steps", cfg.disc_steps);
    read(t, "train", "seed", c.train.seed);
    read_list(t, "train", "seeds", c.train.seeds);
    read_list(t, "train", "ratios", c.train.ratios);
    read(t, "train", "select", c.train.select);
    read(t, "train", "blackbox", c.train.blackbox);
    read(t, "train", "queries", c.train.queries);
    read(t, "train", "smoothing", c.train.smoothing);
    read(t, "train", "threads", c.train.threads);
  }
  try {
    c.train.cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (c.train.seeds.empty()) throw ConfigError("train.seeds: need at least one seed");
  if (c.train.lambdas.empty()) throw ConfigError("train.lambdas: need at least one value");
  for (double l : c.train.lambdas) {
    if (!(l >= 0.0)) throw ConfigError("train.lambdas: values must be >= 0");
  }
  for (double r : c.train.ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("train.ratios: values must lie in (0, 1]");
  }
  if (c.train.ratios.empty()) throw ConfigError("train.ratios: need at least one value");
  if (c.train.queries == 0) throw ConfigError("train.queries: must be positive");
  if (!(c.train.smoothing > 0.0)) throw ConfigError("train.smoothing: must be positive");

  auto& g = c.trigger;
  g.kind = TriggerKind::concat;
  if (j.contains("trigger")) {
    const auto& t = j.at("trigger");
    detail::check_keys(t, "trigger", {"kind", "size", "position", "anchor", "vocab", "embed_dim"});
    if (auto k = read_enum(t, "trigger", "kind", parse_trigger_kind)) g.kind = *k;
    c.trigger_size_given = t.contains("size");
    read(t, "trigger", "size", g.size);
    if (auto p = read_enum(t, "trigger", "position", parse_position)) g.position = *p;
    if (t.contains("anchor")) {
      std::vector<std::size_t> a;
      read_list(t, "trigger", "anchor", a);
      if (a.size() != 2) throw ConfigError("trigger.anchor: expected [row, col]");
      g.anchor_row = a[0];
      g.anchor_col = a[1];
    }
    read(t, "trigger", "vocab", g.vocab);
    read(t, "trigger", "embed_dim", g.embed_dim);
  }
  const bool image = g.kind == TriggerKind::border || g.kind == TriggerKind::patch;
  if (image && c.data.source == "synthetic" && !c.data.gen.grid) {
    throw ConfigError("trigger.kind: " + to_string(g.kind) + " triggers need grid data (data.grid = true)");
  }
  if (image) g.side = c.data.gen.side;
  if (image && !c.trigger_size_given) g.size = default_image_trigger_size(g.kind, g.side);
  if (c.data.source == "synthetic") {
    g.data_width = c.data.gen.grid ? c.data.gen.side * c.data.gen.side : c.data.gen.d;
    try {
      validate(g);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("trigger: ") + e.what());
    }
  }

  c.transfer_target_seed = c.train.seed + 1;
  if (j.contains("transfer")) {
    detail::check_keys(j.at("transfer"), "transfer", {"target_seed"});
    read(j.at("transfer"), "transfer", "target_seed", c.transfer_target_seed);
  }
  if (c.protocol == Protocol::transfer && c.transfer_target_seed == c.train.seed) {
    throw ConfigError("transfer.target_seed: must differ from train.seed");
  }

  if (j.contains("theory")) {
    const auto& t = j.at("theory");
    detail::check_keys(t, "theory", {"world", "target", "strengths", "sigmas"});
    if (t.contains("world")) {
      const auto& w = t.at("world");
      if (w.is_string()) {
        if (w.get<std::string>() != "reference") throw ConfigError("theory.world: unknown world '" + w.get<std::string>() + "'");
      } else {
        c.theory.world = detail::read_world(w, "theory.world");
      }
    }
    read(t, "theory", "target", c.theory.target);
    read_list(t, "theory", "strengths", c.theory.strengths);
    read_list(t, "theory", "sigmas", c.theory.sigmas);
  }
  for (std::size_t i = 0; i < c.theory.strengths.size(); ++i) {
    const double s = c.theory.strengths[i];
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("theory.strengths: values must lie in (0, 1]");
    if (i > 0 && s < c.theory.strengths[i - 1]) throw ConfigError("theory.strengths: values must ascend");
  }

  if (j.contains("output")) {
    detail::check_keys(j.at("output"), "output", {"dir"});
    read(j.at("output"), "output", "dir", c.output_dir);
  }
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(where + ": byte " + std::to_string(e.byte) + ": malformed JSON");
  }
  return parse_config(j);
}

/// Fully resolved configuration (defaults filled in), without the output
/// directory so that identical runs in different places hash the same.
inline nlohmann::json resolved_config(const ExperimentConfig& c) {
  using nlohmann::json;
  const auto& t = c.train.cfg;
  json j;
  j["protocol"] = to_string(c.protocol);
  j["data"] = {{"source", c.data.source},     {"n", c.data.gen.n},
               {"d", c.data.gen.d},           {"bias", c.data.gen.bias},
               {"seed", c.data.gen.seed},     {"grid", c.data.gen.grid},
               {"side", c.data.gen.side},     {"split_seed", c.data.split_seed},
               {"y_signal", c.data.gen.y_signal}, {"z_signal", c.data.gen.z_signal},
               {"noise", c.data.gen.noise},   {"y_dims", c.data.gen.y_dims},
               {"z_dims", c.data.gen.z_dims},
               {"split", {c.data.ratios.train, c.data.ratios.tune, c.data.ratios.val, c.data.ratios.test}}};
  j["model"] = {{"hidden", c.model.hidden}, {"activation", to_string(c.model.activation)}};
  j["train"] = {{"lambda", t.lambda},
                {"lambdas", c.train.lambdas},
                {"criterion", to_string(t.criterion)},
                {"fairness_loss", to_string(t.fairness_loss)},
                {"epochs", t.epochs},
                {"base_epochs", c.train.base_epochs},
                {"batch", t.batch},
                {"lrs", {{"classifier", t.lr_classifier}, {"trigger", t.lr_trigger}, {"disc", t.lr_disc}}},
                {"disc_steps", t.disc_steps},
                {"seed", c.train.seed},
                {"seeds", c.train.seeds},
                {"ratios", c.train.ratios},
                {"select", c.train.select},
                {"blackbox", c.train.blackbox},
                {"queries", c.train.queries},
                {"smoothing", c.train.smoothing}};
  j["trigger"] = {{"kind", to_string(c.trigger.kind)},
                  {"size", c.trigger.size},
                  {"position", to_string(c.trigger.position)},
                  {"anchor", {c.trigger.anchor_row, c.trigger.anchor_col}},
                  {"vocab", c.trigger.vocab},
                  {"embed_dim", c.trigger.embed_dim}};
  j["transfer"] = {{"target_seed", c.transfer_target_seed}};
  j["theory"] = {{"world", c.theory.world ? detail::world_to_json(*c.theory.world) : json("reference")},
                 {"target", c.theory.target},
                 {"strengths", c.theory.strengths},
                 {"sigmas", c.theory.sigmas}};
  return j;
}

}  // namespace fairprog
