// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "fairprog/checksum.hpp"
#include "fairprog/fileio.hpp"
#include "fairprog/models/net.hpp"

namespace fairprog {

/// Malformed or mismatched model/trigger record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return nlohmann::json{{"shape", t.shape()}, {"values", t.data()}};
}

/// `where` names the record path for error messages.
inline Tensor tensor_from_json(const nlohmann::json& j, const std::string& where) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline nlohmann::json parse_record(const std::string& text, const std::string& path) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // parse_error carries the byte offset of the failure
    throw FormatError(path + ": parse failure at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json model_to_json(const NetModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t k = 0; k < model.parameters().size(); ++k) {
    nlohmann::json p = detail::tensor_to_json(model.parameters()[k]);
    p["name"] = model.parameter_name(k);
    params.push_back(std::move(p));
  }
  return nlohmann::json{
      {"format", "fairprog.model"},
      {"version", 1},
      {"spec", {{"widths", model.spec().widths}, {"activation", to_string(model.spec().activation)}}},
      {"frozen", model.frozen()},
      {"parameters", std::move(params)},
  };
}

inline NetModel model_from_json(const nlohmann::json& j, const std::string& where = "model") {
  try {
    if (j.at("format").get<std::string>() != "fairprog.model") throw FormatError(where + ": not a model record");
    NetSpec spec;
    spec.widths = j.at("spec").at("widths").get<std::vector<std::size_t>>();
    spec.activation = parse_activation(j.at("spec").at("activation").get<std::string>());
    std::vector<Tensor> params;
    const auto& arr = j.at("parameters");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      params.push_back(detail::tensor_from_json(arr[k], where + ".parameters[" + std::to_string(k) + "]"));
    }
    return NetModel(std::move(spec), std::move(params), j.at("frozen").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline std::string serialize_model(const NetModel& model) { return model_to_json(model).dump() + "\n"; }

inline void save_model(const NetModel& model, const std::string& path) {
  write_file_atomic(path, serialize_model(model));
}

/// When `expected` is given, a record with different widths is rejected.
inline NetModel load_model(const std::string& path, const std::optional<NetSpec>& expected = std::nullopt) {
  NetModel model = model_from_json(detail::parse_record(read_file(path), path), path);
  if (expected && !(model.spec().widths == expected->widths)) {
    NetSpec got = model.spec();
    std::string a, b;
    for (auto w : got.widths) a += std::to_string(w) + " ";
    for (auto w : expected->widths) b += std::to_string(w) + " ";
    throw ShapeError(path + ": model widths [ " + a + "] do not match expected [ " + b + "]");
  }
  return model;
}

}  // namespace fairprog
