// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "json.hpp"

#include "fairprog/models/io.hpp"
#include "fairprog/triggers/trigger.hpp"

namespace fairprog {

inline nlohmann::json trigger_to_json(const Trigger& trigger) {
  nlohmann::json j{{"format", "fairprog.trigger"}, {"version", 1}, {"kind", to_string(kind_of(trigger))}};
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, AdditiveTrigger>) {
          j["delta"] = detail::tensor_to_json(t.delta);
        } else if constexpr (std::is_same_v<T, ConcatTrigger>) {
          j["position"] = to_string(t.position);
          j["delta"] = detail::tensor_to_json(t.delta);
        } else if constexpr (std::is_same_v<T, BorderTrigger>) {
          j["side"] = t.side;
          j["width"] = t.width;
          j["delta"] = detail::tensor_to_json(t.delta);
        } else if constexpr (std::is_same_v<T, PatchTrigger>) {
          j["side"] = t.side;
          j["patch"] = t.patch;
          j["anchor"] = {t.row, t.col};
          j["delta"] = detail::tensor_to_json(t.delta);
        } else {
          j["position"] = to_string(t.position);
          j["v"] = detail::tensor_to_json(t.v);
          j["embedding"] = detail::tensor_to_json(t.embedding);
        }
      },
      trigger);
  return j;
}

inline Trigger trigger_from_json(const nlohmann::json& j, const std::string& where = "trigger") {
  try {
    if (j.at("format").get<std::string>() != "fairprog.trigger") throw FormatError(where + ": not a trigger record");
    const TriggerKind kind = parse_trigger_kind(j.at("kind").get<std::string>());
    auto tensor = [&](const char* key) { return detail::tensor_from_json(j.at(key), where + "." + key); };
    Trigger t;
    switch (kind) {
      case TriggerKind::additive: t = AdditiveTrigger{tensor("delta")}; break;
      case TriggerKind::concat:
        t = ConcatTrigger{tensor("delta"), parse_position(j.at("position").get<std::string>())};
        break;
      case TriggerKind::border: {
        BorderTrigger b{j.at("side").get<std::size_t>(), j.at("width").get<std::size_t>(), tensor("delta")};
        if (2 * b.width >= b.side || b.delta.size() != ring_size(b.side, b.width)) {
          throw FormatError(where + ": border geometry does not match delta length");
        }
        t = std::move(b);
        break;
      }
      case TriggerKind::patch: {
        const auto anchor = j.at("anchor").get<std::vector<std::size_t>>();
        if (anchor.size() != 2) throw FormatError(where + ".anchor: expected [row, col]");
        PatchTrigger p{j.at("side").get<std::size_t>(), j.at("patch").get<std::size_t>(), anchor[0], anchor[1],
                       tensor("delta")};
        if (p.delta.size() != p.patch * p.patch) throw FormatError(where + ": patch geometry does not match delta length");
        t = std::move(p);
        break;
      }
      case TriggerKind::soft:
      case TriggerKind::hard: {
        TokenSlots slots{tensor("v"), tensor("embedding"), parse_position(j.at("position").get<std::string>())};
        if (slots.v.rank() != 2 || slots.v.cols() != slots.embedding.rows()) {
          throw FormatError(where + ": slot distributions do not match embedding vocabulary");
        }
        if (kind == TriggerKind::soft) {
          t = SoftSimplexTrigger{std::move(slots)};
        } else {
          t = HardTrigger{std::move(slots)};
        }
        break;
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
}

inline std::string serialize_trigger(const Trigger& t) { return trigger_to_json(t).dump() + "\n"; }

inline void save_trigger(const Trigger& t, const std::string& path) { write_file_atomic(path, serialize_trigger(t)); }

inline Trigger load_trigger(const std::string& path) {
  return trigger_from_json(detail::parse_record(read_file(path), path), path);
}

}  // namespace fairprog
