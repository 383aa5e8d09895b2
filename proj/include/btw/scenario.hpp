#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btw/diag.hpp"
#include "btw/model.hpp"
#include "btw/value.hpp"

namespace btw {

struct ScenarioEvent {
  std::int64_t t = 0;
  enum Kind { Msg, FAbort, NfAbort, Advance, Override, Reply } kind = Msg;
  std::string target;       // entity / buffer / decision / service
  nlohmann::json payload;   // kind-specific
  int line = 0;
};

struct Scenario {
  std::vector<ScenarioEvent> events;
};

inline std::optional<ScenarioEvent::Kind> scenario_kind_from_name(
    const std::string& s) {
  if (s == "msg") return ScenarioEvent::Msg;
  if (s == "f_abort") return ScenarioEvent::FAbort;
  if (s == "nf_abort") return ScenarioEvent::NfAbort;
  if (s == "advance") return ScenarioEvent::Advance;
  if (s == "override") return ScenarioEvent::Override;
  if (s == "reply") return ScenarioEvent::Reply;
  return std::nullopt;
}

// One JSON object per line: {"t": N, "kind": "...", "target": "...",
// "payload": {...}}. Times must be nondecreasing.
inline std::optional<Scenario> load_scenario(std::istream& is,
                                             const std::string& file,
                                             std::vector<Diagnostic>& diags) {
  Scenario sc;
  std::string line;
  int lineno = 0;
  std::int64_t last_t = 0;
  auto err = [&](const std::string& msg) {
    diags.push_back({"S001", Severity::Error,
                     {file, lineno, 1, lineno, 1}, msg});
  };
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      err("not a JSON object");
      continue;
    }
    ScenarioEvent ev;
    ev.line = lineno;
    if (!j.contains("t") || !j["t"].is_number_integer()) {
      err("missing integer field 't'");
      continue;
    }
    ev.t = j["t"].get<std::int64_t>();
    if (ev.t < last_t) {
      err("event times must be nondecreasing");
      continue;
    }
    last_t = ev.t;
    auto k = j.contains("kind") && j["kind"].is_string()
                 ? scenario_kind_from_name(j["kind"].get<std::string>())
                 : std::nullopt;
    if (!k) {
      err("unknown event kind");
      continue;
    }
    ev.kind = *k;
    if (j.contains("target") && j["target"].is_string())
      ev.target = j["target"].get<std::string>();
    if (j.contains("payload")) ev.payload = j["payload"];
    sc.events.push_back(std::move(ev));
  }
  if (has_errors(diags)) return std::nullopt;
  return sc;
}

inline std::optional<Scenario> load_scenario_string(
    const std::string& text, const std::string& file,
    std::vector<Diagnostic>& diags) {
  std::istringstream is(text);
  return load_scenario(is, file, diags);
}

// --- JSON payload -> typed record -----------------------------------------

inline std::optional<std::int64_t> parse_date_days(const std::string& s) {
  int y, m, d;
  if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3) return std::nullopt;
  return days_from_civil(y, m, d);
}

inline std::optional<Value> value_from_json(const nlohmann::json& j,
                                            ValueKind want) {
  switch (want) {
    case ValueKind::Bool:
      if (j.is_boolean()) return Value::boolean(j.get<bool>());
      return std::nullopt;
    case ValueKind::Int:
      if (j.is_number_integer())
        return Value::integer(j.get<std::int64_t>());
      return std::nullopt;
    case ValueKind::Text:
      if (j.is_string()) return Value::text(j.get<std::string>());
      return std::nullopt;
    case ValueKind::Date:
      if (j.is_string()) {
        auto d = parse_date_days(j.get<std::string>());
        if (d) return Value::date(*d);
      }
      if (j.is_number_integer()) return Value::date(j.get<std::int64_t>());
      return std::nullopt;
    case ValueKind::Time:
      if (j.is_number_integer()) return Value::time(j.get<std::int64_t>());
      return std::nullopt;
    case ValueKind::Timestamp:
      if (j.is_number_integer())
        return Value::timestamp(j.get<std::int64_t>());
      return std::nullopt;
    case ValueKind::Duration:
      if (j.is_number_integer())
        return Value::duration(j.get<std::int64_t>());
      return std::nullopt;
    case ValueKind::Record: return std::nullopt;
  }
  return std::nullopt;
}

// Builds a record for `schema` from a JSON object; missing or ill-typed
// fields are simply absent (three-valued evaluation handles them).
inline Value record_from_json(const nlohmann::json& j, const Schema& schema) {
  auto rec = std::make_shared<Record>();
  if (j.is_object()) {
    for (const auto& [fname, fkind] : schema.fields) {
      auto it = j.find(fname);
      if (it == j.end()) continue;
      auto v = value_from_json(*it, fkind);
      if (v) rec->fields.emplace_back(fname, std::move(*v));
    }
  }
  return Value::record(std::move(rec));
}

}  // namespace btw
