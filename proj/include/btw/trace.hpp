#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btw/diag.hpp"

namespace btw {

enum class TraceKind {
  EntityStarted,
  EntityCompleted,
  DecisionOutcome,
  MessageSent,
  MessageReceived,
  BufferPut,
  BufferTake,
  StateTransition,
  Commit,
  AbortRaised,
  RedoAttempt,
  ContingencyFired,
  UndoApplied,
  CompensationStarted,
  TemporalViolation,
  Quiesce,
  Death,
};

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::EntityStarted: return "EntityStarted";
    case TraceKind::EntityCompleted: return "EntityCompleted";
    case TraceKind::DecisionOutcome: return "DecisionOutcome";
    case TraceKind::MessageSent: return "MessageSent";
    case TraceKind::MessageReceived: return "MessageReceived";
    case TraceKind::BufferPut: return "BufferPut";
    case TraceKind::BufferTake: return "BufferTake";
    case TraceKind::StateTransition: return "StateTransition";
    case TraceKind::Commit: return "Commit";
    case TraceKind::AbortRaised: return "AbortRaised";
    case TraceKind::RedoAttempt: return "RedoAttempt";
    case TraceKind::ContingencyFired: return "ContingencyFired";
    case TraceKind::UndoApplied: return "UndoApplied";
    case TraceKind::CompensationStarted: return "CompensationStarted";
    case TraceKind::TemporalViolation: return "TemporalViolation";
    case TraceKind::Quiesce: return "Quiesce";
    case TraceKind::Death: return "Death";
  }
  return "?";
}

struct TraceEntry {
  std::uint64_t seq = 0;
  std::int64_t clock = 0;
  TraceKind kind = TraceKind::EntityStarted;
  std::string subject;
  nlohmann::ordered_json detail;  // kind-specific fields, stable order

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["seq"] = seq;
    j["clock"] = clock;
    j["kind"] = to_string(kind);
    j["subject"] = subject;
    j["detail"] = detail.is_null() ? nlohmann::ordered_json::object()
                                   : detail;
    return j;
  }
};

using Trace = std::vector<TraceEntry>;

inline void write_trace(std::ostream& os, const Trace& trace) {
  for (const auto& e : trace) os << e.to_json().dump() << "\n";
}

inline std::string trace_to_string(const Trace& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += e.to_json().dump();
    out += "\n";
  }
  return out;
}

}  // namespace btw
