#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace btw {

// Execution statistics the temporal function family reads. Entries index the
// most recent occurrence; loops and recursion overwrite earlier ones.
struct TemporalIndex {
  struct Execution {
    std::int64_t start = 0;
    std::optional<std::int64_t> end;
  };
  struct MessageFact {
    std::optional<std::int64_t> sent;
    std::optional<std::int64_t> received;
  };

  std::map<std::string, Execution> executions;     // entity name -> timestamps
  std::map<std::string, MessageFact> messages;     // message type
  std::map<std::string, std::int64_t> state_entry; // service state
  std::map<std::string, bool> outcomes;            // decision -> positive?

  void note_start(const std::string& entity, std::int64_t ts) {
    executions[entity] = Execution{ts, std::nullopt};
  }
  void note_end(const std::string& entity, std::int64_t ts) {
    auto it = executions.find(entity);
    if (it != executions.end()) it->second.end = ts;
  }
  void note_sent(const std::string& msg, std::int64_t ts) {
    messages[msg].sent = ts;
  }
  void note_received(const std::string& msg, std::int64_t ts) {
    messages[msg].received = ts;
  }
};

}  // namespace btw
