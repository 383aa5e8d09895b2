#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "btw/expr.hpp"
#include "btw/registry.hpp"

namespace btw {

// Deterministic RNG shared by the simulation: one stream, counted draws, so
// equal seeds replay identically.
struct SimRng {
  std::mt19937_64 gen;
  std::uint64_t draws = 0;

  explicit SimRng(std::uint64_t seed = 0) : gen(seed) {}

  // Exactly one generator invocation per draw, so a checkpointed stream can
  // be restored by discarding `draws` outputs. Modulo bias is irrelevant for
  // scheduling purposes.
  std::uint64_t next(std::uint64_t bound) {
    ++draws;
    std::uint64_t v = gen();
    return bound <= 1 ? 0 : v % bound;
  }
};

struct BufferedMessage {
  std::string message;   // message type name
  Value payload;         // record value
  std::string from;      // sending entity or service, may be empty
  std::int64_t arrival = 0;
  std::uint64_t seq = 0;  // global put order, ties broken by this
};

class MessageBuffer {
 public:
  MessageBuffer() = default;
  MessageBuffer(BufferProtocol protocol, ExprPtr order_key = nullptr)
      : protocol_(protocol), order_key_(std::move(order_key)) {}

  void put(BufferedMessage m) { items_.push_back(std::move(m)); }

  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  const std::vector<BufferedMessage>& items() const { return items_; }

  std::optional<BufferedMessage> take(SimRng& rng) {
    if (items_.empty()) return std::nullopt;
    std::size_t pick = 0;
    switch (protocol_) {
      case BufferProtocol::Fifo: pick = 0; break;
      case BufferProtocol::Lifo: pick = items_.size() - 1; break;
      case BufferProtocol::Random:
        pick = static_cast<std::size_t>(rng.next(items_.size()));
        break;
      case BufferProtocol::Predicate: pick = pick_by_key(); break;
    }
    BufferedMessage m = std::move(items_[pick]);
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(pick));
    return m;
  }

 private:
  // Minimum ordering key wins; undefined keys sort last; ties go to the
  // earliest arrival.
  std::size_t pick_by_key() const {
    std::size_t best = 0;
    std::optional<Value> best_key = key_of(items_[0]);
    for (std::size_t i = 1; i < items_.size(); ++i) {
      std::optional<Value> k = key_of(items_[i]);
      bool better = false;
      if (k && !best_key) {
        better = true;
      } else if (k && best_key) {
        int c = compare_values(*k, *best_key);
        better = c < 0 || (c == 0 && items_[i].seq < items_[best].seq);
      }
      if (better) {
        best = i;
        best_key = std::move(k);
      }
    }
    return best;
  }

  std::optional<Value> key_of(const BufferedMessage& m) const {
    if (!order_key_) return std::nullopt;
    std::map<std::string, Value> bindings;
    bindings["msg"] = m.payload;
    StoreSnapshot empty;
    EvalContext ctx;
    ctx.snapshot = &empty;
    ctx.bindings = &bindings;
    try {
      return eval(order_key_, ctx);
    } catch (const EvalError&) {
      return std::nullopt;
    }
  }

  BufferProtocol protocol_ = BufferProtocol::Fifo;
  ExprPtr order_key_;
  std::vector<BufferedMessage> items_;
};

}  // namespace btw
