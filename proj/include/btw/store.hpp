#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "btw/value.hpp"

namespace btw {

struct Schema {
  std::string name;
  bool material = false;
  std::vector<std::pair<std::string, ValueKind>> fields;

  std::optional<ValueKind> field_kind(const std::string& f) const {
    for (const auto& [n, k] : fields)
      if (n == f) return k;
    return std::nullopt;
  }
};

using SchemaTable = std::map<std::string, Schema>;

// Does the record carry exactly the schema's fields with matching kinds?
inline bool record_conforms(const Record& r, const Schema& s) {
  if (r.fields.size() != s.fields.size()) return false;
  for (const auto& [name, kind] : s.fields) {
    const Value* v = r.find(name);
    if (!v || v->kind() != kind) return false;
  }
  return true;
}

// Immutable-by-convention store contents; actions copy the snapshot and
// apply recorded deltas so the journal can replay or invert them.
struct StoreSnapshot {
  std::map<std::string, std::vector<Record>> stores;

  const std::vector<Record>& records(const std::string& store) const {
    static const std::vector<Record> empty;
    auto it = stores.find(store);
    return it == stores.end() ? empty : it->second;
  }

  // Store entries materialise lazily, so an absent store and an empty one
  // are the same state and must compare equal.
  bool operator==(const StoreSnapshot& o) const {
    for (const auto& [name, recs] : stores)
      if (!recs.empty() && o.records(name) != recs) return false;
    for (const auto& [name, recs] : o.stores)
      if (!recs.empty() && records(name) != recs) return false;
    return true;
  }
};

struct StoreOp {
  enum Kind { Insert, Erase, Modify };
  Kind kind = Insert;
  std::string store;
  std::size_t index = 0;
  Record before;  // Erase, Modify
  Record after;   // Insert, Modify
};

inline void apply_op(StoreSnapshot& snap, const StoreOp& op) {
  auto& recs = snap.stores[op.store];
  switch (op.kind) {
    case StoreOp::Insert:
      recs.insert(recs.begin() + std::min(op.index, recs.size()), op.after);
      break;
    case StoreOp::Erase:
      if (op.index < recs.size()) recs.erase(recs.begin() + op.index);
      break;
    case StoreOp::Modify:
      if (op.index < recs.size()) recs[op.index] = op.after;
      break;
  }
}

inline StoreOp invert_op(const StoreOp& op) {
  StoreOp inv = op;
  switch (op.kind) {
    case StoreOp::Insert:
      inv.kind = StoreOp::Erase;
      inv.before = op.after;
      break;
    case StoreOp::Erase:
      inv.kind = StoreOp::Insert;
      inv.after = op.before;
      break;
    case StoreOp::Modify:
      inv.before = op.after;
      inv.after = op.before;
      break;
  }
  return inv;
}

inline void apply_ops(StoreSnapshot& snap, const std::vector<StoreOp>& ops) {
  for (const auto& op : ops) apply_op(snap, op);
}

inline void invert_ops(StoreSnapshot& snap, const std::vector<StoreOp>& ops) {
  for (auto it = ops.rbegin(); it != ops.rend(); ++it)
    apply_op(snap, invert_op(*it));
}

}  // namespace btw
