#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "btw/expr.hpp"
#include "btw/store.hpp"

namespace btw {

// Where an outgoing message goes. Entity counterparts are desugared to a
// hidden FIFO buffer during lowering, so at execution time an entity-bound
// send looks like a buffer put.
struct MessageDest {
  enum Kind { EntityTarget, LocalService, RemoteService, Buffer, Environment };
  Kind kind = Environment;
  std::string name;

  bool operator==(const MessageDest&) const = default;
};

struct ActionStmt {
  enum Kind {
    Add,       // add <store> { fields }
    Copy,      // copy <message> to <store>  (schema-compatible field copy)
    Set,       // set <var> = expr
    Send,      // send <message> { fields } to <dest>
    BulkSend,  // send <message> to each <var> in <store> [where e] { fields }
    Remove,    // remove <var> from <store> where e
    Update,    // update <var> in <store> where e { fields }
  };

  Kind kind = Add;
  Span span;
  std::string store;
  std::string message;
  std::string var;
  ExprPtr where;
  std::vector<std::pair<std::string, ExprPtr>> fields;
  MessageDest dest;
};

struct Effect {
  enum Kind { MessageOut, VarSet, StoreChanged };

  Kind kind = StoreChanged;
  // MessageOut
  std::string message;
  Record payload;
  MessageDest dest;
  // VarSet
  std::string var;
  Value value;
  bool had_old = false;
  Value old_value;
  // StoreChanged
  std::vector<StoreOp> ops;
};

class ActionError : public std::runtime_error {
 public:
  enum Code { SchemaViolation, DecisionWriteAttempt, UnknownStore };
  ActionError(Code c, const std::string& what)
      : std::runtime_error(what), code_(c) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

namespace detail {

inline Record build_record(
    const std::vector<std::pair<std::string, ExprPtr>>& fields,
    const EvalContext& ctx) {
  Record r;
  for (const auto& [name, expr] : fields) {
    auto v = eval(expr, ctx);
    if (!v)
      throw ActionError(ActionError::SchemaViolation,
                        "field '" + name + "' evaluated to no value");
    r.fields.emplace_back(name, *v);
  }
  return r;
}

inline void check_schema(const Record& r, const std::string& schema_name,
                         const SchemaTable& schemas) {
  auto it = schemas.find(schema_name);
  if (it == schemas.end()) return;  // unschematised store: anything goes
  if (!record_conforms(r, it->second))
    throw ActionError(ActionError::SchemaViolation,
                      "record does not conform to schema '" + schema_name +
                          "'");
}

}  // namespace detail

struct ActionEnv {
  const SchemaTable* schemas = nullptr;
  // store name -> schema name; message type -> schema name
  std::map<std::string, std::string> store_schemas;
  std::map<std::string, std::string> message_schemas;
  bool is_decision = false;  // decisions may read but never write
};

// Executes one action block over a snapshot. Returns the new snapshot plus
// the ordered effect list; bindings are updated in place (VarSet effects are
// also recorded for the journal).
inline std::pair<StoreSnapshot, std::vector<Effect>> exec_action(
    const std::vector<ActionStmt>& stmts, const StoreSnapshot& snapshot,
    std::map<std::string, Value>& bindings, const ActionEnv& env,
    const TemporalIndex* temporal = nullptr, std::int64_t clock = 0) {
  StoreSnapshot snap = snapshot;
  std::vector<Effect> effects;

  auto ctx_for = [&](const std::map<std::string, Value>& b) {
    EvalContext ctx;
    ctx.snapshot = &snap;
    ctx.temporal = temporal;
    ctx.bindings = &b;
    ctx.clock = clock;
    return ctx;
  };
  auto guard_write = [&](const ActionStmt& s) {
    if (env.is_decision)
      throw ActionError(ActionError::DecisionWriteAttempt,
                        "decision attempted to write store '" + s.store + "'");
  };
  auto store_schema = [&](const std::string& store) -> std::string {
    auto it = env.store_schemas.find(store);
    return it == env.store_schemas.end() ? std::string{} : it->second;
  };

  for (const auto& s : stmts) {
    switch (s.kind) {
      case ActionStmt::Add: {
        guard_write(s);
        Record r = detail::build_record(s.fields, ctx_for(bindings));
        if (env.schemas) detail::check_schema(r, store_schema(s.store), *env.schemas);
        Effect eff;
        eff.kind = Effect::StoreChanged;
        StoreOp op;
        op.kind = StoreOp::Insert;
        op.store = s.store;
        op.index = snap.stores[s.store].size();
        op.after = r;
        apply_op(snap, op);
        eff.ops.push_back(std::move(op));
        effects.push_back(std::move(eff));
        break;
      }
      case ActionStmt::Copy: {
        guard_write(s);
        auto it = bindings.find("msg:" + s.message);
        if (it == bindings.end() || !it->second.as_record())
          throw ActionError(ActionError::SchemaViolation,
                            "no payload for message '" + s.message + "'");
        Record r = *it->second.as_record();
        if (env.schemas) detail::check_schema(r, store_schema(s.store), *env.schemas);
        Effect eff;
        eff.kind = Effect::StoreChanged;
        StoreOp op;
        op.kind = StoreOp::Insert;
        op.store = s.store;
        op.index = snap.stores[s.store].size();
        op.after = std::move(r);
        apply_op(snap, op);
        eff.ops.push_back(std::move(op));
        effects.push_back(std::move(eff));
        break;
      }
      case ActionStmt::Set: {
        auto v = eval(s.fields.at(0).second, ctx_for(bindings));
        if (!v)
          throw ActionError(ActionError::SchemaViolation,
                            "assignment to '" + s.var +
                                "' evaluated to no value");
        Effect eff;
        eff.kind = Effect::VarSet;
        eff.var = s.var;
        eff.value = *v;
        auto old = bindings.find(s.var);
        if (old != bindings.end()) {
          eff.had_old = true;
          eff.old_value = old->second;
        }
        bindings[s.var] = *v;
        effects.push_back(std::move(eff));
        break;
      }
      case ActionStmt::Send: {
        Record payload = detail::build_record(s.fields, ctx_for(bindings));
        if (env.schemas) {
          auto it = env.message_schemas.find(s.message);
          if (it != env.message_schemas.end())
            detail::check_schema(payload, it->second, *env.schemas);
        }
        Effect eff;
        eff.kind = Effect::MessageOut;
        eff.message = s.message;
        eff.payload = std::move(payload);
        eff.dest = s.dest;
        effects.push_back(std::move(eff));
        break;
      }
      case ActionStmt::BulkSend: {
        // One MessageOut per matching record, in store order.
        const auto recs = snap.records(s.store);
        for (const auto& r : recs) {
          auto inner = bindings;
          inner[s.var] = Value::record(std::make_shared<Record>(r));
          auto ctx = ctx_for(inner);
          if (s.where) {
            auto keep = eval(s.where, ctx);
            if (!keep || !keep->as_bool()) continue;
          }
          Effect eff;
          eff.kind = Effect::MessageOut;
          eff.message = s.message;
          eff.payload = detail::build_record(s.fields, ctx);
          eff.dest = s.dest;
          effects.push_back(std::move(eff));
        }
        break;
      }
      case ActionStmt::Remove: {
        guard_write(s);
        Effect eff;
        eff.kind = Effect::StoreChanged;
        // Collect matches against the current contents, then erase back to
        // front so recorded indices stay valid for replay.
        auto& recs = snap.stores[s.store];
        std::vector<std::size_t> hits;
        for (std::size_t i = 0; i < recs.size(); ++i) {
          auto inner = bindings;
          inner[s.var] = Value::record(std::make_shared<Record>(recs[i]));
          auto keep = eval(s.where, ctx_for(inner));
          if (keep && keep->as_bool()) hits.push_back(i);
        }
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
          StoreOp op;
          op.kind = StoreOp::Erase;
          op.store = s.store;
          op.index = *it;
          op.before = recs[*it];
          eff.ops.push_back(op);
        }
        for (const auto& op : eff.ops) apply_op(snap, op);
        if (!eff.ops.empty()) effects.push_back(std::move(eff));
        break;
      }
      case ActionStmt::Update: {
        guard_write(s);
        Effect eff;
        eff.kind = Effect::StoreChanged;
        auto& recs = snap.stores[s.store];
        for (std::size_t i = 0; i < recs.size(); ++i) {
          auto inner = bindings;
          inner[s.var] = Value::record(std::make_shared<Record>(recs[i]));
          auto ctx = ctx_for(inner);
          auto hit = eval(s.where, ctx);
          if (!hit || !hit->as_bool()) continue;
          Record updated = recs[i];
          for (const auto& [fname, fexpr] : s.fields) {
            auto v = eval(fexpr, ctx);
            if (!v)
              throw ActionError(ActionError::SchemaViolation,
                                "update of '" + fname +
                                    "' evaluated to no value");
            bool found = false;
            for (auto& [k, val] : updated.fields) {
              if (k == fname) {
                val = *v;
                found = true;
              }
            }
            if (!found) updated.fields.emplace_back(fname, *v);
          }
          StoreOp op;
          op.kind = StoreOp::Modify;
          op.store = s.store;
          op.index = i;
          op.before = recs[i];
          op.after = updated;
          apply_op(snap, op);
          eff.ops.push_back(std::move(op));
        }
        if (!eff.ops.empty()) effects.push_back(std::move(eff));
        break;
      }
    }
  }
  return {std::move(snap), std::move(effects)};
}

}  // namespace btw
