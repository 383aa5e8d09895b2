#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "btw/diag.hpp"
#include "btw/store.hpp"
#include "btw/temporal.hpp"
#include "btw/value.hpp"

namespace btw {

enum class BinOp { Or, And, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div };
enum class UnOp { Not, Neg };
enum class TemporalFn {
  StartDate,
  EndDate,
  StartTime,
  EndTime,
  SendDate,
  RecDate,
  StateEntered,
  OutcomePositive,
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum Kind {
    Literal,
    VarRef,
    FieldGet,
    Binary,
    Unary,
    Quant,     // exists/forall var in store where body
    First,     // first record of a store, optionally filtered
    Payload,   // current payload of a received message type
    Temporal,  // TemporalFn(name)
    Now,
    Today,
  };

  Kind node = Literal;
  Span span;

  Value literal;
  std::string name;        // VarRef, FieldGet field, Payload/Temporal/Quant store
  BinOp bin = BinOp::Or;
  UnOp un = UnOp::Not;
  TemporalFn fn = TemporalFn::StartDate;
  bool forall = false;     // Quant
  std::string var;         // Quant bound variable
  ExprPtr lhs, rhs;        // Binary; Unary/FieldGet use lhs; Quant/First body in rhs

  static ExprPtr make_literal(Value v, Span sp = {}) {
    auto e = std::make_shared<Expr>();
    e->node = Literal;
    e->literal = std::move(v);
    e->span = sp;
    return e;
  }
};

// ---------------------------------------------------------------------------
// Static typing

struct ExprType {
  ValueKind kind = ValueKind::Bool;
  std::string schema;  // set iff kind == Record

  bool operator==(const ExprType&) const = default;
};

struct TypeEnv {
  const SchemaTable* schemas = nullptr;
  std::map<std::string, std::string> stores;    // store name -> schema name
  std::map<std::string, std::string> messages;  // message type -> schema name
  std::map<std::string, ExprType> vars;
  std::set<std::string> entities;  // names temporal functions may reference
  std::set<std::string> states;
  // When set, unresolved temporal-function subjects are ignored here and
  // left for validator code V013.
  bool defer_name_checks = false;
};

inline bool is_ordered_kind(ValueKind k) {
  return k == ValueKind::Int || k == ValueKind::Text || k == ValueKind::Date ||
         k == ValueKind::Time || k == ValueKind::Timestamp ||
         k == ValueKind::Duration;
}

// Returns the expression's type, or nullopt after appending diagnostics.
inline std::optional<ExprType> typecheck(const ExprPtr& e, TypeEnv& env,
                                         std::vector<Diagnostic>& diags) {
  auto fail = [&](const std::string& msg) -> std::optional<ExprType> {
    diags.push_back({"L003", Severity::Error, e->span, msg});
    return std::nullopt;
  };
  switch (e->node) {
    case Expr::Literal: {
      ExprType t;
      t.kind = e->literal.kind();
      return t;
    }
    case Expr::Now: return ExprType{ValueKind::Timestamp, ""};
    case Expr::Today: return ExprType{ValueKind::Date, ""};
    case Expr::VarRef: {
      auto it = env.vars.find(e->name);
      if (it == env.vars.end())
        return fail("unknown variable '" + e->name + "'");
      return it->second;
    }
    case Expr::Payload: {
      auto it = env.messages.find(e->name);
      if (it == env.messages.end())
        return fail("unknown message type '" + e->name + "'");
      return ExprType{ValueKind::Record, it->second};
    }
    case Expr::FieldGet: {
      auto base = typecheck(e->lhs, env, diags);
      if (!base) return std::nullopt;
      if (base->kind != ValueKind::Record)
        return fail("field access on non-record value");
      auto sit = env.schemas->find(base->schema);
      if (sit == env.schemas->end())
        return fail("unknown schema '" + base->schema + "'");
      auto fk = sit->second.field_kind(e->name);
      if (!fk)
        return fail("schema '" + base->schema + "' has no field '" + e->name +
                    "'");
      return ExprType{*fk, ""};
    }
    case Expr::First: {
      auto it = env.stores.find(e->name);
      if (it == env.stores.end())
        return fail("unknown store '" + e->name + "'");
      if (e->rhs) {
        TypeEnv inner = env;
        inner.vars[e->var.empty() ? "it" : e->var] =
            ExprType{ValueKind::Record, it->second};
        auto cond = typecheck(e->rhs, inner, diags);
        if (cond && cond->kind != ValueKind::Bool)
          return fail("first-where filter must be boolean");
      }
      return ExprType{ValueKind::Record, it->second};
    }
    case Expr::Quant: {
      auto it = env.stores.find(e->name);
      if (it == env.stores.end())
        return fail("unknown store '" + e->name + "'");
      TypeEnv inner = env;
      inner.vars[e->var] = ExprType{ValueKind::Record, it->second};
      auto body = typecheck(e->rhs, inner, diags);
      if (!body) return std::nullopt;
      if (body->kind != ValueKind::Bool)
        return fail("quantifier body must be boolean");
      return ExprType{ValueKind::Bool, ""};
    }
    case Expr::Temporal: {
      bool known = env.entities.count(e->name) || env.states.count(e->name) ||
                   env.messages.count(e->name);
      if (!known && !env.defer_name_checks && !env.entities.empty())
        return fail("temporal function references unknown name '" + e->name +
                    "'");
      switch (e->fn) {
        case TemporalFn::StartDate:
        case TemporalFn::EndDate:
        case TemporalFn::SendDate:
        case TemporalFn::RecDate: return ExprType{ValueKind::Date, ""};
        case TemporalFn::StartTime:
        case TemporalFn::EndTime: return ExprType{ValueKind::Time, ""};
        case TemporalFn::StateEntered:
          return ExprType{ValueKind::Timestamp, ""};
        case TemporalFn::OutcomePositive: return ExprType{ValueKind::Bool, ""};
      }
      return std::nullopt;
    }
    case Expr::Unary: {
      auto t = typecheck(e->lhs, env, diags);
      if (!t) return std::nullopt;
      if (e->un == UnOp::Not) {
        if (t->kind != ValueKind::Bool) return fail("'not' needs a boolean");
        return t;
      }
      if (t->kind != ValueKind::Int && t->kind != ValueKind::Duration)
        return fail("unary minus needs an int or duration");
      return t;
    }
    case Expr::Binary: {
      auto lt = typecheck(e->lhs, env, diags);
      auto rt = typecheck(e->rhs, env, diags);
      if (!lt || !rt) return std::nullopt;
      auto both = [&](ValueKind k) { return lt->kind == k && rt->kind == k; };
      switch (e->bin) {
        case BinOp::Or:
        case BinOp::And:
          if (!both(ValueKind::Bool))
            return fail("boolean operator on non-boolean operands");
          return ExprType{ValueKind::Bool, ""};
        case BinOp::Eq:
        case BinOp::Ne:
          if (lt->kind != rt->kind)
            return fail(std::string("cannot compare ") +
                        to_string(lt->kind) + " with " + to_string(rt->kind));
          return ExprType{ValueKind::Bool, ""};
        case BinOp::Lt:
        case BinOp::Le:
        case BinOp::Gt:
        case BinOp::Ge:
          if (lt->kind != rt->kind || !is_ordered_kind(lt->kind))
            return fail(std::string("cannot order ") + to_string(lt->kind) +
                        " against " + to_string(rt->kind));
          return ExprType{ValueKind::Bool, ""};
        case BinOp::Add:
          if (both(ValueKind::Int)) return ExprType{ValueKind::Int, ""};
          if (both(ValueKind::Duration))
            return ExprType{ValueKind::Duration, ""};
          if ((lt->kind == ValueKind::Date || lt->kind == ValueKind::Time ||
               lt->kind == ValueKind::Timestamp) &&
              rt->kind == ValueKind::Duration)
            return ExprType{lt->kind, ""};
          return fail("invalid '+' operand kinds");
        case BinOp::Sub:
          if (both(ValueKind::Int)) return ExprType{ValueKind::Int, ""};
          if (both(ValueKind::Duration))
            return ExprType{ValueKind::Duration, ""};
          if ((lt->kind == ValueKind::Date || lt->kind == ValueKind::Time ||
               lt->kind == ValueKind::Timestamp) &&
              rt->kind == ValueKind::Duration)
            return ExprType{lt->kind, ""};
          if (both(ValueKind::Date) || both(ValueKind::Timestamp))
            return ExprType{ValueKind::Duration, ""};
          return fail("invalid '-' operand kinds");
        case BinOp::Mul:
          if (both(ValueKind::Int)) return ExprType{ValueKind::Int, ""};
          if ((lt->kind == ValueKind::Int &&
               rt->kind == ValueKind::Duration) ||
              (lt->kind == ValueKind::Duration && rt->kind == ValueKind::Int))
            return ExprType{ValueKind::Duration, ""};
          return fail("invalid '*' operand kinds");
        case BinOp::Div:
          if (both(ValueKind::Int)) return ExprType{ValueKind::Int, ""};
          if (lt->kind == ValueKind::Duration && rt->kind == ValueKind::Int)
            return ExprType{ValueKind::Duration, ""};
          return fail("invalid '/' operand kinds");
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Evaluation

// Signals a simulator bug (a name that escaped static checking), not a user
// error.
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalContext {
  const StoreSnapshot* snapshot = nullptr;
  const TemporalIndex* temporal = nullptr;
  const std::map<std::string, Value>* bindings = nullptr;
  std::int64_t clock = 0;
};

// Three-valued evaluation: nullopt means "undefined", which arises only from
// temporal facts that do not exist yet (or an empty `first`). Undefined
// collapses to false in pre-conditions and to an error in post-conditions;
// that policy lives with the caller.
inline std::optional<Value> eval(const ExprPtr& e, const EvalContext& ctx) {
  switch (e->node) {
    case Expr::Literal: return e->literal;
    case Expr::Now: return Value::timestamp(ctx.clock);
    case Expr::Today: return Value::date(ctx.clock / kSecondsPerDay);
    case Expr::VarRef: {
      if (ctx.bindings) {
        auto it = ctx.bindings->find(e->name);
        if (it != ctx.bindings->end()) return it->second;
      }
      throw EvalError("unbound variable '" + e->name + "'");
    }
    case Expr::Payload: {
      if (ctx.bindings) {
        auto it = ctx.bindings->find("msg:" + e->name);
        if (it != ctx.bindings->end()) return it->second;
      }
      throw EvalError("no payload bound for message '" + e->name + "'");
    }
    case Expr::FieldGet: {
      auto base = eval(e->lhs, ctx);
      if (!base) return std::nullopt;
      if (base->kind() != ValueKind::Record || !base->as_record())
        throw EvalError("field access on non-record");
      const Value* v = base->as_record()->find(e->name);
      if (!v) return std::nullopt;  // partial record: treat as undefined
      return *v;
    }
    case Expr::First: {
      const auto& recs = ctx.snapshot->records(e->name);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (e->rhs) {
          std::map<std::string, Value> inner =
              ctx.bindings ? *ctx.bindings : std::map<std::string, Value>{};
          inner[e->var.empty() ? "it" : e->var] =
              Value::record(std::make_shared<Record>(recs[i]));
          EvalContext c2 = ctx;
          c2.bindings = &inner;
          auto cond = eval(e->rhs, c2);
          if (!cond || !cond->as_bool()) continue;
        }
        return Value::record(std::make_shared<Record>(recs[i]));
      }
      return std::nullopt;
    }
    case Expr::Quant: {
      const auto& recs = ctx.snapshot->records(e->name);
      bool any_undef = false;
      for (const auto& r : recs) {
        std::map<std::string, Value> inner =
            ctx.bindings ? *ctx.bindings : std::map<std::string, Value>{};
        inner[e->var] = Value::record(std::make_shared<Record>(r));
        EvalContext c2 = ctx;
        c2.bindings = &inner;
        auto v = eval(e->rhs, c2);
        if (!v) {
          any_undef = true;
          continue;
        }
        if (!e->forall && v->as_bool()) return Value::boolean(true);
        if (e->forall && !v->as_bool()) return Value::boolean(false);
      }
      if (any_undef) return std::nullopt;
      return Value::boolean(e->forall);
    }
    case Expr::Temporal: {
      const TemporalIndex* t = ctx.temporal;
      if (!t) return std::nullopt;
      auto date_of = [](std::int64_t ts) {
        return Value::date(ts / kSecondsPerDay);
      };
      auto time_of = [](std::int64_t ts) {
        return Value::time(ts % kSecondsPerDay);
      };
      switch (e->fn) {
        case TemporalFn::StartDate:
        case TemporalFn::StartTime: {
          auto it = t->executions.find(e->name);
          if (it == t->executions.end()) return std::nullopt;
          return e->fn == TemporalFn::StartDate ? date_of(it->second.start)
                                                : time_of(it->second.start);
        }
        case TemporalFn::EndDate:
        case TemporalFn::EndTime: {
          auto it = t->executions.find(e->name);
          if (it == t->executions.end() || !it->second.end)
            return std::nullopt;
          return e->fn == TemporalFn::EndDate ? date_of(*it->second.end)
                                              : time_of(*it->second.end);
        }
        case TemporalFn::SendDate: {
          auto it = t->messages.find(e->name);
          if (it == t->messages.end() || !it->second.sent)
            return std::nullopt;
          return date_of(*it->second.sent);
        }
        case TemporalFn::RecDate: {
          auto it = t->messages.find(e->name);
          if (it == t->messages.end() || !it->second.received)
            return std::nullopt;
          return date_of(*it->second.received);
        }
        case TemporalFn::StateEntered: {
          auto it = t->state_entry.find(e->name);
          if (it == t->state_entry.end()) return std::nullopt;
          return Value::timestamp(it->second);
        }
        case TemporalFn::OutcomePositive: {
          auto it = t->outcomes.find(e->name);
          if (it == t->outcomes.end()) return std::nullopt;
          return Value::boolean(it->second);
        }
      }
      return std::nullopt;
    }
    case Expr::Unary: {
      auto v = eval(e->lhs, ctx);
      if (!v) return std::nullopt;
      if (e->un == UnOp::Not) return Value::boolean(!v->as_bool());
      if (v->kind() == ValueKind::Duration) return Value::duration(-v->num());
      return Value::integer(-v->num());
    }
    case Expr::Binary: {
      // Kleene shortcuts for and/or.
      if (e->bin == BinOp::And || e->bin == BinOp::Or) {
        auto l = eval(e->lhs, ctx);
        auto r = eval(e->rhs, ctx);
        if (e->bin == BinOp::And) {
          if ((l && !l->as_bool()) || (r && !r->as_bool()))
            return Value::boolean(false);
          if (!l || !r) return std::nullopt;
          return Value::boolean(true);
        }
        if ((l && l->as_bool()) || (r && r->as_bool()))
          return Value::boolean(true);
        if (!l || !r) return std::nullopt;
        return Value::boolean(false);
      }
      auto l = eval(e->lhs, ctx);
      auto r = eval(e->rhs, ctx);
      if (!l || !r) return std::nullopt;
      switch (e->bin) {
        case BinOp::Eq: return Value::boolean(*l == *r);
        case BinOp::Ne: return Value::boolean(!(*l == *r));
        case BinOp::Lt: return Value::boolean(compare_values(*l, *r) < 0);
        case BinOp::Le: return Value::boolean(compare_values(*l, *r) <= 0);
        case BinOp::Gt: return Value::boolean(compare_values(*l, *r) > 0);
        case BinOp::Ge: return Value::boolean(compare_values(*l, *r) >= 0);
        case BinOp::Add:
        case BinOp::Sub: {
          std::int64_t rn = r->num();
          if (e->bin == BinOp::Sub) rn = -rn;
          switch (l->kind()) {
            case ValueKind::Int: return Value::integer(l->num() + rn);
            case ValueKind::Duration: return Value::duration(l->num() + rn);
            case ValueKind::Date:
              if (r->kind() == ValueKind::Date)
                return Value::duration((l->num() + rn) * kSecondsPerDay);
              // date +/- duration truncates sub-day remainders
              return Value::date(l->num() + rn / kSecondsPerDay);
            case ValueKind::Time: return Value::time(l->num() + rn);
            case ValueKind::Timestamp:
              if (r->kind() == ValueKind::Timestamp)
                return Value::duration(l->num() + rn);
              return Value::timestamp(l->num() + rn);
            default: throw EvalError("bad arithmetic operands");
          }
        }
        case BinOp::Mul:
          if (l->kind() == ValueKind::Duration ||
              r->kind() == ValueKind::Duration)
            return Value::duration(l->num() * r->num());
          return Value::integer(l->num() * r->num());
        case BinOp::Div:
          if (r->num() == 0) throw EvalError("division by zero");
          if (l->kind() == ValueKind::Duration)
            return Value::duration(l->num() / r->num());
          return Value::integer(l->num() / r->num());
        default: break;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// Predicate entry point: nullopt = undefined (MissingTemporalFact).
inline std::optional<bool> eval_predicate(const ExprPtr& e,
                                          const EvalContext& ctx) {
  auto v = eval(e, ctx);
  if (!v) return std::nullopt;
  return v->as_bool();
}

// Restriction of eval_predicate used for timer events and temporal pre/post
// checks; the expression was typed against temporal functions only.
inline std::optional<bool> check_temporal(const ExprPtr& e,
                                          const TemporalIndex& temporal,
                                          std::int64_t clock) {
  EvalContext ctx;
  StoreSnapshot empty;
  ctx.snapshot = &empty;
  ctx.temporal = &temporal;
  ctx.clock = clock;
  return eval_predicate(e, ctx);
}

// True if the expression mentions any temporal fact or the clock. Failing
// pre/post conditions of this shape report TemporalViolation.
inline bool is_temporal_expr(const ExprPtr& e) {
  switch (e->node) {
    case Expr::Now:
    case Expr::Today: return true;
    case Expr::Temporal: return e->fn != TemporalFn::OutcomePositive;
    case Expr::Unary:
    case Expr::FieldGet: return is_temporal_expr(e->lhs);
    case Expr::Binary:
      return is_temporal_expr(e->lhs) || is_temporal_expr(e->rhs);
    case Expr::Quant:
    case Expr::First: return e->rhs && is_temporal_expr(e->rhs);
    default: return false;
  }
}

}  // namespace btw
