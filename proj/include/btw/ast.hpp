#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "btw/action.hpp"
#include "btw/expr.hpp"
#include "btw/registry.hpp"
#include "btw/value.hpp"

namespace btw {

// --- scope block -----------------------------------------------------------

struct AstOrg {
  std::string name;
  std::optional<std::string> parent;  // subOf
  Span span;
};

struct AstActor {
  std::string name;
  std::optional<std::string> org;  // structure
  std::vector<std::string> roles;  // assign
  Span span;
};

struct AstRoleDecl {
  std::string name;
  Span span;
};

struct AstServiceDecl {
  std::string name;
  bool external = false;
  Span span;
};

struct AstStoreDecl {
  std::string name;
  std::vector<std::string> schemas;
  std::optional<std::string> org;
  std::optional<std::string> fragment;
  Span span;
};

struct AstMessageDecl {
  std::string name;
  bool external = false;
  std::string schema;
  Span span;
};

struct AstBufferDecl {
  std::string name;
  BufferProtocol protocol = BufferProtocol::Fifo;
  ExprPtr order_key;  // predicate protocol: ordering key over `msg`
  std::vector<std::string> accepts;
  Span span;
};

struct AstScope {
  std::vector<AstOrg> orgs;
  std::vector<AstActor> actors;
  std::vector<AstRoleDecl> roles;
  std::vector<AstServiceDecl> services;
  std::vector<AstStoreDecl> stores;
  std::vector<AstMessageDecl> messages;
  std::vector<AstBufferDecl> buffers;
  Span span;
};

struct AstSchemaDecl {
  std::string name;
  bool material = false;
  std::vector<std::pair<std::string, ValueKind>> fields;
  Span span;
};

// --- process models --------------------------------------------------------

struct AstMessaging {
  enum Mode { Receive, Send, Call };
  Mode mode = Receive;
  std::string message;             // Receive/Send: the message type
  std::optional<std::string> from; // Receive: buffer or entity source
  MessageDest dest;                // Send
  std::string service;             // Call counterpart
  std::string call_send;           // Call: outgoing type (empty = receive-first)
  std::string call_reply;          // Call: expected reply type
  Span span;
};

struct AstRule {
  bool positive = true;
  ExprPtr predicate;
  Span span;
};

struct AstTerminator {
  bool on_positive = true;   // which outcome terminates
  bool abort = false;        // terminating abort (kills sibling decisions)
  ExprPtr condition;         // null = always
  std::optional<bool> yields; // complex-decision outcome; default = matched
  Span span;
};

struct AstTrigger {
  std::string target;
  std::optional<bool> on_positive;  // decisions label edges by outcome
  Span span;
};

struct AstHci {
  std::string name;
  std::optional<std::string> schema;
  Span span;
};

struct AstCommitScope {
  std::string name;
  std::vector<std::string> members;
  Span span;
};

struct AstEntity;

struct AstBody {
  std::vector<std::string> uses;  // Locse
  std::vector<std::pair<std::string, ValueKind>> vars;  // Locvar
  std::vector<AstCommitScope> commit_scopes;
  std::vector<AstEntity> entities;
  Span span;
};

struct AstEntity {
  ConceptKind kind = ConceptKind::Process;
  std::string name;
  bool initial = false;
  bool exclusive = false;
  std::optional<std::string> role;
  std::optional<std::string> unit;
  std::int64_t duration = 0;       // seconds the execution takes
  std::optional<std::int64_t> timeout;  // pre-condition wait budget
  std::vector<AstHci> hcis;
  std::vector<AstMessaging> messaging;
  ExprPtr pre, post;
  std::vector<ActionStmt> actions;
  std::vector<AstRule> rules;
  std::vector<AstTerminator> terminators;
  std::vector<AstTrigger> triggers;
  std::optional<AstBody> body;  // decomposition
  Span span;
};

struct AstProcessBlock {
  std::string name;
  AstBody body;
  Span span;
};

// --- service model ---------------------------------------------------------

struct AstEventSpec {
  enum Kind {
    MsgFrom,
    MsgTo,
    DbState,
    DecisionEnd,
    ProcessStart,
    ProcessEnd,
    ProcessStartFailed,
    Abort,
    Timer,
  };
  Kind kind = MsgFrom;
  std::string name;      // message / decision / process
  ExprPtr expr;          // DbState predicate, Timer constraint
  bool positive = true;  // DecisionEnd
  int threshold = 0;     // ProcessStartFailed
  bool failure = true;   // Abort
  Span span;
};

struct AstEcaAction {
  enum Kind { Forward, Trigger, Send, None };
  Kind kind = None;
  std::string message;
  std::string target;
  Span span;
};

struct AstTransition {
  std::string from, to;  // "birth" and "death" are reserved
  AstEventSpec when;
  ExprPtr condition;
  std::vector<AstEcaAction> actions;
  Span span;
};

struct AstServiceModel {
  std::string name;
  std::vector<std::string> states;  // normal states, declaration order
  bool has_birth = false, has_death = false;
  std::vector<AstTransition> transitions;
  Span span;
};

// --- recovery --------------------------------------------------------------

struct AstContingency {
  std::optional<int> threshold;  // nullopt = unbounded
  std::string target;            // empty = self
  Span span;
};

struct AstRecoveryEntry {
  std::string entity;
  std::vector<AstContingency> ladder;
  enum Rollback { Unset, Undo, Null, Compensate };
  Rollback rollback = Unset;
  std::string compensation;
  Span span;
};

struct AstRecovery {
  std::vector<AstRecoveryEntry> entries;
  Span span;
};

// --- whole file ------------------------------------------------------------

struct SpecAst {
  AstScope scope;
  std::vector<AstSchemaDecl> schemas;
  std::vector<AstProcessBlock> processes;
  std::optional<AstServiceModel> service;
  std::optional<AstRecovery> recovery;
};

// ---------------------------------------------------------------------------
// Structural serialization (spans excluded). Drives AST equality in tests;
// independent of the canonical formatter on purpose.

nlohmann::json expr_to_json(const ExprPtr& e);

inline nlohmann::json value_to_json(const Value& v) {
  nlohmann::json j;
  j["k"] = to_string(v.kind());
  if (v.kind() == ValueKind::Text)
    j["v"] = v.as_text();
  else if (v.kind() == ValueKind::Record)
    j["v"] = value_to_string(v);
  else
    j["v"] = v.num();
  return j;
}

inline nlohmann::json expr_to_json(const ExprPtr& e) {
  if (!e) return nullptr;
  nlohmann::json j;
  j["n"] = static_cast<int>(e->node);
  switch (e->node) {
    case Expr::Literal: j["lit"] = value_to_json(e->literal); break;
    case Expr::VarRef:
    case Expr::Payload: j["name"] = e->name; break;
    case Expr::FieldGet:
      j["name"] = e->name;
      j["l"] = expr_to_json(e->lhs);
      break;
    case Expr::Binary:
      j["op"] = static_cast<int>(e->bin);
      j["l"] = expr_to_json(e->lhs);
      j["r"] = expr_to_json(e->rhs);
      break;
    case Expr::Unary:
      j["op"] = static_cast<int>(e->un);
      j["l"] = expr_to_json(e->lhs);
      break;
    case Expr::Quant:
      j["forall"] = e->forall;
      j["var"] = e->var;
      j["store"] = e->name;
      j["body"] = expr_to_json(e->rhs);
      break;
    case Expr::First:
      j["store"] = e->name;
      j["var"] = e->var;
      j["where"] = expr_to_json(e->rhs);
      break;
    case Expr::Temporal:
      j["fn"] = static_cast<int>(e->fn);
      j["name"] = e->name;
      break;
    case Expr::Now:
    case Expr::Today: break;
  }
  return j;
}

inline nlohmann::json action_to_json(const ActionStmt& a) {
  nlohmann::json j;
  j["k"] = static_cast<int>(a.kind);
  j["store"] = a.store;
  j["message"] = a.message;
  j["var"] = a.var;
  j["where"] = expr_to_json(a.where);
  j["dest"] = {static_cast<int>(a.dest.kind), a.dest.name};
  nlohmann::json fs = nlohmann::json::array();
  for (const auto& [n, ex] : a.fields) fs.push_back({n, expr_to_json(ex)});
  j["fields"] = fs;
  return j;
}

nlohmann::json body_to_json(const AstBody& b);

inline nlohmann::json entity_to_json(const AstEntity& e) {
  nlohmann::json j;
  j["kind"] = to_string(e.kind);
  j["name"] = e.name;
  j["initial"] = e.initial;
  j["exclusive"] = e.exclusive;
  j["role"] = e.role.value_or("");
  j["unit"] = e.unit.value_or("");
  j["duration"] = e.duration;
  j["timeout"] = e.timeout ? nlohmann::json(*e.timeout) : nlohmann::json();
  nlohmann::json hc = nlohmann::json::array();
  for (const auto& h : e.hcis) hc.push_back({h.name, h.schema.value_or("")});
  j["hci"] = hc;
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : e.messaging) {
    ms.push_back({static_cast<int>(m.mode), m.message, m.from.value_or(""),
                  static_cast<int>(m.dest.kind), m.dest.name, m.service,
                  m.call_send, m.call_reply});
  }
  j["messaging"] = ms;
  j["pre"] = expr_to_json(e.pre);
  j["post"] = expr_to_json(e.post);
  nlohmann::json as = nlohmann::json::array();
  for (const auto& a : e.actions) as.push_back(action_to_json(a));
  j["actions"] = as;
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : e.rules)
    rs.push_back({r.positive, expr_to_json(r.predicate)});
  j["rules"] = rs;
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : e.terminators)
    ts.push_back({t.on_positive, t.abort, expr_to_json(t.condition),
                  t.yields ? nlohmann::json(*t.yields) : nlohmann::json()});
  j["terminators"] = ts;
  nlohmann::json tr = nlohmann::json::array();
  for (const auto& t : e.triggers)
    tr.push_back({t.target,
                  t.on_positive ? nlohmann::json(*t.on_positive)
                                : nlohmann::json()});
  j["triggers"] = tr;
  j["body"] = e.body ? body_to_json(*e.body) : nlohmann::json();
  return j;
}

inline nlohmann::json body_to_json(const AstBody& b) {
  nlohmann::json j;
  j["uses"] = b.uses;
  nlohmann::json vs = nlohmann::json::array();
  for (const auto& [n, k] : b.vars) vs.push_back({n, to_string(k)});
  j["vars"] = vs;
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : b.commit_scopes) cs.push_back({c.name, c.members});
  j["commit_scopes"] = cs;
  nlohmann::json es = nlohmann::json::array();
  for (const auto& e : b.entities) es.push_back(entity_to_json(e));
  j["entities"] = es;
  return j;
}

inline nlohmann::json ast_to_json(const SpecAst& ast) {
  nlohmann::json j;
  nlohmann::json sc;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& o : ast.scope.orgs)
    arr.push_back({o.name, o.parent.value_or("")});
  sc["orgs"] = arr;
  arr = nlohmann::json::array();
  for (const auto& a : ast.scope.actors)
    arr.push_back({a.name, a.org.value_or(""), a.roles});
  sc["actors"] = arr;
  arr = nlohmann::json::array();
  for (const auto& r : ast.scope.roles) arr.push_back(r.name);
  sc["roles"] = arr;
  arr = nlohmann::json::array();
  for (const auto& s : ast.scope.services) arr.push_back({s.name, s.external});
  sc["services"] = arr;
  arr = nlohmann::json::array();
  for (const auto& s : ast.scope.stores)
    arr.push_back({s.name, s.schemas, s.org.value_or(""),
                   s.fragment.value_or("")});
  sc["stores"] = arr;
  arr = nlohmann::json::array();
  for (const auto& m : ast.scope.messages)
    arr.push_back({m.name, m.external, m.schema});
  sc["messages"] = arr;
  arr = nlohmann::json::array();
  for (const auto& b : ast.scope.buffers)
    arr.push_back({b.name, static_cast<int>(b.protocol),
                   expr_to_json(b.order_key), b.accepts});
  sc["buffers"] = arr;
  j["scope"] = sc;

  arr = nlohmann::json::array();
  for (const auto& s : ast.schemas) {
    nlohmann::json fs = nlohmann::json::array();
    for (const auto& [n, k] : s.fields) fs.push_back({n, to_string(k)});
    arr.push_back({s.name, s.material, fs});
  }
  j["schemas"] = arr;

  arr = nlohmann::json::array();
  for (const auto& p : ast.processes)
    arr.push_back({p.name, body_to_json(p.body)});
  j["processes"] = arr;

  if (ast.service) {
    nlohmann::json sv;
    sv["name"] = ast.service->name;
    sv["states"] = ast.service->states;
    sv["birth"] = ast.service->has_birth;
    sv["death"] = ast.service->has_death;
    nlohmann::json trs = nlohmann::json::array();
    for (const auto& t : ast.service->transitions) {
      nlohmann::json acts = nlohmann::json::array();
      for (const auto& a : t.actions)
        acts.push_back({static_cast<int>(a.kind), a.message, a.target});
      trs.push_back({t.from, t.to, static_cast<int>(t.when.kind), t.when.name,
                     expr_to_json(t.when.expr), t.when.positive,
                     t.when.threshold, t.when.failure,
                     expr_to_json(t.condition), acts});
    }
    sv["transitions"] = trs;
    j["service"] = sv;
  } else {
    j["service"] = nullptr;
  }

  if (ast.recovery) {
    arr = nlohmann::json::array();
    for (const auto& e : ast.recovery->entries) {
      nlohmann::json ld = nlohmann::json::array();
      for (const auto& c : e.ladder)
        ld.push_back({c.threshold ? nlohmann::json(*c.threshold)
                                  : nlohmann::json(),
                      c.target});
      arr.push_back({e.entity, ld, static_cast<int>(e.rollback),
                     e.compensation});
    }
    j["recovery"] = arr;
  } else {
    j["recovery"] = nullptr;
  }
  return j;
}

inline bool ast_equal(const SpecAst& a, const SpecAst& b) {
  return ast_to_json(a) == ast_to_json(b);
}

}  // namespace btw
