#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "btw/ast.hpp"

namespace btw {

// Lowered, index-resolved form of a workflow model. Names survive for trace
// output and temporal references; cross-references become integer indices.

struct MsgClause {
  enum Kind { AsyncIn, AsyncOut, SyncCall };
  Kind kind = AsyncIn;
  std::string message;
  std::string buffer;   // AsyncIn source / AsyncOut target buffer, if any
  MessageDest dest;     // AsyncOut destination as declared
  std::string service;  // SyncCall counterpart
  std::string call_send;   // empty = receive-first exchange
  std::string call_reply;
  Span span;
};

struct TriggerEdge {
  int target = -1;  // -1 = unresolved, reported by the validator
  std::string target_name;
  std::optional<bool> on_positive;
  Span span;
};

struct ModelEntity {
  int index = -1;
  std::string name;
  ConceptKind kind = ConceptKind::Process;
  int parent = -1;    // enclosing composite entity, -1 at top level
  int block = -1;     // the body this entity is declared in
  int body = -1;      // block index of its own decomposition, -1 if atomic
  int alias_of = -1;  // bodiless reference resolved to a sibling's index
  bool initial = false;
  bool exclusive = false;
  std::string role;
  std::string unit;
  std::int64_t duration = 0;
  std::optional<std::int64_t> timeout;
  std::vector<AstHci> hcis;
  std::vector<MsgClause> messaging;
  ExprPtr pre, post;
  std::vector<ActionStmt> actions;
  std::vector<AstRule> rules;
  std::vector<AstTerminator> terminators;
  std::vector<TriggerEdge> triggers;
  Span span;

  bool is_composite() const { return body >= 0; }
};

struct ModelCommitScope {
  std::string name;
  std::vector<int> members;
  Span span;
};

struct ModelBlock {
  int owner = -1;  // entity whose decomposition this is, -1 for a root block
  std::string name;
  std::vector<int> entities;  // declaration order
  std::vector<std::string> uses;
  std::vector<std::pair<std::string, ValueKind>> vars;
  std::vector<ModelCommitScope> commit_scopes;
};

struct ModelStore {
  std::string name;
  std::vector<std::string> schemas;
  std::string org;
  std::string fragment;
  bool material = false;
  Span span;
};

struct ModelMessage {
  std::string name;
  std::string schema;
  bool external = false;
  Span span;
};

struct ModelBuffer {
  std::string name;
  BufferProtocol protocol = BufferProtocol::Fifo;
  ExprPtr order_key;
  std::vector<std::string> accepts;
  bool hidden = false;  // synthesised inbox for direct entity sends
  Span span;
};

struct EcaAct {
  AstEcaAction::Kind kind = AstEcaAction::None;
  std::string message;
  std::string target_name;
  int target_entity = -1;  // Forward / Trigger
  Span span;
};

struct ModelTransition {
  std::string from, to;
  AstEventSpec when;
  ExprPtr condition;
  std::vector<EcaAct> actions;
  int rule_id = 0;  // 1-based declaration order, used in trace output
  Span span;
};

struct ServiceStateModel {
  std::string name;
  std::vector<std::string> states;  // excludes birth/death
  bool has_birth = false, has_death = false;
  std::vector<ModelTransition> transitions;
  Span span;
};

struct RecoveryRung {
  std::optional<int> threshold;  // nullopt = unbounded (forcible)
  int target = -1;               // -1 = retry self
  Span span;
};

struct ModelRecovery {
  std::vector<RecoveryRung> ladder;
  // Rollback of a *committed* execution. Uncommitted work always reverses
  // through the journal; decisions never roll back.
  enum Committed { Null, Compensate };
  Committed committed = Null;
  int compensation = -1;
  bool declared_undo = false;  // rollback was spelled `undo` in the source
};

struct WorkflowModel {
  SchemaTable schemas;
  std::vector<ModelStore> stores;
  std::vector<ModelMessage> messages;
  std::vector<ModelBuffer> buffers;
  std::vector<ModelEntity> entities;
  std::vector<ModelBlock> blocks;
  std::vector<int> roots;  // top-level block indices, declaration order
  std::optional<ServiceStateModel> service;
  std::map<int, ModelRecovery> recovery;  // keyed by entity index
  std::vector<std::string> services;      // declared service names
  bool validated = false;

  std::map<std::string, int> store_index;
  std::map<std::string, int> message_index;
  std::map<std::string, int> buffer_index;
  std::map<std::string, int> entity_index;  // first declaration wins

  const ModelEntity* find_entity(const std::string& name) const {
    auto it = entity_index.find(name);
    return it == entity_index.end() ? nullptr : &entities[it->second];
  }
  const ModelStore* find_store(const std::string& name) const {
    auto it = store_index.find(name);
    return it == store_index.end() ? nullptr : &stores[it->second];
  }
  const ModelBuffer* find_buffer(const std::string& name) const {
    auto it = buffer_index.find(name);
    return it == buffer_index.end() ? nullptr : &buffers[it->second];
  }

  // Resolves an alias chain to the entity carrying the actual definition.
  int resolve(int idx) const {
    while (idx >= 0 && entities[idx].alias_of >= 0)
      idx = entities[idx].alias_of;
    return idx;
  }

  // Enclosing block chain from a root block down to the entity, outermost
  // first. Used when an ECA forward targets a nested entity.
  std::vector<int> enclosing_chain(int idx) const {
    std::vector<int> chain;
    for (int e = idx; e >= 0; e = entities[e].parent) chain.push_back(e);
    std::reverse(chain.begin(), chain.end());
    return chain;
  }

  nlohmann::ordered_json to_json() const;
  std::uint64_t hash() const;
};

inline nlohmann::ordered_json WorkflowModel::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : stores)
    arr.push_back({{"name", s.name},
                   {"schemas", s.schemas},
                   {"org", s.org},
                   {"fragment", s.fragment},
                   {"material", s.material}});
  j["stores"] = arr;
  arr = nlohmann::ordered_json::array();
  for (const auto& m : messages)
    arr.push_back({{"name", m.name}, {"schema", m.schema},
                   {"external", m.external}});
  j["messages"] = arr;
  arr = nlohmann::ordered_json::array();
  for (const auto& b : buffers)
    arr.push_back({{"name", b.name},
                   {"protocol", static_cast<int>(b.protocol)},
                   {"key", nlohmann::ordered_json::parse(
                               expr_to_json(b.order_key).dump())},
                   {"accepts", b.accepts},
                   {"hidden", b.hidden}});
  j["buffers"] = arr;
  arr = nlohmann::ordered_json::array();
  for (const auto& e : entities) {
    nlohmann::ordered_json je;
    je["name"] = e.name;
    je["kind"] = to_string(e.kind);
    je["parent"] = e.parent;
    je["block"] = e.block;
    je["body"] = e.body;
    je["alias"] = e.alias_of;
    je["initial"] = e.initial;
    je["exclusive"] = e.exclusive;
    je["role"] = e.role;
    je["unit"] = e.unit;
    je["duration"] = e.duration;
    je["timeout"] = e.timeout ? nlohmann::ordered_json(*e.timeout)
                              : nlohmann::ordered_json();
    nlohmann::ordered_json ms = nlohmann::ordered_json::array();
    for (const auto& m : e.messaging)
      ms.push_back({static_cast<int>(m.kind), m.message, m.buffer,
                    static_cast<int>(m.dest.kind), m.dest.name, m.service,
                    m.call_send, m.call_reply});
    je["messaging"] = ms;
    je["pre"] = nlohmann::ordered_json::parse(expr_to_json(e.pre).dump());
    je["post"] = nlohmann::ordered_json::parse(expr_to_json(e.post).dump());
    nlohmann::ordered_json as = nlohmann::ordered_json::array();
    for (const auto& a : e.actions)
      as.push_back(nlohmann::ordered_json::parse(action_to_json(a).dump()));
    je["actions"] = as;
    nlohmann::ordered_json rs = nlohmann::ordered_json::array();
    for (const auto& r : e.rules)
      rs.push_back({r.positive, nlohmann::ordered_json::parse(
                                    expr_to_json(r.predicate).dump())});
    je["rules"] = rs;
    nlohmann::ordered_json ts = nlohmann::ordered_json::array();
    for (const auto& t : e.terminators)
      ts.push_back({t.on_positive, t.abort,
                    nlohmann::ordered_json::parse(
                        expr_to_json(t.condition).dump()),
                    t.yields ? nlohmann::ordered_json(*t.yields)
                             : nlohmann::ordered_json()});
    je["terminators"] = ts;
    nlohmann::ordered_json tr = nlohmann::ordered_json::array();
    for (const auto& t : e.triggers)
      tr.push_back({t.target, t.on_positive
                                  ? nlohmann::ordered_json(*t.on_positive)
                                  : nlohmann::ordered_json()});
    je["triggers"] = tr;
    arr.push_back(je);
  }
  j["entities"] = arr;
  arr = nlohmann::ordered_json::array();
  for (const auto& b : blocks) {
    nlohmann::ordered_json cs = nlohmann::ordered_json::array();
    for (const auto& c : b.commit_scopes) cs.push_back({c.name, c.members});
    nlohmann::ordered_json vs = nlohmann::ordered_json::array();
    for (const auto& [n, k] : b.vars) vs.push_back({n, to_string(k)});
    arr.push_back({{"owner", b.owner},
                   {"name", b.name},
                   {"entities", b.entities},
                   {"uses", b.uses},
                   {"vars", vs},
                   {"commit_scopes", cs}});
  }
  j["blocks"] = arr;
  j["roots"] = roots;
  if (service) {
    nlohmann::ordered_json sv;
    sv["name"] = service->name;
    sv["states"] = service->states;
    sv["birth"] = service->has_birth;
    sv["death"] = service->has_death;
    nlohmann::ordered_json trs = nlohmann::ordered_json::array();
    for (const auto& t : service->transitions) {
      nlohmann::ordered_json acts = nlohmann::ordered_json::array();
      for (const auto& a : t.actions)
        acts.push_back({static_cast<int>(a.kind), a.message, a.target_name,
                        a.target_entity});
      trs.push_back({t.from, t.to, static_cast<int>(t.when.kind),
                     t.when.name,
                     nlohmann::ordered_json::parse(
                         expr_to_json(t.when.expr).dump()),
                     t.when.positive, t.when.threshold, t.when.failure,
                     nlohmann::ordered_json::parse(
                         expr_to_json(t.condition).dump()),
                     acts, t.rule_id});
    }
    sv["transitions"] = trs;
    j["service"] = sv;
  } else {
    j["service"] = nullptr;
  }
  arr = nlohmann::ordered_json::array();
  for (const auto& [idx, rec] : recovery) {
    nlohmann::ordered_json ld = nlohmann::ordered_json::array();
    for (const auto& r : rec.ladder)
      ld.push_back({r.threshold ? nlohmann::ordered_json(*r.threshold)
                                : nlohmann::ordered_json(),
                    r.target});
    arr.push_back({{"entity", idx},
                   {"ladder", ld},
                   {"committed", static_cast<int>(rec.committed)},
                   {"compensation", rec.compensation},
                   {"undo", rec.declared_undo}});
  }
  j["recovery"] = arr;
  j["services"] = services;
  return j;
}

inline std::uint64_t WorkflowModel::hash() const {
  // FNV-1a over the canonical dump; stable across runs and platforms.
  std::string s = to_json().dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace btw
