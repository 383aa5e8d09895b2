#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "btw/ast.hpp"
#include "btw/model.hpp"
#include "btw/registry.hpp"

namespace btw {

struct LowerResult {
  ConceptRegistry registry;
  WorkflowModel model;
  std::vector<Diagnostic> diags;

  bool ok() const { return !has_errors(diags); }
};

inline std::string inbox_name(const std::string& entity,
                              const std::string& message) {
  return "~inbox:" + entity + ":" + message;
}

namespace detail {

class Lowerer {
 public:
  explicit Lowerer(const SpecAst& ast) : ast_(ast) {}

  LowerResult run() {
    lower_schemas();
    lower_scope();
    for (const auto& p : ast_.processes) {
      int blk = lower_body(p.body, -1, p.name);
      res_.model.roots.push_back(blk);
    }
    resolve_aliases();
    register_entities();
    lower_messaging();
    lower_service();
    lower_recovery();
    typecheck_all();
    return std::move(res_);
  }

 private:
  const SpecAst& ast_;
  LowerResult res_;

  void err(const std::string& code, const Span& sp, const std::string& msg) {
    res_.diags.push_back({code, Severity::Error, sp, msg});
  }
  void dup(const Span& sp, const std::string& msg) { err("L001", sp, msg); }
  void unresolved(const Span& sp, const std::string& msg) {
    err("L002", sp, msg);
  }

  // --- schemas & scope ----------------------------------------------------

  void lower_schemas() {
    for (const auto& s : ast_.schemas) {
      if (res_.model.schemas.count(s.name)) {
        dup(s.span, "schema '" + s.name + "' declared twice");
        continue;
      }
      Schema sc;
      sc.name = s.name;
      sc.material = s.material;
      sc.fields = s.fields;
      res_.model.schemas.emplace(s.name, std::move(sc));
    }
  }

  std::optional<ConceptId> reg(ConceptKind kind, const std::string& name,
                               ScopeTag scope, const Span& sp) {
    try {
      return res_.registry.register_concept(kind, name, scope);
    } catch (const RegistryError& e) {
      dup(sp, e.what());
      return std::nullopt;
    }
  }

  void lower_scope() {
    auto& reg_ = res_.registry;
    const auto& sc = ast_.scope;
    for (const auto& o : sc.orgs)
      reg(ConceptKind::OrgUnit, o.name, ScopeTag::Domain, o.span);
    for (const auto& o : sc.orgs) {
      if (!o.parent) continue;
      auto child = reg_.lookup(ConceptKind::OrgUnit, o.name);
      auto parent = reg_.lookup(ConceptKind::OrgUnit, *o.parent);
      if (!parent) {
        unresolved(o.span, "unknown org unit '" + *o.parent + "'");
        continue;
      }
      if (child)
        reg_.add_relation_unchecked(RelationName::SubOf, *child, *parent);
    }
    for (const auto& r : sc.roles)
      reg(ConceptKind::Role, r.name, ScopeTag::Domain, r.span);
    for (const auto& a : sc.actors) {
      auto id = reg(ConceptKind::Actor, a.name, ScopeTag::Domain, a.span);
      if (!id) continue;
      if (a.org) {
        auto org = reg_.lookup(ConceptKind::OrgUnit, *a.org);
        if (!org)
          unresolved(a.span, "unknown org unit '" + *a.org + "'");
        else
          reg_.add_relation_unchecked(RelationName::Structure, *org, *id);
      }
      for (const auto& rn : a.roles) {
        auto role = reg_.lookup(ConceptKind::Role, rn);
        if (!role)
          unresolved(a.span, "unknown role '" + rn + "'");
        else
          reg_.add_relation_unchecked(RelationName::Assign, *id, *role);
      }
    }
    for (const auto& s : sc.services) {
      reg(ConceptKind::Service, s.name,
          s.external ? ScopeTag::Environment : ScopeTag::Domain, s.span);
      res_.model.services.push_back(s.name);
    }
    for (const auto& m : sc.messages) {
      auto id = reg(ConceptKind::MessageType, m.name,
                    m.external ? ScopeTag::Environment : ScopeTag::Domain,
                    m.span);
      if (!res_.model.schemas.count(m.schema))
        unresolved(m.span, "message '" + m.name + "' uses unknown schema '" +
                               m.schema + "'");
      if (res_.model.message_index.count(m.name)) continue;
      if (id) res_.registry.set_schema(*id, {m.schema});
      res_.model.message_index[m.name] =
          static_cast<int>(res_.model.messages.size());
      res_.model.messages.push_back({m.name, m.schema, m.external, m.span});
    }
    for (const auto& s : sc.stores) {
      auto id = reg(ConceptKind::ObjectStore, s.name, ScopeTag::Domain,
                    s.span);
      bool material = false;
      for (const auto& sn : s.schemas) {
        auto it = res_.model.schemas.find(sn);
        if (it == res_.model.schemas.end())
          unresolved(s.span, "store '" + s.name + "' uses unknown schema '" +
                                 sn + "'");
        else if (&sn == &s.schemas.front())
          material = it->second.material;
      }
      if (id) {
        res_.registry.set_schema(*id, s.schemas);
        if (s.fragment) res_.registry.set_fragment(*id, *s.fragment);
        if (s.org) {
          auto org = reg_.lookup(ConceptKind::OrgUnit, *s.org);
          if (!org)
            unresolved(s.span, "unknown org unit '" + *s.org + "'");
          else
            reg_.add_relation_unchecked(RelationName::Structure, *org, *id);
        }
      }
      if (res_.model.store_index.count(s.name)) continue;
      res_.model.store_index[s.name] =
          static_cast<int>(res_.model.stores.size());
      res_.model.stores.push_back({s.name, s.schemas, s.org.value_or(""),
                                   s.fragment.value_or(""), material, s.span});
    }
    for (const auto& b : sc.buffers) {
      auto id = reg(ConceptKind::MessageBuffer, b.name, ScopeTag::Domain,
                    b.span);
      if (id) {
        res_.registry.set_protocol(*id, b.protocol);
        for (const auto& mn : b.accepts) {
          auto mt = reg_.lookup(ConceptKind::MessageType, mn);
          if (!mt)
            unresolved(b.span, "buffer '" + b.name +
                                   "' accepts unknown message '" + mn + "'");
          else
            reg_.add_relation_unchecked(RelationName::MesAlloc, *id, *mt);
        }
      }
      if (res_.model.buffer_index.count(b.name)) continue;
      res_.model.buffer_index[b.name] =
          static_cast<int>(res_.model.buffers.size());
      res_.model.buffers.push_back({b.name, b.protocol, b.order_key,
                                    b.accepts, false, b.span});
    }
  }

  // --- process structure --------------------------------------------------

  int lower_body(const AstBody& body, int owner, const std::string& name) {
    auto& m = res_.model;
    int blk = static_cast<int>(m.blocks.size());
    m.blocks.emplace_back();
    m.blocks[blk].owner = owner;
    m.blocks[blk].name = name;
    m.blocks[blk].uses = body.uses;
    m.blocks[blk].vars = body.vars;
    for (const auto& e : body.entities) {
      int idx = lower_entity(e, blk, owner);
      m.blocks[blk].entities.push_back(idx);
    }
    // commit scopes resolve against the block's own entities
    for (const auto& cs : body.commit_scopes) {
      ModelCommitScope mc;
      mc.name = cs.name;
      mc.span = cs.span;
      for (const auto& member : cs.members) {
        int found = -1;
        for (int idx : m.blocks[blk].entities)
          if (m.entities[idx].name == member) found = idx;
        if (found < 0)
          unresolved(cs.span, "commit scope '" + cs.name +
                                  "' names unknown entity '" + member + "'");
        else
          mc.members.push_back(found);
      }
      m.blocks[blk].commit_scopes.push_back(std::move(mc));
    }
    return blk;
  }

  int lower_entity(const AstEntity& e, int blk, int parent) {
    auto& m = res_.model;
    int idx = static_cast<int>(m.entities.size());
    m.entities.emplace_back();
    {
      ModelEntity& me = m.entities[idx];
      me.index = idx;
      me.name = e.name;
      me.kind = e.kind;
      me.parent = parent;
      me.block = blk;
      me.initial = e.initial;
      me.exclusive = e.exclusive;
      me.role = e.role.value_or("");
      me.unit = e.unit.value_or("");
      me.duration = e.duration;
      me.timeout = e.timeout;
      me.hcis = e.hcis;
      me.pre = e.pre;
      me.post = e.post;
      me.actions = e.actions;
      me.rules = e.rules;
      me.terminators = e.terminators;
      me.span = e.span;
      for (const auto& t : e.triggers) {
        TriggerEdge te;
        te.target_name = t.target;
        te.on_positive = t.on_positive;
        te.span = t.span;
        me.triggers.push_back(std::move(te));
      }
      for (const auto& ms : e.messaging) {
        MsgClause c;
        c.span = ms.span;
        switch (ms.mode) {
          case AstMessaging::Receive:
            c.kind = MsgClause::AsyncIn;
            c.message = ms.message;
            c.buffer = ms.from.value_or("");  // resolved in lower_messaging
            break;
          case AstMessaging::Send:
            c.kind = MsgClause::AsyncOut;
            c.message = ms.message;
            c.dest = ms.dest;
            break;
          case AstMessaging::Call:
            c.kind = MsgClause::SyncCall;
            c.service = ms.service;
            c.call_send = ms.call_send;
            c.call_reply = ms.call_reply;
            break;
        }
        me.messaging.push_back(std::move(c));
      }
    }
    if (!m.entity_index.count(e.name)) m.entity_index[e.name] = idx;
    if (e.body) {
      int sub = lower_body(*e.body, idx, e.name);
      m.entities[idx].body = sub;
    }
    return idx;
  }

  static bool bare_decl(const ModelEntity& e) {
    return e.body < 0 && !e.initial && !e.exclusive && e.role.empty() &&
           e.unit.empty() && e.duration == 0 && !e.timeout &&
           e.hcis.empty() && e.messaging.empty() && !e.pre && !e.post &&
           e.actions.empty() && e.rules.empty() && e.terminators.empty() &&
           e.triggers.empty();
  }

  // A bare declaration naming a sibling decomposition (or an enclosing
  // composite) is a reference to it; this is how recursion is written.
  void resolve_aliases() {
    auto& m = res_.model;
    for (auto& e : m.entities) {
      if (!bare_decl(e)) continue;
      for (int sib : m.blocks[e.block].entities) {
        if (sib != e.index && m.entities[sib].name == e.name &&
            m.entities[sib].body >= 0) {
          e.alias_of = sib;
          break;
        }
      }
      if (e.alias_of >= 0) continue;
      for (int up = e.parent; up >= 0; up = m.entities[up].parent) {
        if (m.entities[up].name == e.name) {
          e.alias_of = up;
          break;
        }
      }
    }
    // triggers resolve within the declaring block only; anything else is a
    // locality violation the validator reports
    for (auto& e : m.entities) {
      for (auto& t : e.triggers) {
        for (int sib : m.blocks[e.block].entities)
          if (m.entities[sib].name == t.target_name) t.target = sib;
      }
    }
  }

  void register_entities() {
    auto& m = res_.model;
    for (const auto& e : m.entities) {
      if (e.alias_of >= 0) continue;
      std::optional<ConceptId> id;
      try {
        id = res_.registry.register_concept(e.kind, e.name, ScopeTag::Domain);
      } catch (const RegistryError&) {
        // same name at another level; the per-level rule is V006's business
        id = res_.registry.lookup(e.kind, e.name);
      }
      if (!id) continue;
      if (!e.role.empty()) {
        auto role = res_.registry.lookup(ConceptKind::Role, e.role);
        if (!role)
          unresolved(e.span, "unknown role '" + e.role + "'");
        else if (e.kind != ConceptKind::Synchroniser)
          res_.registry.add_relation_unchecked(RelationName::Undertake, *role,
                                               *id);
      }
      if (!e.unit.empty()) {
        auto org = res_.registry.lookup(ConceptKind::OrgUnit, e.unit);
        if (!org)
          unresolved(e.span, "unknown org unit '" + e.unit + "'");
        else
          res_.registry.add_relation_unchecked(RelationName::Structure, *org,
                                               *id);
      }
    }
  }

  // --- messaging ----------------------------------------------------------

  void ensure_inbox(const std::string& entity, const std::string& message) {
    auto& m = res_.model;
    std::string name = inbox_name(entity, message);
    if (m.buffer_index.count(name)) return;
    m.buffer_index[name] = static_cast<int>(m.buffers.size());
    ModelBuffer b;
    b.name = name;
    b.protocol = BufferProtocol::Fifo;
    b.accepts = {message};
    b.hidden = true;
    m.buffers.push_back(std::move(b));
    try {
      auto id = res_.registry.register_concept(ConceptKind::MessageBuffer,
                                               name, ScopeTag::Domain);
      res_.registry.set_protocol(id, BufferProtocol::Fifo);
      auto mt = res_.registry.lookup(ConceptKind::MessageType, message);
      if (mt)
        res_.registry.add_relation_unchecked(RelationName::MesAlloc, id, *mt);
    } catch (const RegistryError&) {
    }
  }

  void check_message(const std::string& name, const Span& sp) {
    if (!name.empty() && !res_.model.message_index.count(name))
      unresolved(sp, "unknown message type '" + name + "'");
  }

  void lower_messaging() {
    auto& m = res_.model;
    for (auto& e : m.entities) {
      for (auto& c : e.messaging) {
        switch (c.kind) {
          case MsgClause::AsyncIn: {
            check_message(c.message, c.span);
            if (!c.buffer.empty() && m.buffer_index.count(c.buffer)) break;
            // no declared buffer: a hidden per-entity inbox carries it
            c.buffer = inbox_name(e.name, c.message);
            ensure_inbox(e.name, c.message);
            break;
          }
          case MsgClause::AsyncOut: {
            check_message(c.message, c.span);
            switch (c.dest.kind) {
              case MessageDest::EntityTarget:
                c.buffer = inbox_name(c.dest.name, c.message);
                ensure_inbox(c.dest.name, c.message);
                break;
              case MessageDest::Buffer:
                if (!m.buffer_index.count(c.dest.name))
                  unresolved(c.span,
                             "unknown buffer '" + c.dest.name + "'");
                c.buffer = c.dest.name;
                break;
              default: break;  // services and the environment have no buffer
            }
            break;
          }
          case MsgClause::SyncCall:
            check_message(c.call_send, c.span);
            check_message(c.call_reply, c.span);
            break;
        }
      }
      for (const auto& a : e.actions) {
        if ((a.kind == ActionStmt::Send || a.kind == ActionStmt::BulkSend) &&
            a.dest.kind == MessageDest::EntityTarget)
          ensure_inbox(a.dest.name, a.message);
        if (a.kind == ActionStmt::Send || a.kind == ActionStmt::BulkSend ||
            a.kind == ActionStmt::Copy)
          check_message(a.message, a.span);
      }
    }
  }

  // --- service model & recovery -------------------------------------------

  void lower_service() {
    if (!ast_.service) return;
    const auto& sv = *ast_.service;
    ServiceStateModel sm;
    sm.name = sv.name;
    sm.states = sv.states;
    sm.has_birth = sv.has_birth;
    sm.has_death = sv.has_death;
    sm.span = sv.span;
    int rule = 0;
    for (const auto& t : sv.transitions) {
      ModelTransition mt;
      mt.from = t.from;
      mt.to = t.to;
      mt.when = t.when;
      mt.condition = t.condition;
      mt.rule_id = ++rule;
      mt.span = t.span;
      for (const auto& a : t.actions) {
        EcaAct act;
        act.kind = a.kind;
        act.message = a.message;
        act.target_name = a.target;
        act.span = a.span;
        if (a.kind == AstEcaAction::Forward ||
            a.kind == AstEcaAction::Trigger) {
          auto it = res_.model.entity_index.find(a.target);
          if (it != res_.model.entity_index.end())
            act.target_entity = res_.model.resolve(it->second);
        }
        mt.actions.push_back(std::move(act));
      }
      sm.transitions.push_back(std::move(mt));
    }
    res_.model.service = std::move(sm);
  }

  void lower_recovery() {
    if (!ast_.recovery) return;
    auto& m = res_.model;
    for (const auto& e : ast_.recovery->entries) {
      auto it = m.entity_index.find(e.entity);
      if (it == m.entity_index.end()) {
        unresolved(e.span, "recovery entry for unknown entity '" + e.entity +
                               "'");
        continue;
      }
      int idx = m.resolve(it->second);
      if (m.recovery.count(idx)) {
        dup(e.span, "duplicate recovery entry for '" + e.entity + "'");
        continue;
      }
      ModelRecovery rec;
      for (const auto& c : e.ladder) {
        RecoveryRung rung;
        rung.threshold = c.threshold;
        rung.span = c.span;
        if (!c.target.empty()) {
          auto tit = m.entity_index.find(c.target);
          if (tit == m.entity_index.end()) {
            unresolved(c.span, "contingency targets unknown entity '" +
                                   c.target + "'");
            continue;
          }
          rung.target = m.resolve(tit->second);
        }
        rec.ladder.push_back(rung);
      }
      switch (e.rollback) {
        case AstRecoveryEntry::Unset:
        case AstRecoveryEntry::Null: break;
        case AstRecoveryEntry::Undo:
          rec.declared_undo = true;
          break;
        case AstRecoveryEntry::Compensate: {
          rec.committed = ModelRecovery::Compensate;
          auto cit = m.entity_index.find(e.compensation);
          if (cit == m.entity_index.end())
            unresolved(e.span, "compensation names unknown entity '" +
                                   e.compensation + "'");
          else
            rec.compensation = m.resolve(cit->second);
          break;
        }
      }
      m.recovery.emplace(idx, std::move(rec));
    }
  }

  // --- typing -------------------------------------------------------------

  TypeEnv base_env() {
    TypeEnv env;
    env.schemas = &res_.model.schemas;
    for (const auto& s : res_.model.stores)
      if (!s.schemas.empty()) env.stores[s.name] = s.schemas.front();
    for (const auto& msg : res_.model.messages)
      env.messages[msg.name] = msg.schema;
    for (const auto& e : res_.model.entities) env.entities.insert(e.name);
    if (res_.model.service) {
      for (const auto& s : res_.model.service->states)
        env.states.insert(s);
      env.states.insert("birth");
      env.states.insert("death");
    }
    return env;
  }

  void check(const ExprPtr& e, TypeEnv& env,
             std::optional<ValueKind> want = std::nullopt) {
    if (!e) return;
    auto t = typecheck(e, env, res_.diags);
    if (t && want && t->kind != *want)
      err("L003", e->span,
          std::string("expected ") + to_string(*want) + ", got " +
              to_string(t->kind));
  }

  void typecheck_entity(const ModelEntity& me, TypeEnv env) {
    auto& m = res_.model;
    // block-local variables of the enclosing chain
    std::vector<int> chain;
    for (int b = me.block; b >= 0;
         b = m.blocks[b].owner >= 0 ? m.entities[m.blocks[b].owner].block : -1)
      chain.push_back(b);
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
      for (const auto& [n, k] : m.blocks[*it].vars)
        env.vars[n] = ExprType{k, ""};
    check(me.pre, env, ValueKind::Bool);
    check(me.post, env, ValueKind::Bool);
    for (const auto& r : me.rules) check(r.predicate, env, ValueKind::Bool);
    for (const auto& t : me.terminators)
      check(t.condition, env, ValueKind::Bool);
    for (const auto& a : me.actions) {
      TypeEnv inner = env;
      if (a.kind == ActionStmt::Remove || a.kind == ActionStmt::Update ||
          a.kind == ActionStmt::BulkSend) {
        auto sit = inner.stores.find(a.store);
        if (sit == inner.stores.end()) {
          unresolved(a.span, "unknown store '" + a.store + "'");
          continue;
        }
        inner.vars[a.var] = ExprType{ValueKind::Record, sit->second};
      } else if (a.kind == ActionStmt::Add &&
                 !inner.stores.count(a.store)) {
        unresolved(a.span, "unknown store '" + a.store + "'");
        continue;
      } else if (a.kind == ActionStmt::Copy) {
        if (!inner.stores.count(a.store))
          unresolved(a.span, "unknown store '" + a.store + "'");
        continue;
      }
      check(a.where, inner, ValueKind::Bool);
      if (a.kind == ActionStmt::Set) {
        auto vit = env.vars.find(a.var);
        if (vit == env.vars.end()) {
          unresolved(a.span, "assignment to unknown variable '" + a.var +
                                 "'");
          continue;
        }
        check(a.fields.at(0).second, inner, vit->second.kind);
        continue;
      }
      for (const auto& [fname, fe] : a.fields) check(fe, inner);
    }
  }

  void typecheck_all() {
    auto& m = res_.model;
    TypeEnv base = base_env();
    for (const auto& e : m.entities) {
      if (e.alias_of >= 0) continue;
      typecheck_entity(e, base);
    }
    for (const auto& b : m.buffers) {
      if (!b.order_key) continue;
      TypeEnv env = base;
      if (!b.accepts.empty()) {
        auto mit = env.messages.find(b.accepts.front());
        if (mit != env.messages.end())
          env.vars["msg"] = ExprType{ValueKind::Record, mit->second};
      }
      check(b.order_key, env);
    }
    if (m.service) {
      for (const auto& t : m.service->transitions) {
        TypeEnv env = base;
        check(t.condition, env, ValueKind::Bool);
        if (t.when.expr) check(t.when.expr, env, ValueKind::Bool);
      }
    }
  }
};

}  // namespace detail

inline LowerResult lower(const SpecAst& ast) {
  return detail::Lowerer(ast).run();
}

}  // namespace btw
