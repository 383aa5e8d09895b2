#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "btw/model.hpp"
#include "btw/registry.hpp"

namespace btw {

namespace detail {

inline void collect_store_refs(const ExprPtr& e, std::set<std::string>& out) {
  if (!e) return;
  if (e->node == Expr::Quant || e->node == Expr::First) out.insert(e->name);
  collect_store_refs(e->lhs, out);
  collect_store_refs(e->rhs, out);
}

}  // namespace detail

struct ValidateOptions {
  bool strict_allocation = false;
};

inline std::vector<Diagnostic> validate(const ConceptRegistry& registry,
                                        WorkflowModel& model,
                                        ValidateOptions opts = {}) {
  std::vector<Diagnostic> out;
  auto add = [&](const char* code, Severity sev, const Span& sp,
                 const std::string& msg) {
    out.push_back({code, sev, sp, msg});
  };
  auto error = [&](const char* code, const Span& sp, const std::string& msg) {
    add(code, Severity::Error, sp, msg);
  };

  // V001: processes, decisions and synchronisers are disjoint name sets.
  {
    std::map<std::string, ConceptKind> seen;
    for (const auto& e : model.entities) {
      if (e.alias_of >= 0) continue;
      auto [it, fresh] = seen.emplace(e.name, e.kind);
      if (!fresh && it->second != e.kind)
        error("V001", e.span,
              "'" + e.name + "' is declared both as " +
                  to_string(it->second) + " and " + to_string(e.kind));
    }
  }

  // V002: every decomposition tree has a unique root. Top-level process
  // blocks are the roots; several may coexist (they share the service), but
  // each must be uniquely named and at least one must exist.
  if (model.roots.empty()) {
    error("V002", {}, "the model has no process block");
  } else {
    std::map<std::string, int> root_names;
    for (int r : model.roots) {
      if (++root_names[model.blocks[r].name] == 2)
        error("V002", {},
              "two top-level process blocks are both named '" +
                  model.blocks[r].name + "'");
    }
  }

  // V003: trigger targets live in the triggering entity's own block.
  for (const auto& e : model.entities) {
    for (const auto& t : e.triggers) {
      if (t.target < 0)
        error("V003", t.span,
              "'" + e.name + "' triggers '" + t.target_name +
                  "', which is not declared in the same decomposition");
      else if (t.target == e.index)
        error("V003", t.span, "'" + e.name + "' triggers itself");
    }
  }

  // V004: direct messaging stays within one decomposition.
  for (const auto& e : model.entities) {
    auto sibling = [&](const std::string& name) {
      for (int sib : model.blocks[e.block].entities)
        if (model.entities[sib].name == name) return true;
      return false;
    };
    for (const auto& c : e.messaging) {
      if (c.kind == MsgClause::AsyncOut &&
          c.dest.kind == MessageDest::EntityTarget && !sibling(c.dest.name))
        error("V004", c.span,
              "'" + e.name + "' sends '" + c.message + "' to '" +
                  c.dest.name + "', which is not in the same decomposition");
      if (c.kind == MsgClause::AsyncIn && !c.buffer.empty()) {
        // an explicit `from` naming an entity must also be a sibling
        const ModelBuffer* b = model.find_buffer(c.buffer);
        if (b && !b->hidden) continue;
        std::string src = c.buffer;
        std::string pre = inbox_name(e.name, c.message);
        if (src == pre) continue;  // unsourced receive, nothing to check
      }
    }
    for (const auto& a : e.actions) {
      if ((a.kind == ActionStmt::Send || a.kind == ActionStmt::BulkSend) &&
          a.dest.kind == MessageDest::EntityTarget && !sibling(a.dest.name))
        error("V004", a.span,
              "'" + e.name + "' sends '" + a.message + "' to '" +
                  a.dest.name + "', which is not in the same decomposition");
    }
  }

  // V005: a decision decomposes into decisions and synchronisers only.
  for (const auto& b : model.blocks) {
    if (b.owner < 0 || model.entities[b.owner].kind != ConceptKind::Decision)
      continue;
    for (int idx : b.entities) {
      const auto& m = model.entities[idx];
      ConceptKind k =
          m.alias_of >= 0 ? model.entities[model.resolve(idx)].kind : m.kind;
      if (k == ConceptKind::Process)
        error("V005", m.span,
              "decision '" + model.entities[b.owner].name +
                  "' contains process '" + m.name +
                  "'; decisions decompose into decisions and synchronisers");
    }
  }

  // V006: names are distinct within each decomposition level.
  for (const auto& b : model.blocks) {
    std::set<std::string> seen;
    for (int idx : b.entities) {
      const auto& m = model.entities[idx];
      if (m.alias_of >= 0) continue;  // references repeat a name on purpose
      if (!seen.insert(m.name).second)
        error("V006", m.span,
              "'" + m.name + "' is declared twice in the same decomposition");
    }
  }

  // V007: local variables and local stores use disjoint names.
  for (const auto& b : model.blocks) {
    std::set<std::string> uses(b.uses.begin(), b.uses.end());
    for (const auto& [n, k] : b.vars)
      if (uses.count(n))
        error("V007", {},
              "'" + n + "' names both a local variable and a local store in '" +
                  b.name + "'");
  }

  // V008: an entity touches only stores local to its enclosing bodies.
  for (const auto& e : model.entities) {
    if (e.alias_of >= 0) continue;
    std::set<std::string> visible;
    for (int b = e.block; b >= 0;
         b = model.blocks[b].owner >= 0
                 ? model.entities[model.blocks[b].owner].block
                 : -1)
      visible.insert(model.blocks[b].uses.begin(),
                     model.blocks[b].uses.end());
    std::set<std::string> touched;
    detail::collect_store_refs(e.pre, touched);
    detail::collect_store_refs(e.post, touched);
    for (const auto& r : e.rules)
      detail::collect_store_refs(r.predicate, touched);
    for (const auto& t : e.terminators)
      detail::collect_store_refs(t.condition, touched);
    for (const auto& a : e.actions) {
      if (!a.store.empty()) touched.insert(a.store);
      detail::collect_store_refs(a.where, touched);
      for (const auto& [n, fe] : a.fields)
        detail::collect_store_refs(fe, touched);
    }
    for (const auto& s : touched) {
      if (!model.store_index.count(s)) continue;  // lowering reported it
      if (!visible.count(s))
        error("V008", e.span,
              "'" + e.name + "' uses store '" + s +
                  "', which no enclosing decomposition declares with 'uses'");
    }
  }

  // V009: buffers carry only the message types allocated to them.
  for (const auto& e : model.entities) {
    auto check_alloc = [&](const std::string& buffer,
                           const std::string& message, const Span& sp) {
      const ModelBuffer* b = model.find_buffer(buffer);
      if (!b || b->accepts.empty()) return;
      for (const auto& m : b->accepts)
        if (m == message) return;
      error("V009", sp,
            "buffer '" + buffer + "' does not accept message type '" +
                message + "'");
    };
    for (const auto& c : e.messaging)
      if (!c.buffer.empty()) check_alloc(c.buffer, c.message, c.span);
    for (const auto& a : e.actions)
      if ((a.kind == ActionStmt::Send || a.kind == ActionStmt::BulkSend) &&
          a.dest.kind == MessageDest::Buffer)
        check_alloc(a.dest.name, a.message, a.span);
  }

  // V010: remote messaging endpoints are declared services.
  {
    std::set<std::string> services(model.services.begin(),
                                   model.services.end());
    for (const auto& e : model.entities) {
      for (const auto& c : e.messaging) {
        if (c.kind == MsgClause::SyncCall && !services.count(c.service))
          error("V010", c.span,
                "'" + e.name + "' calls '" + c.service +
                    "', which is not a declared service");
        if (c.kind == MsgClause::AsyncOut &&
            (c.dest.kind == MessageDest::RemoteService ||
             c.dest.kind == MessageDest::LocalService) &&
            !services.count(c.dest.name))
          error("V010", c.span,
                "'" + e.name + "' sends to '" + c.dest.name +
                    "', which is not a declared service");
      }
      for (const auto& a : e.actions)
        if ((a.kind == ActionStmt::Send || a.kind == ActionStmt::BulkSend) &&
            (a.dest.kind == MessageDest::RemoteService ||
             a.dest.kind == MessageDest::LocalService) &&
            !services.count(a.dest.name))
          error("V010", a.span,
                "'" + e.name + "' sends to '" + a.dest.name +
                    "', which is not a declared service");
    }
  }

  // V011: synchronous exchanges open with the request, never the reply.
  for (const auto& e : model.entities)
    for (const auto& c : e.messaging)
      if (c.kind == MsgClause::SyncCall && c.call_send.empty())
        error("V011", c.span,
              "'" + e.name + "' calls '" + c.service +
                  "' expecting a reply without sending a request first");

  // V012 (warning): every declared service state is reachable from birth.
  if (model.service) {
    const auto& sv = *model.service;
    std::set<std::string> reach{"birth"};
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& t : sv.transitions)
        if (reach.count(t.from) && reach.insert(t.to).second) grew = true;
    }
    for (const auto& s : sv.states)
      if (!reach.count(s))
        add("V012", Severity::Warning, sv.span,
            "service state '" + s + "' is unreachable from birth");
    if (sv.has_death && !reach.count("death"))
      add("V012", Severity::Warning, sv.span,
          "the death state is unreachable from birth");
    // death must also be reachable from every reachable state
    if (sv.has_death) {
      for (const auto& s : sv.states) {
        if (!reach.count(s)) continue;
        std::set<std::string> fwd{s};
        bool g = true;
        while (g) {
          g = false;
          for (const auto& t : sv.transitions)
            if (fwd.count(t.from) && fwd.insert(t.to).second) g = true;
        }
        if (!fwd.count("death"))
          add("V012", Severity::Warning, sv.span,
              "the death state is unreachable from '" + s + "'");
      }
    }
  }

  // V013: ECA rules resolve against the model.
  if (model.service) {
    const auto& sv = *model.service;
    std::set<std::string> states(sv.states.begin(), sv.states.end());
    if (sv.has_birth) states.insert("birth");
    if (sv.has_death) states.insert("death");
    for (const auto& t : sv.transitions) {
      if (!states.count(t.from))
        error("V013", t.span, "transition from undeclared state '" + t.from +
                                  "'");
      if (!states.count(t.to))
        error("V013", t.span,
              "transition to undeclared state '" + t.to + "'");
      if (t.from == "death")
        error("V013", t.span, "no transition may leave the death state");
      if (t.to == "birth")
        error("V013", t.span, "no transition may re-enter the birth state");
      switch (t.when.kind) {
        case AstEventSpec::MsgFrom:
        case AstEventSpec::MsgTo:
          if (!model.message_index.count(t.when.name))
            error("V013", t.span,
                  "event names unknown message type '" + t.when.name + "'");
          break;
        case AstEventSpec::DecisionEnd: {
          const ModelEntity* d = model.find_entity(t.when.name);
          if (!d || model.entities[model.resolve(d->index)].kind !=
                        ConceptKind::Decision)
            error("V013", t.span,
                  "event names unknown decision '" + t.when.name + "'");
          break;
        }
        case AstEventSpec::ProcessStart:
        case AstEventSpec::ProcessEnd:
        case AstEventSpec::ProcessStartFailed:
          if (!model.find_entity(t.when.name))
            error("V013", t.span,
                  "event names unknown entity '" + t.when.name + "'");
          break;
        default: break;
      }
      for (const auto& a : t.actions) {
        if ((a.kind == AstEcaAction::Forward ||
             a.kind == AstEcaAction::Trigger) &&
            a.target_entity < 0)
          error("V013", a.span,
                "rule targets unknown entity '" + a.target_name + "'");
        if (a.kind == AstEcaAction::Forward &&
            !model.message_index.count(a.message))
          error("V013", a.span,
                "rule forwards unknown message type '" + a.message + "'");
        if (a.kind == AstEcaAction::Send) {
          if (!model.message_index.count(a.message))
            error("V013", a.span,
                  "rule sends unknown message type '" + a.message + "'");
          bool svc = false;
          for (const auto& s : model.services) svc |= s == a.target_name;
          if (!svc)
            error("V013", a.span,
                  "rule sends to '" + a.target_name +
                      "', which is not a declared service");
        }
      }
    }
  }

  // V014: recovery ladders are well-formed and only processes roll back.
  for (const auto& [idx, rec] : model.recovery) {
    const auto& e = model.entities[idx];
    if (e.kind == ConceptKind::Decision &&
        (rec.declared_undo || rec.committed == ModelRecovery::Compensate))
      error("V014", e.span,
            "decision '" + e.name + "' declares a rollback; decisions do not"
            " roll back");
    int prev = 0;
    bool saw_unbounded = false;
    for (const auto& rung : rec.ladder) {
      if (saw_unbounded)
        error("V014", rung.span,
              "'" + e.name +
                  "': no contingency may follow an unbounded one");
      if (!rung.threshold) {
        saw_unbounded = true;
        continue;
      }
      if (*rung.threshold <= prev)
        error("V014", rung.span,
              "'" + e.name + "': contingency thresholds must increase");
      prev = *rung.threshold;
      if (rung.target >= 0 &&
          model.entities[rung.target].kind == ConceptKind::Decision)
        error("V014", rung.span,
              "'" + e.name + "': contingency target '" +
                  model.entities[rung.target].name + "' is a decision");
    }
    if (rec.compensation >= 0 &&
        model.entities[rec.compensation].kind != ConceptKind::Process)
      error("V014", e.span,
            "'" + e.name + "': compensation '" +
                model.entities[rec.compensation].name +
                "' must be a process");
    if (rec.compensation == idx)
      error("V014", e.span,
            "'" + e.name + "' compensates itself; compensation must name a"
            " different process");
  }

  // V015: the allocation axiom over actors, roles, processes and units.
  for (auto d : registry.check_allocation_axiom(opts.strict_allocation))
    out.push_back(std::move(d));

  // V016: the organisational subOf graph is acyclic.
  if (!registry.suborg_acyclic())
    error("V016", {}, "the org unit subOf graph contains a cycle");

  // V017: a store's schemas are uniformly material or uniformly not.
  for (const auto& s : model.stores) {
    bool first = true, material = false, mixed = false;
    for (const auto& sn : s.schemas) {
      auto it = model.schemas.find(sn);
      if (it == model.schemas.end()) continue;
      if (first) {
        material = it->second.material;
        first = false;
      } else if (it->second.material != material) {
        mixed = true;
      }
    }
    if (mixed)
      error("V017", s.span,
            "store '" + s.name +
                "' mixes material and immaterial schemas");
  }

  // V018: only processes may be exclusive.
  for (const auto& e : model.entities)
    if (e.exclusive && e.kind != ConceptKind::Process)
      error("V018", e.span,
            std::string(to_string(e.kind)) + " '" + e.name +
                "' is marked exclusive; only processes may be");

  model.validated = !has_errors(out);
  return out;
}

// ---------------------------------------------------------------------------
// explain: one entry per validator code.

struct Explanation {
  std::string code;
  std::string rule;     // what must hold
  std::string anchor;   // the formal statement it enforces
  std::string example;  // a minimal violating sketch
};

class UnknownCode : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Explanation explain(const std::string& code) {
  static const std::map<std::string, Explanation> table = {
      {"V001",
       {"V001",
        "Every name denotes exactly one of: process, decision, synchroniser.",
        "PEntities = Processes (+) Decisions (+) Synchronisers (disjoint)",
        "process \"X\" in one block and decision \"X\" in another"}},
      {"V002",
       {"V002",
        "Every decomposition tree has a unique, uniquely named root process"
        " block, and at least one exists.",
        "the decomposition forest has uniquely named roots",
        "two top-level `process \"X\" { ... }` blocks sharing one name"}},
      {"V003",
       {"V003",
        "A trigger's target is declared in the same decomposition as the"
        " triggering entity.",
        "Trig subset-of PEntities x PEntities, level-local",
        "triggers \"Elsewhere\" where \"Elsewhere\" lives in another block"}},
      {"V004",
       {"V004",
        "Direct entity-to-entity messaging stays within one decomposition.",
        "message flows respect the decomposition boundary",
        "send \"M\" to entity \"X\" where \"X\" is in another block"}},
      {"V005",
       {"V005",
        "A decision decomposes into decisions and synchronisers only.",
        "Sup restricted to Decisions yields no Processes",
        "decision \"D\" { process \"P\" { } }"}},
      {"V006",
       {"V006", "Names are distinct within each decomposition level.",
        "entity naming is injective per level",
        "two entities named \"Same\" inside one block"}},
      {"V007",
       {"V007", "Local variables and local stores never share a name.",
        "Locvar and Locse are disjoint",
        "uses \"x\" alongside var x: int"}},
      {"V008",
       {"V008",
        "An entity reads and writes only stores declared `uses` by an"
        " enclosing decomposition.",
        "Consume(p) and Produce(p) subset-of Locse(Sup(p))",
        "action { add \"S\" {...} } with no enclosing uses \"S\""}},
      {"V009",
       {"V009",
        "A buffer carries only the message types allocated to it.",
        "MesAlloc governs buffer membership",
        "send \"M\" to buffer \"B\" when B accepts only \"N\""}},
      {"V010",
       {"V010", "Remote messaging endpoints are declared services.",
        "remote interaction is mediated by services",
        "call \"Nowhere\" send ... reply ... with no service \"Nowhere\""}},
      {"V011",
       {"V011",
        "A synchronous exchange opens with the request, never the reply.",
        "the sync protocol is send-then-receive",
        "call \"Svc\" reply \"R\" with no send clause"}},
      {"V012",
       {"V012",
        "Every declared service state is reachable from birth (warning).",
        "the service lifecycle graph is connected from birth",
        "state \"Orphan\" with no transition into it"}},
      {"V013",
       {"V013",
        "ECA rules name existing states, entities, message types and"
        " services.",
        "event-condition-action rules are closed over the model",
        "transition \"A\" -> \"B\" where \"A\" is never declared"}},
      {"V014",
       {"V014",
        "Recovery ladders increase strictly, end at any unbounded rung, and"
        " only processes roll back or compensate.",
        "contingency thresholds are monotone; decisions do not roll back",
        "redo contingency 5 -> self, contingency 3 -> self"}},
      {"V015",
       {"V015",
        "An actor assigned a role that undertakes a process located in a"
        " unit must be structured in that unit (or a sub-unit).",
        "Assign o Undertake o Structure subset-of Structure",
        "actor in \"North\" undertaking work located in \"South\""}},
      {"V016",
       {"V016", "Org units form an acyclic subOf hierarchy.",
        "the subOf relation is a forest",
        "org \"A\" in \"B\" together with org \"B\" in \"A\""}},
      {"V017",
       {"V017",
        "A store's schemas are uniformly material or uniformly immaterial.",
        "materiality is a property of the store",
        "store over one material and one immaterial schema"}},
      {"V018",
       {"V018", "Only processes may be marked exclusive.",
        "exclusivity quiesces processing; decisions and synchronisers"
        " cannot",
        "decision \"D\" { exclusive }"}},
  };
  auto it = table.find(code);
  if (it == table.end()) throw UnknownCode("unknown code '" + code + "'");
  return it->second;
}

}  // namespace btw
