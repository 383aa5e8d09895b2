#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "btw/diag.hpp"

namespace btw {

enum class ConceptKind {
  OrgUnit,
  Actor,
  Role,
  Process,
  Decision,
  Synchroniser,
  Service,
  ObjectType,
  ObjectStore,
  MessageType,
  MessageBuffer,
};

inline const char* to_string(ConceptKind k) {
  switch (k) {
    case ConceptKind::OrgUnit: return "org_unit";
    case ConceptKind::Actor: return "actor";
    case ConceptKind::Role: return "role";
    case ConceptKind::Process: return "process";
    case ConceptKind::Decision: return "decision";
    case ConceptKind::Synchroniser: return "synchroniser";
    case ConceptKind::Service: return "service";
    case ConceptKind::ObjectType: return "object_type";
    case ConceptKind::ObjectStore: return "object_store";
    case ConceptKind::MessageType: return "message_type";
    case ConceptKind::MessageBuffer: return "message_buffer";
  }
  return "?";
}

enum class ScopeTag { Domain, Environment };

// Only services and message types may live in the environment; everything
// else describes the domain's own processing.
inline bool scope_permitted(ConceptKind kind, ScopeTag scope) {
  if (scope == ScopeTag::Domain) return true;
  return kind == ConceptKind::Service || kind == ConceptKind::MessageType;
}

struct ConceptId {
  std::uint32_t id = 0;
  ConceptKind kind = ConceptKind::OrgUnit;

  bool operator==(const ConceptId&) const = default;
  auto operator<=>(const ConceptId&) const = default;
};

enum class RelationName { Structure, SubOf, Assign, Undertake, MesAlloc };

inline std::optional<RelationName> relation_from_name(const std::string& s) {
  if (s == "structure") return RelationName::Structure;
  if (s == "subOf") return RelationName::SubOf;
  if (s == "assign") return RelationName::Assign;
  if (s == "undertake") return RelationName::Undertake;
  if (s == "mesAlloc") return RelationName::MesAlloc;
  return std::nullopt;
}

class RegistryError : public std::runtime_error {
 public:
  enum Code { DuplicateName, IllegalScope, KindMismatch, CycleIntroduced };

  RegistryError(Code code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

enum class BufferProtocol { Fifo, Lifo, Random, Predicate };

inline const char* to_string(BufferProtocol p) {
  switch (p) {
    case BufferProtocol::Fifo: return "fifo";
    case BufferProtocol::Lifo: return "lifo";
    case BufferProtocol::Random: return "random";
    case BufferProtocol::Predicate: return "predicate";
  }
  return "?";
}

// The business-scope registry: every named concept, the relations over them,
// and the domain/environment partition.
class ConceptRegistry {
 public:
  struct Entry {
    ConceptId id;
    std::string name;
    ScopeTag scope = ScopeTag::Domain;
  };

  ConceptId register_concept(ConceptKind kind, const std::string& name,
                             ScopeTag scope) {
    if (name.empty())
      throw RegistryError(RegistryError::IllegalScope, "empty concept name");
    if (!scope_permitted(kind, scope))
      throw RegistryError(
          RegistryError::IllegalScope,
          std::string(to_string(kind)) + " '" + name +
              "' may not be declared in the business environment");
    if (lookup(kind, name))
      throw RegistryError(RegistryError::DuplicateName,
                          std::string(to_string(kind)) + " '" + name +
                              "' is already registered");
    ConceptId id{next_id_++, kind};
    entries_.push_back({id, name, scope});
    return id;
  }

  std::optional<ConceptId> lookup(ConceptKind kind,
                                  const std::string& name) const {
    for (const auto& e : entries_)
      if (e.id.kind == kind && e.name == name) return e.id;
    return std::nullopt;
  }

  const Entry* find(ConceptId id) const {
    for (const auto& e : entries_)
      if (e.id == id) return &e;
    return nullptr;
  }

  const std::string& name_of(ConceptId id) const {
    const Entry* e = find(id);
    static const std::string unknown = "?";
    return e ? e->name : unknown;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // --- relations ---------------------------------------------------------

  void add_relation(RelationName rel, ConceptId left, ConceptId right) {
    check_signature(rel, left, right);
    if (rel == RelationName::SubOf && introduces_cycle(left, right))
      throw RegistryError(RegistryError::CycleIntroduced,
                          "subOf(" + name_of(left) + ", " + name_of(right) +
                              ") would make the org graph cyclic");
    add_relation_unchecked(rel, left, right);
  }

  // Used by lowering, which defers acyclicity to validator code V016.
  void add_relation_unchecked(RelationName rel, ConceptId left,
                              ConceptId right) {
    auto& r = rel_(rel);
    auto p = std::make_pair(left, right);
    if (std::find(r.begin(), r.end(), p) == r.end()) r.push_back(p);
  }

  const std::vector<std::pair<ConceptId, ConceptId>>& relation(
      RelationName rel) const {
    return const_cast<ConceptRegistry*>(this)->rel_(rel);
  }

  void set_protocol(ConceptId buffer, BufferProtocol proto) {
    protocols_[buffer] = proto;
  }
  std::optional<BufferProtocol> protocol(ConceptId buffer) const {
    auto it = protocols_.find(buffer);
    if (it == protocols_.end()) return std::nullopt;
    return it->second;
  }

  void set_schema(ConceptId id, std::vector<std::string> names) {
    schema_names_[id] = std::move(names);
  }
  std::vector<std::string> schema_names(ConceptId id) const {
    auto it = schema_names_.find(id);
    return it == schema_names_.end() ? std::vector<std::string>{} : it->second;
  }

  void set_fragment(ConceptId store, const std::string& fragment) {
    fragments_[store] = fragment;
  }
  std::optional<std::string> fragment(ConceptId store) const {
    auto it = fragments_.find(store);
    if (it == fragments_.end()) return std::nullopt;
    return it->second;
  }

  // --- axioms -------------------------------------------------------------

  bool suborg_reachable(ConceptId from, ConceptId to) const {
    if (from == to) return true;
    std::set<ConceptId> seen{from};
    std::vector<ConceptId> work{from};
    while (!work.empty()) {
      ConceptId u = work.back();
      work.pop_back();
      for (const auto& [child, parent] : relation(RelationName::SubOf)) {
        if (parent == u && seen.insert(child).second) {
          if (child == to) return true;
          work.push_back(child);
        }
      }
    }
    return false;
  }

  bool suborg_acyclic() const {
    // DFS colouring over subOf edges (child -> parent).
    std::map<ConceptId, int> colour;
    std::vector<std::pair<ConceptId, ConceptId>> edges =
        relation(RelationName::SubOf);
    std::function<bool(ConceptId)> visit = [&](ConceptId u) {
      colour[u] = 1;
      for (const auto& [child, parent] : edges) {
        if (child != u) continue;
        int c = colour.count(parent) ? colour[parent] : 0;
        if (c == 1) return false;
        if (c == 0 && !visit(parent)) return false;
      }
      colour[u] = 2;
      return true;
    };
    for (const auto& [child, parent] : edges) {
      if (!colour.count(child) && !visit(child)) return false;
    }
    return true;
  }

  // Assign ∘ Undertake ∘ Structure ⊆ Structure: every actor assigned to a
  // role that undertakes a process located in org unit u must itself be
  // structured in u (strict mode) or in u or one of u's subOf descendants
  // (transitive mode, the default).
  std::vector<Diagnostic> check_allocation_axiom(bool strict = false) const {
    std::vector<Diagnostic> out;
    for (const auto& [actor, role] : relation(RelationName::Assign)) {
      for (const auto& [r2, process] : relation(RelationName::Undertake)) {
        if (r2 != role) continue;
        for (const auto& [unit, c] : relation(RelationName::Structure)) {
          if (c != process) continue;
          if (!actor_located(actor, unit, strict)) {
            Diagnostic d;
            d.code = "V015";
            d.severity = Severity::Error;
            d.subject = name_of(actor);
            d.anchor = "Assign o Undertake o Structure subset-of Structure";
            d.message = "actor '" + name_of(actor) + "' (role '" +
                        name_of(role) + "') undertakes '" + name_of(process) +
                        "' located in '" + name_of(unit) +
                        "' but is not structured there";
            out.push_back(std::move(d));
          }
        }
      }
    }
    return out;
  }

  std::vector<ConceptId> scope_projection(ScopeTag tag) const {
    std::vector<ConceptId> out;
    for (const auto& e : entries_)
      if (e.scope == tag) out.push_back(e.id);
    return out;
  }

 private:
  bool actor_located(ConceptId actor, ConceptId unit, bool strict) const {
    for (const auto& [u, c] : relation(RelationName::Structure)) {
      if (c != actor) continue;
      if (u == unit) return true;
      if (!strict && suborg_reachable(unit, u)) return true;
    }
    return false;
  }

  bool introduces_cycle(ConceptId child, ConceptId parent) const {
    // A cycle appears iff child is already an ancestor of parent.
    if (child == parent) return true;
    std::set<ConceptId> seen{parent};
    std::vector<ConceptId> work{parent};
    while (!work.empty()) {
      ConceptId u = work.back();
      work.pop_back();
      for (const auto& [c, p] : relation(RelationName::SubOf)) {
        if (c == u && seen.insert(p).second) {
          if (p == child) return true;
          work.push_back(p);
        }
      }
    }
    return false;
  }

  void check_signature(RelationName rel, ConceptId left, ConceptId right) {
    auto expect = [&](ConceptKind lk, ConceptKind rk) {
      if (left.kind != lk || right.kind != rk)
        throw RegistryError(RegistryError::KindMismatch,
                            "relation endpoints have the wrong kinds: (" +
                                std::string(to_string(left.kind)) + ", " +
                                to_string(right.kind) + ")");
    };
    switch (rel) {
      case RelationName::Structure:
        if (left.kind != ConceptKind::OrgUnit)
          throw RegistryError(RegistryError::KindMismatch,
                              "structure left endpoint must be an org unit");
        break;
      case RelationName::SubOf:
        expect(ConceptKind::OrgUnit, ConceptKind::OrgUnit);
        break;
      case RelationName::Assign:
        expect(ConceptKind::Actor, ConceptKind::Role);
        break;
      case RelationName::Undertake:
        if (left.kind != ConceptKind::Role ||
            (right.kind != ConceptKind::Process &&
             right.kind != ConceptKind::Decision))
          throw RegistryError(RegistryError::KindMismatch,
                              "undertake relates roles to processes");
        break;
      case RelationName::MesAlloc:
        expect(ConceptKind::MessageBuffer, ConceptKind::MessageType);
        break;
    }
  }

  std::vector<std::pair<ConceptId, ConceptId>>& rel_(RelationName r) {
    switch (r) {
      case RelationName::Structure: return structure_;
      case RelationName::SubOf: return sub_of_;
      case RelationName::Assign: return assign_;
      case RelationName::Undertake: return undertake_;
      case RelationName::MesAlloc: return mes_alloc_;
    }
    return structure_;
  }

  std::uint32_t next_id_ = 1;
  std::vector<Entry> entries_;
  std::vector<std::pair<ConceptId, ConceptId>> structure_, sub_of_, assign_,
      undertake_, mes_alloc_;
  std::map<ConceptId, BufferProtocol> protocols_;
  std::map<ConceptId, std::vector<std::string>> schema_names_;
  std::map<ConceptId, std::string> fragments_;
};

}  // namespace btw
