#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <string>
#include <vector>

#include "btw/registry.hpp"

using btw::ConceptId;
using btw::ConceptKind;
using btw::ConceptRegistry;
using btw::RelationName;
using btw::ScopeTag;

TEST_CASE("duplicate names within a kind are rejected, across kinds allowed") {
  ConceptRegistry reg;
  reg.register_concept(ConceptKind::OrgUnit, "Alpha", ScopeTag::Domain);
  CHECK_THROWS_AS(
      reg.register_concept(ConceptKind::OrgUnit, "Alpha", ScopeTag::Domain),
      btw::RegistryError);
  // The same name can identify a different kind of concept.
  CHECK_NOTHROW(
      reg.register_concept(ConceptKind::Role, "Alpha", ScopeTag::Domain));
}

TEST_CASE("environment scope only admits services and message types") {
  ConceptRegistry reg;
  CHECK_NOTHROW(reg.register_concept(ConceptKind::Service, "S",
                                     ScopeTag::Environment));
  CHECK_NOTHROW(reg.register_concept(ConceptKind::MessageType, "M",
                                     ScopeTag::Environment));
  for (auto kind : {ConceptKind::OrgUnit, ConceptKind::Role,
                    ConceptKind::Actor, ConceptKind::Process,
                    ConceptKind::ObjectStore}) {
    CHECK_THROWS_AS(reg.register_concept(kind, "X", ScopeTag::Environment),
                    btw::RegistryError);
  }
}

TEST_CASE("relation signatures are enforced") {
  ConceptRegistry reg;
  auto unit = reg.register_concept(ConceptKind::OrgUnit, "U", ScopeTag::Domain);
  auto actor = reg.register_concept(ConceptKind::Actor, "A", ScopeTag::Domain);
  auto role = reg.register_concept(ConceptKind::Role, "R", ScopeTag::Domain);
  CHECK_NOTHROW(reg.add_relation(RelationName::Structure, unit, actor));
  CHECK_NOTHROW(reg.add_relation(RelationName::Assign, actor, role));
  // Swapped operands violate the signature.
  CHECK_THROWS_AS(reg.add_relation(RelationName::Assign, role, actor),
                  btw::RegistryError);
  CHECK_THROWS_AS(reg.add_relation(RelationName::SubOf, actor, unit),
                  btw::RegistryError);
}

TEST_CASE("subOf cycle detection on checked inserts") {
  ConceptRegistry reg;
  auto a = reg.register_concept(ConceptKind::OrgUnit, "A", ScopeTag::Domain);
  auto b = reg.register_concept(ConceptKind::OrgUnit, "B", ScopeTag::Domain);
  auto c = reg.register_concept(ConceptKind::OrgUnit, "C", ScopeTag::Domain);
  reg.add_relation(RelationName::SubOf, a, b);
  reg.add_relation(RelationName::SubOf, b, c);
  CHECK(reg.suborg_acyclic());
  CHECK_THROWS_AS(reg.add_relation(RelationName::SubOf, c, a),
                  btw::RegistryError);
  CHECK_THROWS_AS(reg.add_relation(RelationName::SubOf, a, a),
                  btw::RegistryError);
  // The unchecked insert used by model lowering lets the validator flag it.
  reg.add_relation_unchecked(RelationName::SubOf, c, a);
  CHECK(!reg.suborg_acyclic());
}

TEST_CASE("scope projection partitions the registry") {
  ConceptRegistry reg;
  reg.register_concept(ConceptKind::OrgUnit, "U", ScopeTag::Domain);
  reg.register_concept(ConceptKind::Service, "S", ScopeTag::Environment);
  reg.register_concept(ConceptKind::MessageType, "M", ScopeTag::Environment);
  CHECK(reg.scope_projection(ScopeTag::Domain).size() == 1);
  CHECK(reg.scope_projection(ScopeTag::Environment).size() == 2);
}

namespace {

// A randomly generated org landscape with explicit edge lists, used to
// brute-force the allocation axiom independently of the registry's own
// traversal.
struct World {
  std::vector<ConceptId> units, actors, roles, procs;
  std::vector<std::pair<int, int>> sub;        // child unit , parent unit
  std::vector<std::pair<int, int>> structure_a;  // unit , actor
  std::vector<std::pair<int, int>> structure_p;  // unit , process
  std::vector<std::pair<int, int>> assign;     // actor , role
  std::vector<std::pair<int, int>> undertake;  // role , process
};

World random_world(std::mt19937_64& gen) {
  World w;
  ConceptRegistry tmp;  // ids only need to be distinct; reuse one registry
  auto pick = [&](int n) { return int(gen() % std::uint64_t(n)); };
  int nu = 2 + pick(6), na = 1 + pick(5), nr = 1 + pick(4), np = 1 + pick(5);
  for (int i = 0; i < nu; ++i)
    w.units.push_back(tmp.register_concept(ConceptKind::OrgUnit,
                                           "U" + std::to_string(i),
                                           ScopeTag::Domain));
  for (int i = 0; i < na; ++i)
    w.actors.push_back(tmp.register_concept(
        ConceptKind::Actor, "A" + std::to_string(i), ScopeTag::Domain));
  for (int i = 0; i < nr; ++i)
    w.roles.push_back(tmp.register_concept(ConceptKind::Role,
                                           "R" + std::to_string(i),
                                           ScopeTag::Domain));
  for (int i = 0; i < np; ++i)
    w.procs.push_back(tmp.register_concept(ConceptKind::Process,
                                           "P" + std::to_string(i),
                                           ScopeTag::Domain));
  // Acyclic subOf: each unit may pick a parent with a lower index.
  for (int i = 1; i < nu; ++i)
    if (gen() % 2 == 0) w.sub.emplace_back(i, pick(i));
  for (int i = 0; i < na; ++i)
    if (gen() % 4 != 0) w.structure_a.emplace_back(pick(nu), i);
  for (int i = 0; i < np; ++i) w.structure_p.emplace_back(pick(nu), i);
  for (int i = 0; i < na; ++i)
    for (int r = 0; r < nr; ++r)
      if (gen() % 3 == 0) w.assign.emplace_back(i, r);
  for (int r = 0; r < nr; ++r)
    for (int p = 0; p < np; ++p)
      if (gen() % 3 == 0) w.undertake.emplace_back(r, p);
  return w;
}

ConceptRegistry build_registry(const World& w) {
  ConceptRegistry reg;
  std::vector<ConceptId> units, actors, roles, procs;
  for (std::size_t i = 0; i < w.units.size(); ++i)
    units.push_back(reg.register_concept(
        ConceptKind::OrgUnit, "U" + std::to_string(i), ScopeTag::Domain));
  for (std::size_t i = 0; i < w.actors.size(); ++i)
    actors.push_back(reg.register_concept(
        ConceptKind::Actor, "A" + std::to_string(i), ScopeTag::Domain));
  for (std::size_t i = 0; i < w.roles.size(); ++i)
    roles.push_back(reg.register_concept(
        ConceptKind::Role, "R" + std::to_string(i), ScopeTag::Domain));
  for (std::size_t i = 0; i < w.procs.size(); ++i)
    procs.push_back(reg.register_concept(
        ConceptKind::Process, "P" + std::to_string(i), ScopeTag::Domain));
  for (auto [c, p] : w.sub)
    reg.add_relation(RelationName::SubOf, units[size_t(c)], units[size_t(p)]);
  for (auto [u, a] : w.structure_a)
    reg.add_relation(RelationName::Structure, units[size_t(u)],
                     actors[size_t(a)]);
  for (auto [u, p] : w.structure_p)
    reg.add_relation(RelationName::Structure, units[size_t(u)],
                     procs[size_t(p)]);
  for (auto [a, r] : w.assign)
    reg.add_relation(RelationName::Assign, actors[size_t(a)],
                     roles[size_t(r)]);
  for (auto [r, p] : w.undertake)
    reg.add_relation(RelationName::Undertake, roles[size_t(r)],
                     procs[size_t(p)]);
  return reg;
}

// Brute force: enumerate every (actor, role, process, unit) chain and decide
// location by explicit descendant enumeration over the subOf edges.
std::set<std::string> oracle_violations(const World& w, bool strict) {
  int nu = int(w.units.size());
  // descendants[u] = all units reachable downward from u (children-of chains).
  std::vector<std::set<int>> desc;
  desc.resize(size_t(nu));
  for (int u = 0; u < nu; ++u) {
    desc[size_t(u)].insert(u);
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto [c, p] : w.sub)
        if (desc[size_t(u)].count(p) && desc[size_t(u)].insert(c).second)
          changed = true;
    }
  }
  std::set<std::string> out;
  for (auto [actor, role] : w.assign)
    for (auto [r2, proc] : w.undertake) {
      if (r2 != role) continue;
      for (auto [unit, p2] : w.structure_p) {
        if (p2 != proc) continue;
        bool located = false;
        for (auto [u, a2] : w.structure_a) {
          if (a2 != actor) continue;
          if (u == unit || (!strict && desc[size_t(unit)].count(u)))
            located = true;
        }
        if (!located)
          out.insert("A" + std::to_string(actor) + "/R" +
                     std::to_string(role) + "/P" + std::to_string(proc) +
                     "/U" + std::to_string(unit));
      }
    }
  return out;
}

std::set<std::string> registry_violations(const ConceptRegistry& reg,
                                          bool strict) {
  std::set<std::string> out;
  for (const auto& d : reg.check_allocation_axiom(strict)) {
    // Reconstruct the chain key from the message, which names all four
    // concepts in a fixed order.
    std::string key = d.subject;
    auto grab = [&](const char* pre, const char* post) {
      auto b = d.message.find(pre);
      REQUIRE(b != std::string::npos);
      b += std::string(pre).size();
      auto e = d.message.find(post, b);
      return d.message.substr(b, e - b);
    };
    out.insert(d.subject + "/" + grab("(role '", "'") + "/" +
               grab("undertakes '", "'") + "/" + grab("located in '", "'"));
  }
  return out;
}

}  // namespace

TEST_CASE("allocation axiom matches a brute-force oracle on random worlds") {
  std::mt19937_64 gen(2024);
  int total_chains = 0, total_violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    World w = random_world(gen);
    ConceptRegistry reg = build_registry(w);
    for (bool strict : {false, true}) {
      auto want = oracle_violations(w, strict);
      auto got = registry_violations(reg, strict);
      CHECK(got == want);
      total_violations += int(want.size());
    }
    total_chains += int(w.assign.size() * w.undertake.size());
  }
  // The corpus must actually exercise both outcomes.
  CHECK(total_chains > 0);
  CHECK(total_violations > 0);
}

TEST_CASE("transitive location accepts descendants, strict does not") {
  ConceptRegistry reg;
  auto dept = reg.register_concept(ConceptKind::OrgUnit, "Dept",
                                   ScopeTag::Domain);
  auto branch = reg.register_concept(ConceptKind::OrgUnit, "Branch",
                                     ScopeTag::Domain);
  auto actor = reg.register_concept(ConceptKind::Actor, "A", ScopeTag::Domain);
  auto role = reg.register_concept(ConceptKind::Role, "R", ScopeTag::Domain);
  auto proc = reg.register_concept(ConceptKind::Process, "P",
                                   ScopeTag::Domain);
  reg.add_relation(RelationName::SubOf, branch, dept);
  reg.add_relation(RelationName::Structure, branch, actor);
  reg.add_relation(RelationName::Structure, dept, proc);
  reg.add_relation(RelationName::Assign, actor, role);
  reg.add_relation(RelationName::Undertake, role, proc);
  // Process sits in Dept; the actor sits in Branch, a sub-unit of Dept.
  CHECK(reg.check_allocation_axiom(false).empty());
  CHECK(reg.check_allocation_axiom(true).size() == 1);
}
