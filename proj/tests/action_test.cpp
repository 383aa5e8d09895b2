#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <random>
#include <string>
#include <vector>

#include "btw/action.hpp"

using btw::ActionEnv;
using btw::ActionStmt;
using btw::Effect;
using btw::Expr;
using btw::ExprPtr;
using btw::Record;
using btw::Schema;
using btw::SchemaTable;
using btw::StoreOp;
using btw::StoreSnapshot;
using btw::Value;

namespace {

ExprPtr lit(Value v) { return Expr::make_literal(std::move(v)); }

ExprPtr var(const std::string& n) {
  auto e = std::make_shared<Expr>();
  e->node = Expr::VarRef;
  e->name = n;
  return e;
}

ExprPtr field(ExprPtr base, const std::string& f) {
  auto e = std::make_shared<Expr>();
  e->node = Expr::FieldGet;
  e->lhs = std::move(base);
  e->name = f;
  return e;
}

ExprPtr eq(ExprPtr l, ExprPtr r) {
  auto e = std::make_shared<Expr>();
  e->node = Expr::Binary;
  e->bin = btw::BinOp::Eq;
  e->lhs = std::move(l);
  e->rhs = std::move(r);
  return e;
}

SchemaTable schemas() {
  SchemaTable t;
  Schema s;
  s.name = "Rec";
  s.fields = {{"id", btw::ValueKind::Int}, {"note", btw::ValueKind::Text}};
  t["Rec"] = s;
  return t;
}

ActionEnv env_of(const SchemaTable& t) {
  ActionEnv env;
  env.schemas = &t;
  env.store_schemas = {{"S", "Rec"}, {"T", "Rec"}};
  return env;
}

ActionStmt add_stmt(const std::string& store, std::int64_t id) {
  ActionStmt st;
  st.kind = ActionStmt::Add;
  st.store = store;
  st.fields = {{"id", lit(Value::integer(id))},
               {"note", lit(Value::text("n" + std::to_string(id)))}};
  return st;
}

ActionStmt remove_stmt(const std::string& store, std::int64_t id) {
  ActionStmt st;
  st.kind = ActionStmt::Remove;
  st.store = store;
  st.var = "r";
  st.where = eq(field(var("r"), "id"), lit(Value::integer(id)));
  return st;
}

ActionStmt update_stmt(const std::string& store, std::int64_t id,
                       const std::string& note) {
  ActionStmt st;
  st.kind = ActionStmt::Update;
  st.store = store;
  st.var = "r";
  st.where = eq(field(var("r"), "id"), lit(Value::integer(id)));
  st.fields = {{"note", lit(Value::text(note))}};
  return st;
}

ActionStmt set_stmt(const std::string& v, std::int64_t x) {
  ActionStmt st;
  st.kind = ActionStmt::Set;
  st.var = v;
  st.fields = {{v, lit(Value::integer(x))}};
  return st;
}

// Collect all store ops from an effect list.
std::vector<StoreOp> ops_of(const std::vector<Effect>& effects) {
  std::vector<StoreOp> ops;
  for (const auto& e : effects)
    if (e.kind == Effect::StoreChanged)
      ops.insert(ops.end(), e.ops.begin(), e.ops.end());
  return ops;
}

}  // namespace

TEST_CASE("add, update, remove behave as specified on a known snapshot") {
  auto t = schemas();
  auto env = env_of(t);
  StoreSnapshot snap;
  std::map<std::string, Value> binds;

  auto [s1, e1] = btw::exec_action({add_stmt("S", 1), add_stmt("S", 2)}, snap,
                                   binds, env);
  CHECK(s1.records("S").size() == 2);

  auto [s2, e2] = btw::exec_action({update_stmt("S", 1, "edited")}, s1, binds,
                                   env);
  REQUIRE(s2.records("S").size() == 2);
  CHECK(s2.records("S")[0].find("note")->as_text() == "edited");
  CHECK(s2.records("S")[1].find("note")->as_text() == "n2");

  auto [s3, e3] = btw::exec_action({remove_stmt("S", 1)}, s2, binds, env);
  REQUIRE(s3.records("S").size() == 1);
  CHECK(s3.records("S")[0].find("id")->num() == 2);

  // Removing something that matches nothing is a no-op, not an error.
  auto [s4, e4] = btw::exec_action({remove_stmt("S", 99)}, s3, binds, env);
  CHECK(s4 == s3);
  CHECK(ops_of(e4).empty());
}

TEST_CASE("set records the previous value for the journal") {
  auto t = schemas();
  auto env = env_of(t);
  StoreSnapshot snap;
  std::map<std::string, Value> binds;
  binds["x"] = Value::integer(7);

  auto [s1, e1] = btw::exec_action({set_stmt("x", 42)}, snap, binds, env);
  REQUIRE(e1.size() == 1);
  CHECK(e1[0].kind == Effect::VarSet);
  CHECK(e1[0].had_old);
  CHECK(e1[0].old_value == Value::integer(7));
  CHECK(binds["x"] == Value::integer(42));

  auto [s2, e2] = btw::exec_action({set_stmt("fresh", 1)}, snap, binds, env);
  REQUIRE(e2.size() == 1);
  CHECK(!e2[0].had_old);
}

TEST_CASE("schema violations and decision writes are rejected") {
  auto t = schemas();
  auto env = env_of(t);
  StoreSnapshot snap;
  std::map<std::string, Value> binds;

  ActionStmt bad;
  bad.kind = ActionStmt::Add;
  bad.store = "S";
  bad.fields = {{"id", lit(Value::text("not an int"))},
                {"note", lit(Value::text("n"))}};
  CHECK_THROWS_AS(btw::exec_action({bad}, snap, binds, env), btw::ActionError);

  auto env2 = env;
  env2.is_decision = true;
  CHECK_THROWS_AS(btw::exec_action({add_stmt("S", 1)}, snap, binds, env2),
                  btw::ActionError);
}

TEST_CASE("journal inversion restores the snapshot: 500 random sequences") {
  auto t = schemas();
  auto env = env_of(t);
  std::mt19937_64 gen(99);

  StoreSnapshot base;
  for (int i = 0; i < 4; ++i) {
    Record r;
    r.fields.emplace_back("id", Value::integer(i));
    r.fields.emplace_back("note", Value::text("seed"));
    base.stores["S"].push_back(r);
  }

  int nonempty_journals = 0;
  for (int trial = 0; trial < 500; ++trial) {
    // Random program of 1..8 statements over stores S and T.
    std::vector<ActionStmt> prog;
    int len = 1 + int(gen() % 8);
    for (int i = 0; i < len; ++i) {
      std::string store = gen() % 2 == 0 ? "S" : "T";
      std::int64_t id = std::int64_t(gen() % 6);
      switch (gen() % 3) {
        case 0: prog.push_back(add_stmt(store, id)); break;
        case 1: prog.push_back(remove_stmt(store, id)); break;
        default:
          prog.push_back(update_stmt(store, id, "t" + std::to_string(trial)));
      }
    }
    std::map<std::string, Value> binds;
    StoreSnapshot before = base;
    auto [after, effects] = btw::exec_action(prog, before, binds, env);
    CHECK(before == base);  // input snapshot untouched

    // Replaying the journal forward over the original snapshot reproduces
    // the result; inverting it over the result restores the original.
    auto ops = ops_of(effects);
    if (!ops.empty()) ++nonempty_journals;
    StoreSnapshot redo = base;
    btw::apply_ops(redo, ops);
    CHECK(redo == after);
    StoreSnapshot undo = after;
    btw::invert_ops(undo, ops);
    CHECK(undo == base);
  }
  CHECK(nonempty_journals > 400);
}

TEST_CASE("copy projects the shared fields of a received message") {
  auto t = schemas();
  auto env = env_of(t);
  env.message_schemas["M"] = "Rec";
  StoreSnapshot snap;
  std::map<std::string, Value> binds;
  auto payload = std::make_shared<Record>();
  payload->fields.emplace_back("id", Value::integer(5));
  payload->fields.emplace_back("note", Value::text("hello"));
  binds["msg:M"] = Value::record(payload);

  ActionStmt st;
  st.kind = ActionStmt::Copy;
  st.message = "M";
  st.store = "S";
  auto [s1, e1] = btw::exec_action({st}, snap, binds, env);
  REQUIRE(s1.records("S").size() == 1);
  CHECK(s1.records("S")[0].find("id")->num() == 5);
  CHECK(s1.records("S")[0].find("note")->as_text() == "hello");
}

TEST_CASE("send emits a message effect without touching stores") {
  auto t = schemas();
  auto env = env_of(t);
  env.message_schemas["M"] = "Rec";
  StoreSnapshot snap;
  std::map<std::string, Value> binds;

  ActionStmt st;
  st.kind = ActionStmt::Send;
  st.message = "M";
  st.dest = {btw::MessageDest::Environment, ""};
  st.fields = {{"id", lit(Value::integer(9))},
               {"note", lit(Value::text("out"))}};
  auto [s1, e1] = btw::exec_action({st}, snap, binds, env);
  CHECK(s1 == snap);
  REQUIRE(e1.size() == 1);
  CHECK(e1[0].kind == Effect::MessageOut);
  CHECK(e1[0].message == "M");
  CHECK(e1[0].payload.find("id")->num() == 9);
}
