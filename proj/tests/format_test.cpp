#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "btw/format.hpp"
#include "btw/parser.hpp"

namespace fs = std::filesystem;

using btw::AstEntity;
using btw::AstProcessBlock;
using btw::ConceptKind;
using btw::Expr;
using btw::ExprPtr;
using btw::SpecAst;
using btw::Value;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- random AST generator --------------------------------------------------

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  std::uint64_t pick(std::uint64_t n) { return rng() % n; }
  bool coin() { return pick(2) == 0; }

  std::string name(const char* prefix, int i) {
    return std::string(prefix) + " " + std::to_string(i);
  }
  std::string ident(const char* prefix, int i) {
    return std::string(prefix) + std::to_string(i);
  }

  ExprPtr lit() {
    switch (pick(6)) {
      case 0: return Expr::make_literal(Value::boolean(coin()));
      case 1: return Expr::make_literal(Value::integer(std::int64_t(pick(100))));
      case 2: return Expr::make_literal(Value::text("txt " + std::to_string(pick(10))));
      case 3: return Expr::make_literal(Value::date(std::int64_t(pick(20000))));
      case 4: return Expr::make_literal(Value::duration(std::int64_t(1 + pick(100000))));
      default: {
        auto e = std::make_shared<Expr>();
        e->node = coin() ? Expr::Now : Expr::Today;
        return e;
      }
    }
  }

  ExprPtr expr(int depth) {
    if (depth <= 0) {
      if (pick(4) == 0) {
        auto e = std::make_shared<Expr>();
        e->node = Expr::VarRef;
        e->name = ident("v", int(pick(3)));
        return e;
      }
      return lit();
    }
    switch (pick(8)) {
      case 0: {
        auto e = std::make_shared<Expr>();
        e->node = Expr::Unary;
        e->un = btw::UnOp::Not;
        e->lhs = expr(depth - 1);
        return e;
      }
      case 1: {
        auto e = std::make_shared<Expr>();
        e->node = Expr::FieldGet;
        auto v = std::make_shared<Expr>();
        v->node = Expr::VarRef;
        v->name = ident("r", int(pick(2)));
        e->lhs = v;
        e->name = ident("f", int(pick(3)));
        return e;
      }
      case 2: {
        auto e = std::make_shared<Expr>();
        e->node = Expr::Quant;
        e->forall = coin();
        e->var = ident("q", int(pick(2)));
        e->name = name("Store", int(pick(2)));
        e->rhs = expr(depth - 1);
        return e;
      }
      case 3: {
        auto e = std::make_shared<Expr>();
        e->node = Expr::Temporal;
        e->fn = static_cast<btw::TemporalFn>(pick(8));
        e->name = name("Ent", int(pick(3)));
        return e;
      }
      default: {
        auto e = std::make_shared<Expr>();
        e->node = Expr::Binary;
        e->bin = static_cast<btw::BinOp>(pick(12));
        e->lhs = expr(depth - 1);
        e->rhs = expr(depth - 1);
        return e;
      }
    }
  }

  btw::ActionStmt action() {
    btw::ActionStmt st;
    switch (pick(3)) {
      case 0:
        st.kind = btw::ActionStmt::Add;
        st.store = name("Store", int(pick(2)));
        st.fields = {{ident("f", 0), expr(1)}, {ident("f", 1), expr(0)}};
        break;
      case 1:
        st.kind = btw::ActionStmt::Set;
        st.var = ident("v", int(pick(3)));
        st.fields = {{"", expr(1)}};
        break;
      default:
        st.kind = btw::ActionStmt::Send;
        st.message = name("Msg", int(pick(2)));
        st.fields = {{ident("f", 0), expr(1)}};
        switch (pick(3)) {
          case 0: st.dest = {btw::MessageDest::Environment, ""}; break;
          case 1:
            st.dest = {btw::MessageDest::EntityTarget, name("Ent", 0)};
            break;
          default:
            st.dest = {btw::MessageDest::Buffer, name("Buf", 0)};
        }
    }
    return st;
  }

  AstEntity entity(int depth, int i) {
    AstEntity e;
    switch (pick(depth > 0 ? 3 : 5)) {
      case 0: e.kind = ConceptKind::Decision; break;
      case 1: e.kind = ConceptKind::Synchroniser; break;
      default: e.kind = ConceptKind::Process;
    }
    e.name = name(e.kind == ConceptKind::Process
                      ? "Proc"
                      : e.kind == ConceptKind::Decision ? "Dec" : "Sync",
                  i);
    e.initial = pick(3) == 0;
    if (e.kind == ConceptKind::Process) {
      e.exclusive = pick(4) == 0;
      if (coin()) e.duration = std::int64_t(pick(100000));
      if (pick(3) == 0) e.timeout = std::int64_t(pick(5000));
      if (coin()) {
        btw::AstMessaging m;
        switch (pick(3)) {
          case 0:
            m.mode = btw::AstMessaging::Receive;
            m.message = name("Msg", int(pick(2)));
            if (coin()) m.from = name("Buf", 0);
            break;
          case 1:
            m.mode = btw::AstMessaging::Send;
            m.message = name("Msg", int(pick(2)));
            m.dest = coin()
                         ? btw::MessageDest{btw::MessageDest::EntityTarget,
                                            name("Proc", 0)}
                         : btw::MessageDest{btw::MessageDest::Environment, ""};
            break;
          default:
            m.mode = btw::AstMessaging::Call;
            m.service = name("Svc", 0);
            m.call_send = name("Msg", 0);
            m.call_reply = name("Msg", 1);
        }
        e.messaging.push_back(std::move(m));
      }
      if (coin()) e.pre = expr(2);
      if (coin()) e.post = expr(2);
      for (int a = 0, n = int(pick(3)); a < n; ++a)
        e.actions.push_back(action());
      if (coin()) e.hcis.push_back({ident("h", 0), std::nullopt, {}});
    }
    if (e.kind == ConceptKind::Decision) {
      for (int r = 0, n = 1 + int(pick(3)); r < n; ++r)
        e.rules.push_back({coin(), expr(2), {}});
      for (int t = 0, n = int(pick(3)); t < n; ++t) {
        btw::AstTerminator term;
        term.on_positive = coin();
        term.abort = pick(3) == 0;
        if (coin()) term.condition = expr(1);
        if (coin()) term.yields = coin();
        e.terminators.push_back(std::move(term));
      }
    }
    for (int t = 0, n = int(pick(3)); t < n; ++t) {
      btw::AstTrigger tr;
      tr.target = name("Proc", int(pick(3)));
      if (e.kind == ConceptKind::Decision && coin()) tr.on_positive = coin();
      e.triggers.push_back(std::move(tr));
    }
    if (depth > 0 && pick(3) == 0) {
      btw::AstBody body;
      for (int c = 0, n = 1 + int(pick(2)); c < n; ++c)
        body.entities.push_back(entity(depth - 1, 10 * (i + 1) + c));
      e.body = std::move(body);
    }
    return e;
  }

  SpecAst spec() {
    SpecAst ast;
    for (int i = 0, n = 1 + int(pick(3)); i < n; ++i) {
      btw::AstOrg o;
      o.name = name("Org", i);
      if (i > 0 && coin()) o.parent = name("Org", int(pick(i)));
      ast.scope.orgs.push_back(std::move(o));
    }
    for (int i = 0, n = 1 + int(pick(2)); i < n; ++i)
      ast.scope.roles.push_back({name("Role", i), {}});
    for (int i = 0, n = 1 + int(pick(2)); i < n; ++i) {
      btw::AstActor a;
      a.name = name("Actor", i);
      if (coin()) a.org = name("Org", 0);
      if (coin()) a.roles.push_back(name("Role", 0));
      ast.scope.actors.push_back(std::move(a));
    }
    if (coin())
      ast.scope.services.push_back({name("Svc", 0), coin(), {}});
    for (int i = 0, n = int(pick(3)); i < n; ++i) {
      btw::AstStoreDecl s;
      s.name = name("Store", i);
      s.schemas.push_back(name("Schema", 0));
      if (coin()) s.org = name("Org", 0);
      if (pick(3) == 0) s.fragment = name("Frag", 0);
      ast.scope.stores.push_back(std::move(s));
    }
    for (int i = 0, n = int(pick(3)); i < n; ++i)
      ast.scope.messages.push_back(
          {name("Msg", i), coin(), name("Schema", 0), {}});
    if (coin()) {
      btw::AstBufferDecl b;
      b.name = name("Buf", 0);
      b.protocol = static_cast<btw::BufferProtocol>(pick(4));
      if (b.protocol == btw::BufferProtocol::Predicate) {
        auto v = std::make_shared<Expr>();
        v->node = Expr::VarRef;
        v->name = "msg";
        auto g = std::make_shared<Expr>();
        g->node = Expr::FieldGet;
        g->lhs = v;
        g->name = ident("f", 0);
        b.order_key = g;
      }
      if (coin()) b.accepts.push_back(name("Msg", 0));
      ast.scope.buffers.push_back(std::move(b));
    }
    {
      btw::AstSchemaDecl s;
      s.name = name("Schema", 0);
      s.material = coin();
      static const btw::ValueKind kinds[] = {
          btw::ValueKind::Bool,     btw::ValueKind::Int,
          btw::ValueKind::Text,     btw::ValueKind::Date,
          btw::ValueKind::Time,     btw::ValueKind::Timestamp,
          btw::ValueKind::Duration};
      for (int i = 0, n = 1 + int(pick(4)); i < n; ++i)
        s.fields.emplace_back(ident("f", i), kinds[pick(7)]);
      ast.schemas.push_back(std::move(s));
    }
    for (int b = 0, n = 1 + int(pick(2)); b < n; ++b) {
      AstProcessBlock blk;
      blk.name = name("Block", b);
      for (int u = 0, m = int(pick(2)); u < m; ++u)
        blk.body.uses.push_back(name("Store", u));
      if (coin())
        blk.body.vars.emplace_back(ident("v", 0), btw::ValueKind::Int);
      if (pick(3) == 0)
        blk.body.commit_scopes.push_back(
            {name("CS", 0), {name("Proc", 0), name("Proc", 1)}, {}});
      for (int i = 0, m = 1 + int(pick(3)); i < m; ++i)
        blk.body.entities.push_back(entity(2, i));
      ast.processes.push_back(std::move(blk));
    }
    if (coin()) {
      btw::AstServiceModel sm;
      sm.name = name("Model", 0);
      sm.has_birth = sm.has_death = true;
      sm.states = {name("State", 0), name("State", 1)};
      for (int t = 0, n = 1 + int(pick(4)); t < n; ++t) {
        btw::AstTransition tr;
        const char* options[] = {"birth", "State 0", "State 1", "death"};
        tr.from = options[pick(3)];
        tr.to = options[1 + pick(3)];
        // Only populate the fields the chosen event kind carries; the rest
        // keep their defaults, matching what a parse produces.
        tr.when.kind = static_cast<btw::AstEventSpec::Kind>(pick(9));
        switch (tr.when.kind) {
          case btw::AstEventSpec::DbState:
          case btw::AstEventSpec::Timer:
            tr.when.expr = expr(1);
            break;
          case btw::AstEventSpec::DecisionEnd:
            tr.when.name = name("Ent", int(pick(3)));
            tr.when.positive = coin();
            break;
          case btw::AstEventSpec::ProcessStartFailed:
            tr.when.name = name("Ent", int(pick(3)));
            tr.when.threshold = 1 + int(pick(4));
            break;
          case btw::AstEventSpec::Abort:
            tr.when.failure = coin();
            break;
          default:
            tr.when.name = name("Ent", int(pick(3)));
        }
        if (pick(3) == 0) tr.condition = expr(1);
        for (int a = 0, m = int(pick(3)); a < m; ++a) {
          btw::AstEcaAction act;
          act.kind = static_cast<btw::AstEcaAction::Kind>(pick(3));
          if (act.kind != btw::AstEcaAction::Trigger)
            act.message = name("Msg", int(pick(2)));
          act.target = name("Proc", int(pick(2)));
          tr.actions.push_back(std::move(act));
        }
        sm.transitions.push_back(std::move(tr));
      }
      ast.service = std::move(sm);
    }
    if (coin()) {
      btw::AstRecovery rec;
      btw::AstRecoveryEntry en;
      en.entity = name("Proc", 0);
      int th = 1 + int(pick(3));
      for (int r = 0, n = int(pick(3)); r < n; ++r) {
        en.ladder.push_back({th, coin() ? "" : name("Proc", 1), {}});
        th += 1 + int(pick(3));
      }
      if (coin()) en.ladder.push_back({std::nullopt, "", {}});
      switch (pick(4)) {
        case 0: en.rollback = btw::AstRecoveryEntry::Undo; break;
        case 1: en.rollback = btw::AstRecoveryEntry::Null; break;
        case 2:
          en.rollback = btw::AstRecoveryEntry::Compensate;
          en.compensation = name("Proc", 1);
          break;
        default: en.rollback = btw::AstRecoveryEntry::Unset;
      }
      rec.entries.push_back(std::move(en));
      ast.recovery = std::move(rec);
    }
    return ast;
  }
};

}  // namespace

TEST_CASE("fixtures round-trip: parse, format, reparse, same structure") {
  fs::path dir(BTW_FIXTURE_DIR);
  std::vector<fs::path> files = {dir / "road_closures.btw", dir / "ladder.btw"};
  for (const auto& e : fs::directory_iterator(dir / "axioms"))
    files.push_back(e.path());
  for (const auto& f : files) {
    auto first = btw::parse(slurp(f), f.filename());
    REQUIRE(first.ok());
    std::string printed = btw::format_spec(first.ast);
    auto second = btw::parse(printed, "formatted");
    REQUIRE_MESSAGE(second.ok(), f.string());
    CHECK_MESSAGE(btw::ast_to_json(first.ast) == btw::ast_to_json(second.ast),
                  f.string());
    // Formatting is a fixpoint after one pass.
    CHECK(btw::format_spec(second.ast) == printed);
  }
}

TEST_CASE("random models round-trip through the formatter") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Gen g(seed);
    SpecAst ast = g.spec();
    std::string printed = btw::format_spec(ast);
    auto res = btw::parse(printed, "gen");
    REQUIRE_MESSAGE(res.ok(), "seed " << seed << "\n" << printed);
    REQUIRE_MESSAGE(btw::ast_to_json(ast) == btw::ast_to_json(res.ast),
                    "seed " << seed << "\n" << printed);
    CHECK(btw::format_spec(res.ast) == printed);
  }
}

TEST_CASE("expression printing uses minimal parentheses") {
  // (a + b) * c needs parens; a + (b * c) does not.
  auto lit = [](std::int64_t n) {
    return Expr::make_literal(Value::integer(n));
  };
  auto bin = [](btw::BinOp op, ExprPtr l, ExprPtr r) {
    auto e = std::make_shared<Expr>();
    e->node = Expr::Binary;
    e->bin = op;
    e->lhs = std::move(l);
    e->rhs = std::move(r);
    return e;
  };
  CHECK(btw::format_expr(bin(btw::BinOp::Mul,
                             bin(btw::BinOp::Add, lit(1), lit(2)), lit(3))) ==
        "(1 + 2) * 3");
  CHECK(btw::format_expr(bin(btw::BinOp::Add, lit(1),
                             bin(btw::BinOp::Mul, lit(2), lit(3)))) ==
        "1 + 2 * 3");
}
