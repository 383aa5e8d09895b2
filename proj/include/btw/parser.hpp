#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "btw/ast.hpp"
#include "btw/lexer.hpp"

namespace btw {

struct ParseResult {
  SpecAst ast;
  std::vector<Diagnostic> diags;

  bool ok() const { return !has_errors(diags); }
};

namespace detail {

inline std::int64_t unit_seconds(const std::string& u) {
  if (u == "second" || u == "seconds") return 1;
  if (u == "minute" || u == "minutes") return 60;
  if (u == "hour" || u == "hours") return 3600;
  if (u == "day" || u == "days") return kSecondsPerDay;
  if (u == "month" || u == "months") return 30 * kSecondsPerDay;
  if (u == "year" || u == "years") return 365 * kSecondsPerDay;
  return 0;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::vector<Diagnostic>& diags)
      : toks_(std::move(tokens)), diags_(diags) {}

  SpecAst parse_file() {
    SpecAst ast;
    if (peek().is(Token::Ident, "scope")) {
      ast.scope = parse_scope();
    } else {
      error(peek().span, "expected scope block");
      if (peek().kind == Token::End) return ast;
      skip_to_top_level();
    }
    while (peek().kind != Token::End) {
      const Token& t = peek();
      if (t.is(Token::Ident, "schema")) {
        ast.schemas.push_back(parse_schema());
      } else if (t.is(Token::Ident, "process")) {
        ast.processes.push_back(parse_process_block());
      } else if (t.is(Token::Ident, "service")) {
        ast.service = parse_service_model();
      } else if (t.is(Token::Ident, "recovery")) {
        ast.recovery = parse_recovery();
      } else if (t.is(Token::Ident, "scope")) {
        error(t.span, "duplicate scope block");
        parse_scope();
      } else {
        error(t.span, "expected schema, process, service or recovery block");
        skip_to_top_level();
      }
    }
    return ast;
  }

 private:
  // --- token plumbing -----------------------------------------------------

  const Token& peek(int off = 0) const {
    std::size_t i = pos_ + off;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  const Token& take() {
    const Token& t = peek();
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool accept(const char* punct) {
    if (peek().is(Token::Punct, punct)) {
      take();
      return true;
    }
    return false;
  }
  bool accept_kw(const char* kw) {
    if (peek().is(Token::Ident, kw)) {
      take();
      return true;
    }
    return false;
  }
  bool expect(const char* punct) {
    if (accept(punct)) return true;
    error(peek().span, std::string("expected '") + punct + "'");
    return false;
  }
  bool expect_kw(const char* kw) {
    if (accept_kw(kw)) return true;
    error(peek().span, std::string("expected '") + kw + "'");
    return false;
  }
  std::string expect_string(const char* what) {
    if (peek().kind == Token::String) return take().text;
    error(peek().span, std::string("expected quoted ") + what + " name");
    return "";
  }
  std::string expect_ident(const char* what) {
    if (peek().kind == Token::Ident) return take().text;
    error(peek().span, std::string("expected ") + what);
    return "";
  }

  void error(const Span& span, const std::string& msg) {
    // One diagnostic per recovery region keeps cascades out.
    if (suppress_) return;
    diags_.push_back({"P100", Severity::Error, span, msg});
  }

  // Skip a malformed item: stop at a close brace of the current level or a
  // known item-starter keyword, skipping balanced brace groups whole.
  void recover_item() {
    static const std::set<std::string> starters = {
        "scope",    "schema",   "process", "decision",  "sync",
        "service",  "recovery", "org",     "actor",     "role",
        "store",    "message",  "buffer",  "uses",      "var",
        "commit",   "initial",  "exclusive", "unit",    "duration",
        "timeout",  "hci",      "triggers", "receive",  "send",
        "call",     "pre",      "post",    "action",    "rule",
        "terminate", "state",   "transition", "entity", "redo",
        "rollback"};
    int depth = 0;
    bool consumed = false;
    while (peek().kind != Token::End) {
      const Token& t = peek();
      if (t.is(Token::Punct, "{")) {
        ++depth;
      } else if (t.is(Token::Punct, "}")) {
        if (depth == 0) return;
        --depth;
      } else if (consumed && depth == 0 && t.kind == Token::Ident &&
                 starters.count(t.text)) {
        return;
      }
      take();
      consumed = true;  // always progress, or the caller's loop never ends
    }
  }

  void skip_to_top_level() {
    static const std::set<std::string> tops = {"scope", "schema", "process",
                                              "service", "recovery"};
    int depth = 0;
    while (peek().kind != Token::End) {
      const Token& t = peek();
      if (t.is(Token::Punct, "{")) ++depth;
      if (t.is(Token::Punct, "}")) --depth;
      take();
      if (depth <= 0 && peek().kind == Token::Ident &&
          tops.count(peek().text))
        return;
    }
  }

  std::optional<ValueKind> parse_kind_name() {
    if (peek().kind != Token::Ident) return std::nullopt;
    auto k = value_kind_from_name(peek().text);
    if (k) take();
    return k;
  }

  std::vector<std::string> string_list() {
    std::vector<std::string> out;
    out.push_back(expect_string("item"));
    while (accept(",")) out.push_back(expect_string("item"));
    return out;
  }

  // --- scope --------------------------------------------------------------

  AstScope parse_scope() {
    AstScope sc;
    sc.span = peek().span;
    expect_kw("scope");
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      const Token& t = peek();
      if (t.is(Token::Ident, "org")) {
        take();
        AstOrg o;
        o.span = t.span;
        o.name = expect_string("org unit");
        if (accept_kw("in")) o.parent = expect_string("org unit");
        sc.orgs.push_back(std::move(o));
      } else if (t.is(Token::Ident, "actor")) {
        take();
        AstActor a;
        a.span = t.span;
        a.name = expect_string("actor");
        if (accept_kw("in")) a.org = expect_string("org unit");
        if (accept_kw("roles")) a.roles = string_list();
        sc.actors.push_back(std::move(a));
      } else if (t.is(Token::Ident, "role")) {
        take();
        sc.roles.push_back({expect_string("role"), t.span});
      } else if (t.is(Token::Ident, "service")) {
        take();
        AstServiceDecl s;
        s.span = t.span;
        s.name = expect_string("service");
        s.external = accept_kw("external");
        sc.services.push_back(std::move(s));
      } else if (t.is(Token::Ident, "store")) {
        take();
        AstStoreDecl s;
        s.span = t.span;
        s.name = expect_string("store");
        expect_kw("schema");
        s.schemas = string_list();
        if (accept_kw("in")) s.org = expect_string("org unit");
        if (accept_kw("fragment")) s.fragment = expect_string("fragment");
        sc.stores.push_back(std::move(s));
      } else if (t.is(Token::Ident, "message")) {
        take();
        AstMessageDecl m;
        m.span = t.span;
        m.name = expect_string("message type");
        m.external = accept_kw("external");
        expect_kw("schema");
        m.schema = expect_string("schema");
        sc.messages.push_back(std::move(m));
      } else if (t.is(Token::Ident, "buffer")) {
        take();
        AstBufferDecl b;
        b.span = t.span;
        b.name = expect_string("buffer");
        expect_kw("protocol");
        if (accept_kw("fifo")) {
          b.protocol = BufferProtocol::Fifo;
        } else if (accept_kw("lifo")) {
          b.protocol = BufferProtocol::Lifo;
        } else if (accept_kw("random")) {
          b.protocol = BufferProtocol::Random;
        } else if (accept_kw("predicate")) {
          b.protocol = BufferProtocol::Predicate;
          expect("(");
          b.order_key = parse_expr();
          expect(")");
        } else {
          error(peek().span, "expected buffer protocol");
        }
        if (accept_kw("accepts")) b.accepts = string_list();
        sc.buffers.push_back(std::move(b));
      } else {
        error(t.span, "unexpected token in scope block");
        suppress_ = true;
        recover_item();
        suppress_ = false;
      }
    }
    expect("}");
    return sc;
  }

  AstSchemaDecl parse_schema() {
    AstSchemaDecl s;
    s.span = peek().span;
    expect_kw("schema");
    s.name = expect_string("schema");
    s.material = accept_kw("material");
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      std::string fname = expect_ident("field name");
      expect(":");
      auto k = parse_kind_name();
      if (!k) {
        error(peek().span, "expected field kind");
        suppress_ = true;
        recover_item();
        suppress_ = false;
        break;
      }
      s.fields.emplace_back(fname, *k);
      accept(",");
    }
    expect("}");
    return s;
  }

  // --- expressions --------------------------------------------------------

  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr lhs = parse_and();
    while (peek().is(Token::Ident, "or")) {
      Span sp = take().span;
      auto e = std::make_shared<Expr>();
      e->node = Expr::Binary;
      e->bin = BinOp::Or;
      e->span = sp;
      e->lhs = lhs;
      e->rhs = parse_and();
      lhs = e;
    }
    return lhs;
  }

  ExprPtr parse_and() {
    ExprPtr lhs = parse_not();
    while (peek().is(Token::Ident, "and")) {
      Span sp = take().span;
      auto e = std::make_shared<Expr>();
      e->node = Expr::Binary;
      e->bin = BinOp::And;
      e->span = sp;
      e->lhs = lhs;
      e->rhs = parse_not();
      lhs = e;
    }
    return lhs;
  }

  ExprPtr parse_not() {
    if (peek().is(Token::Ident, "not")) {
      Span sp = take().span;
      auto e = std::make_shared<Expr>();
      e->node = Expr::Unary;
      e->un = UnOp::Not;
      e->span = sp;
      e->lhs = parse_not();
      return e;
    }
    return parse_cmp();
  }

  ExprPtr parse_cmp() {
    ExprPtr lhs = parse_add();
    static const std::pair<const char*, BinOp> ops[] = {
        {"=", BinOp::Eq},  {"!=", BinOp::Ne}, {"<=", BinOp::Le},
        {">=", BinOp::Ge}, {"<", BinOp::Lt},  {">", BinOp::Gt}};
    for (const auto& [sym, op] : ops) {
      if (peek().is(Token::Punct, sym)) {
        Span sp = take().span;
        auto e = std::make_shared<Expr>();
        e->node = Expr::Binary;
        e->bin = op;
        e->span = sp;
        e->lhs = lhs;
        e->rhs = parse_add();
        return e;
      }
    }
    return lhs;
  }

  ExprPtr parse_add() {
    ExprPtr lhs = parse_mul();
    while (peek().is(Token::Punct, "+") || peek().is(Token::Punct, "-")) {
      bool plus = peek().text == "+";
      Span sp = take().span;
      auto e = std::make_shared<Expr>();
      e->node = Expr::Binary;
      e->bin = plus ? BinOp::Add : BinOp::Sub;
      e->span = sp;
      e->lhs = lhs;
      e->rhs = parse_mul();
      lhs = e;
    }
    return lhs;
  }

  ExprPtr parse_mul() {
    ExprPtr lhs = parse_postfix();
    while (peek().is(Token::Punct, "*") || peek().is(Token::Punct, "/")) {
      bool mul = peek().text == "*";
      Span sp = take().span;
      auto e = std::make_shared<Expr>();
      e->node = Expr::Binary;
      e->bin = mul ? BinOp::Mul : BinOp::Div;
      e->span = sp;
      e->lhs = lhs;
      e->rhs = parse_postfix();
      lhs = e;
    }
    return lhs;
  }

  ExprPtr parse_postfix() {
    ExprPtr e = parse_primary();
    while (peek().is(Token::Punct, ".")) {
      take();
      auto f = std::make_shared<Expr>();
      f->node = Expr::FieldGet;
      f->span = peek().span;
      f->name = expect_ident("field name");
      f->lhs = e;
      e = f;
    }
    return e;
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    auto mk = [&](Expr::Kind k) {
      auto e = std::make_shared<Expr>();
      e->node = k;
      e->span = t.span;
      return e;
    };
    switch (t.kind) {
      case Token::Int: {
        take();
        // an int followed by a time unit is a duration literal
        if (peek().kind == Token::Ident && unit_seconds(peek().text) > 0) {
          std::int64_t mult = unit_seconds(take().text);
          return Expr::make_literal(Value::duration(t.number * mult), t.span);
        }
        return Expr::make_literal(Value::integer(t.number), t.span);
      }
      case Token::String:
        take();
        return Expr::make_literal(Value::text(t.text), t.span);
      case Token::DateLit:
        take();
        return Expr::make_literal(Value::date(t.number), t.span);
      case Token::TimeLit:
        take();
        return Expr::make_literal(Value::time(t.number), t.span);
      case Token::TimestampLit:
        take();
        return Expr::make_literal(Value::timestamp(t.number), t.span);
      case Token::Punct:
        if (t.text == "(") {
          take();
          ExprPtr e = parse_expr();
          expect(")");
          return e;
        }
        if (t.text == "-") {
          take();
          auto e = mk(Expr::Unary);
          e->un = UnOp::Neg;
          e->lhs = parse_postfix();
          return e;
        }
        break;
      case Token::Ident: {
        const std::string& id = t.text;
        if (id == "true" || id == "false") {
          take();
          return Expr::make_literal(Value::boolean(id == "true"), t.span);
        }
        if (id == "exists" || id == "forall") {
          take();
          auto e = mk(Expr::Quant);
          e->forall = id == "forall";
          e->var = expect_ident("quantifier variable");
          expect_kw("in");
          e->name = expect_string("store");
          if (accept_kw("where")) e->rhs = parse_expr();
          return e;
        }
        if (id == "first") {
          take();
          auto e = mk(Expr::First);
          e->name = expect_string("store");
          if (accept_kw("where")) e->rhs = parse_expr();  // binds `it`
          return e;
        }
        if (id == "payload") {
          take();
          auto e = mk(Expr::Payload);
          expect("(");
          e->name = expect_string("message type");
          expect(")");
          return e;
        }
        if (id == "now" || id == "today") {
          take();
          expect("(");
          expect(")");
          return mk(id == "now" ? Expr::Now : Expr::Today);
        }
        static const std::pair<const char*, TemporalFn> fns[] = {
            {"start_date", TemporalFn::StartDate},
            {"end_date", TemporalFn::EndDate},
            {"start_time", TemporalFn::StartTime},
            {"end_time", TemporalFn::EndTime},
            {"send_date", TemporalFn::SendDate},
            {"rec_date", TemporalFn::RecDate},
            {"state_entered", TemporalFn::StateEntered},
            {"outcome", TemporalFn::OutcomePositive}};
        for (const auto& [nm, fn] : fns) {
          if (id == nm) {
            take();
            auto e = mk(Expr::Temporal);
            e->fn = fn;
            expect("(");
            e->name = expect_string("subject");
            expect(")");
            return e;
          }
        }
        take();
        auto e = mk(Expr::VarRef);
        e->name = id;
        return e;
      }
      default: break;
    }
    error(t.span, "expected expression");
    take();
    return Expr::make_literal(Value::boolean(false), t.span);
  }

  // --- actions ------------------------------------------------------------

  std::vector<std::pair<std::string, ExprPtr>> parse_record_lit() {
    std::vector<std::pair<std::string, ExprPtr>> fields;
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      std::string fname = expect_ident("field name");
      expect(":");
      fields.emplace_back(fname, parse_expr());
      accept(",");
    }
    expect("}");
    return fields;
  }

  MessageDest parse_dest() {
    MessageDest d;
    if (accept_kw("entity")) {
      d.kind = MessageDest::EntityTarget;
      d.name = expect_string("entity");
    } else if (accept_kw("service")) {
      d.kind = MessageDest::RemoteService;  // lowering localises
      d.name = expect_string("service");
    } else if (accept_kw("buffer")) {
      d.kind = MessageDest::Buffer;
      d.name = expect_string("buffer");
    } else if (accept_kw("environment")) {
      d.kind = MessageDest::Environment;
    } else {
      error(peek().span, "expected entity, service, buffer or environment");
    }
    return d;
  }

  std::vector<ActionStmt> parse_action_block() {
    std::vector<ActionStmt> out;
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      const Token& t = peek();
      ActionStmt a;
      a.span = t.span;
      if (accept_kw("add")) {
        a.kind = ActionStmt::Add;
        a.store = expect_string("store");
        a.fields = parse_record_lit();
      } else if (accept_kw("copy")) {
        a.kind = ActionStmt::Copy;
        a.message = expect_string("message type");
        expect_kw("to");
        a.store = expect_string("store");
      } else if (accept_kw("set")) {
        a.kind = ActionStmt::Set;
        a.var = expect_ident("variable");
        expect("=");
        a.fields.emplace_back("", parse_expr());
      } else if (accept_kw("send")) {
        a.message = expect_string("message type");
        if (peek().is(Token::Punct, "{")) {
          a.kind = ActionStmt::Send;
          a.fields = parse_record_lit();
          expect_kw("to");
          a.dest = parse_dest();
        } else {
          expect_kw("to");
          if (accept_kw("each")) {
            a.kind = ActionStmt::BulkSend;
            a.dest.kind = MessageDest::Environment;
            a.var = expect_ident("variable");
            expect_kw("in");
            a.store = expect_string("store");
            if (accept_kw("where")) a.where = parse_expr();
            a.fields = parse_record_lit();
          } else {
            a.kind = ActionStmt::Send;
            a.dest = parse_dest();
          }
        }
      } else if (accept_kw("remove")) {
        a.kind = ActionStmt::Remove;
        a.var = expect_ident("variable");
        expect_kw("from");
        a.store = expect_string("store");
        expect_kw("where");
        a.where = parse_expr();
      } else if (accept_kw("update")) {
        a.kind = ActionStmt::Update;
        a.var = expect_ident("variable");
        expect_kw("in");
        a.store = expect_string("store");
        expect_kw("where");
        a.where = parse_expr();
        a.fields = parse_record_lit();
      } else {
        error(t.span, "expected action statement");
        suppress_ = true;
        recover_item();
        suppress_ = false;
        break;
      }
      out.push_back(std::move(a));
    }
    expect("}");
    return out;
  }

  // --- process bodies -----------------------------------------------------

  std::int64_t parse_duration_value() {
    std::int64_t n = 0;
    if (peek().kind == Token::Int) {
      n = take().number;
    } else {
      error(peek().span, "expected number");
    }
    if (peek().kind == Token::Ident && unit_seconds(peek().text) > 0)
      n *= unit_seconds(take().text);
    return n;
  }

  AstEntity parse_entity(ConceptKind kind) {
    AstEntity e;
    e.span = peek().span;
    e.kind = kind;
    take();  // the keyword
    e.name = expect_string("entity");
    if (!peek().is(Token::Punct, "{")) return e;  // bodiless: atomic or alias
    take();
    AstBody body;
    bool has_body_items = false;
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      const Token& t = peek();
      if (accept_kw("initial")) {
        e.initial = true;
      } else if (accept_kw("exclusive")) {
        e.exclusive = true;
      } else if (accept_kw("role")) {
        e.role = expect_string("role");
      } else if (accept_kw("unit")) {
        e.unit = expect_string("org unit");
      } else if (accept_kw("duration")) {
        e.duration = parse_duration_value();
      } else if (accept_kw("timeout")) {
        e.timeout = parse_duration_value();
      } else if (accept_kw("hci")) {
        AstHci h;
        h.span = t.span;
        h.name = expect_string("hci point");
        if (accept_kw("schema")) h.schema = expect_string("schema");
        e.hcis.push_back(std::move(h));
      } else if (accept_kw("triggers")) {
        AstTrigger tr;
        tr.span = t.span;
        tr.target = expect_string("entity");
        if (accept_kw("on")) {
          if (accept_kw("positive"))
            tr.on_positive = true;
          else if (accept_kw("negative"))
            tr.on_positive = false;
          else
            error(peek().span, "expected positive or negative");
        }
        e.triggers.push_back(std::move(tr));
      } else if (accept_kw("receive")) {
        AstMessaging m;
        m.span = t.span;
        m.mode = AstMessaging::Receive;
        m.message = expect_string("message type");
        if (accept_kw("from")) m.from = expect_string("source");
        e.messaging.push_back(std::move(m));
      } else if (accept_kw("send")) {
        AstMessaging m;
        m.span = t.span;
        m.mode = AstMessaging::Send;
        m.message = expect_string("message type");
        expect_kw("to");
        m.dest = parse_dest();
        e.messaging.push_back(std::move(m));
      } else if (accept_kw("call")) {
        AstMessaging m;
        m.span = t.span;
        m.mode = AstMessaging::Call;
        m.service = expect_string("service");
        if (accept_kw("send")) m.call_send = expect_string("message type");
        expect_kw("reply");
        m.call_reply = expect_string("message type");
        e.messaging.push_back(std::move(m));
      } else if (accept_kw("pre")) {
        e.pre = parse_expr();
      } else if (accept_kw("post")) {
        e.post = parse_expr();
      } else if (accept_kw("action")) {
        e.actions = parse_action_block();
      } else if (accept_kw("rule")) {
        AstRule r;
        r.span = t.span;
        if (accept_kw("positive"))
          r.positive = true;
        else if (accept_kw("negative"))
          r.positive = false;
        else
          error(peek().span, "expected positive or negative");
        r.predicate = parse_expr();
        e.rules.push_back(std::move(r));
      } else if (accept_kw("terminate")) {
        AstTerminator tm;
        tm.span = t.span;
        expect_kw("on");
        if (accept_kw("positive"))
          tm.on_positive = true;
        else if (accept_kw("negative"))
          tm.on_positive = false;
        else
          error(peek().span, "expected positive or negative");
        tm.abort = accept_kw("abort");
        if (accept_kw("if")) tm.condition = parse_expr();
        if (accept_kw("yields")) {
          if (accept_kw("positive"))
            tm.yields = true;
          else if (accept_kw("negative"))
            tm.yields = false;
          else
            error(peek().span, "expected positive or negative");
        }
        e.terminators.push_back(std::move(tm));
      } else if (t.is(Token::Ident, "process") ||
                 t.is(Token::Ident, "decision") ||
                 t.is(Token::Ident, "sync") || t.is(Token::Ident, "uses") ||
                 t.is(Token::Ident, "var") || t.is(Token::Ident, "commit")) {
        parse_body_item(body);
        has_body_items = true;
      } else {
        error(t.span, "unexpected token in entity body");
        suppress_ = true;
        recover_item();
        suppress_ = false;
      }
    }
    expect("}");
    if (has_body_items) e.body = std::move(body);
    return e;
  }

  void parse_body_item(AstBody& body) {
    const Token& t = peek();
    if (accept_kw("uses")) {
      for (auto& s : string_list()) body.uses.push_back(std::move(s));
    } else if (accept_kw("var")) {
      std::string vname = expect_ident("variable");
      expect(":");
      auto k = parse_kind_name();
      if (k)
        body.vars.emplace_back(vname, *k);
      else
        error(peek().span, "expected variable kind");
    } else if (accept_kw("commit")) {
      expect_kw("scope");
      AstCommitScope cs;
      cs.span = t.span;
      cs.name = expect_string("commit scope");
      expect("{");
      while (peek().kind == Token::String) {
        cs.members.push_back(take().text);
        accept(",");
      }
      expect("}");
      body.commit_scopes.push_back(std::move(cs));
    } else if (t.is(Token::Ident, "process")) {
      body.entities.push_back(parse_entity(ConceptKind::Process));
    } else if (t.is(Token::Ident, "decision")) {
      body.entities.push_back(parse_entity(ConceptKind::Decision));
    } else if (t.is(Token::Ident, "sync")) {
      body.entities.push_back(parse_entity(ConceptKind::Synchroniser));
    } else {
      error(t.span, "expected declaration");
      suppress_ = true;
      recover_item();
      suppress_ = false;
    }
  }

  AstProcessBlock parse_process_block() {
    AstProcessBlock b;
    b.span = peek().span;
    expect_kw("process");
    b.name = expect_string("process");
    b.body.span = peek().span;
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End)
      parse_body_item(b.body);
    expect("}");
    return b;
  }

  // --- service model ------------------------------------------------------

  std::string parse_state_ref() {
    if (accept_kw("birth")) return "birth";
    if (accept_kw("death")) return "death";
    return expect_string("state");
  }

  AstServiceModel parse_service_model() {
    AstServiceModel sm;
    sm.span = peek().span;
    expect_kw("service");
    expect_kw("model");
    sm.name = expect_string("service");
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      const Token& t = peek();
      if (accept_kw("state")) {
        if (accept_kw("birth"))
          sm.has_birth = true;
        else if (accept_kw("death"))
          sm.has_death = true;
        else
          sm.states.push_back(expect_string("state"));
      } else if (accept_kw("transition")) {
        AstTransition tr;
        tr.span = t.span;
        tr.from = parse_state_ref();
        expect("->");
        tr.to = parse_state_ref();
        expect("{");
        expect_kw("when");
        tr.when = parse_event_spec();
        if (accept_kw("if")) tr.condition = parse_expr();
        if (accept_kw("then")) {
          tr.actions.push_back(parse_eca_action());
          while (accept(",")) tr.actions.push_back(parse_eca_action());
        }
        expect("}");
        sm.transitions.push_back(std::move(tr));
      } else {
        error(t.span, "expected state or transition");
        suppress_ = true;
        recover_item();
        suppress_ = false;
      }
    }
    expect("}");
    return sm;
  }

  AstEventSpec parse_event_spec() {
    AstEventSpec ev;
    ev.span = peek().span;
    if (accept_kw("msg_from")) {
      ev.kind = AstEventSpec::MsgFrom;
      ev.name = expect_string("message type");
    } else if (accept_kw("msg_to")) {
      ev.kind = AstEventSpec::MsgTo;
      ev.name = expect_string("message type");
    } else if (accept_kw("db_state")) {
      ev.kind = AstEventSpec::DbState;
      ev.expr = parse_expr();
    } else if (accept_kw("decision_end")) {
      ev.kind = AstEventSpec::DecisionEnd;
      ev.name = expect_string("decision");
      if (accept_kw("positive"))
        ev.positive = true;
      else if (accept_kw("negative"))
        ev.positive = false;
      else
        error(peek().span, "expected positive or negative");
    } else if (accept_kw("process_start")) {
      ev.kind = AstEventSpec::ProcessStart;
      ev.name = expect_string("process");
    } else if (accept_kw("process_end")) {
      ev.kind = AstEventSpec::ProcessEnd;
      ev.name = expect_string("process");
    } else if (accept_kw("process_start_failed")) {
      ev.kind = AstEventSpec::ProcessStartFailed;
      ev.name = expect_string("process");
      if (peek().kind == Token::Int)
        ev.threshold = static_cast<int>(take().number);
      else
        error(peek().span, "expected failure threshold");
    } else if (accept_kw("abort")) {
      ev.kind = AstEventSpec::Abort;
      if (accept_kw("failure"))
        ev.failure = true;
      else if (accept_kw("nonfailure"))
        ev.failure = false;
      else
        error(peek().span, "expected failure or nonfailure");
    } else if (accept_kw("timer")) {
      ev.kind = AstEventSpec::Timer;
      ev.expr = parse_expr();
    } else {
      error(peek().span, "expected event specification");
    }
    return ev;
  }

  AstEcaAction parse_eca_action() {
    AstEcaAction a;
    a.span = peek().span;
    if (accept_kw("forward")) {
      a.kind = AstEcaAction::Forward;
      a.message = expect_string("message type");
      expect_kw("to");
      a.target = expect_string("entity");
    } else if (accept_kw("trigger")) {
      a.kind = AstEcaAction::Trigger;
      a.target = expect_string("entity");
    } else if (accept_kw("send")) {
      a.kind = AstEcaAction::Send;
      a.message = expect_string("message type");
      expect_kw("to");
      a.target = expect_string("service");
    } else if (accept_kw("none")) {
      a.kind = AstEcaAction::None;
    } else {
      error(peek().span, "expected ECA action");
    }
    return a;
  }

  // --- recovery -----------------------------------------------------------

  AstRecovery parse_recovery() {
    AstRecovery rec;
    rec.span = peek().span;
    expect_kw("recovery");
    expect("{");
    while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
      if (!accept_kw("entity")) {
        error(peek().span, "expected entity entry");
        suppress_ = true;
        recover_item();
        suppress_ = false;
        continue;
      }
      AstRecoveryEntry e;
      e.span = peek().span;
      e.entity = expect_string("entity");
      expect("{");
      while (!peek().is(Token::Punct, "}") && peek().kind != Token::End) {
        if (accept_kw("redo")) {
          do {
            expect_kw("contingency");
            AstContingency c;
            c.span = peek().span;
            if (accept_kw("unbounded")) {
              c.threshold = std::nullopt;
            } else if (peek().kind == Token::Int) {
              c.threshold = static_cast<int>(take().number);
            } else {
              error(peek().span, "expected threshold or unbounded");
            }
            expect("->");
            if (accept_kw("self"))
              c.target.clear();
            else
              c.target = expect_string("entity");
            e.ladder.push_back(std::move(c));
          } while (accept(","));
        } else if (accept_kw("rollback")) {
          if (accept_kw("undo")) {
            e.rollback = AstRecoveryEntry::Undo;
          } else if (accept_kw("none")) {
            e.rollback = AstRecoveryEntry::Null;
          } else if (accept_kw("compensate")) {
            e.rollback = AstRecoveryEntry::Compensate;
            e.compensation = expect_string("entity");
          } else {
            error(peek().span, "expected undo, none or compensate");
          }
        } else {
          error(peek().span, "expected redo or rollback");
          suppress_ = true;
          recover_item();
          suppress_ = false;
          break;
        }
      }
      expect("}");
      rec.entries.push_back(std::move(e));
    }
    expect("}");
    return rec;
  }

  std::vector<Token> toks_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
  bool suppress_ = false;
};

}  // namespace detail

inline ParseResult parse(std::string_view text,
                         const std::string& file = "<input>") {
  ParseResult res;
  Lexer lex(text, file);
  auto tokens = lex.run(res.diags);
  detail::Parser p(std::move(tokens), res.diags);
  res.ast = p.parse_file();
  return res;
}

}  // namespace btw
