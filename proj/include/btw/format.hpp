#pragma once

#include <sstream>
#include <string>

#include "btw/ast.hpp"

namespace btw {
namespace detail {

class Printer {
 public:
  std::string print(const SpecAst& ast) {
    print_scope(ast.scope);
    for (const auto& s : ast.schemas) print_schema(s);
    for (const auto& p : ast.processes) {
      line("");
      out_ << "process " << q(p.name) << " {\n";
      indent_ = 1;
      print_body_items(p.body);
      indent_ = 0;
      out_ << "}\n";
    }
    if (ast.service) print_service(*ast.service);
    if (ast.recovery) print_recovery(*ast.recovery);
    return out_.str();
  }

  // Precedence-aware expression printing; parens only where required.
  static std::string expr(const ExprPtr& e) { return expr_prec(e, 0); }

 private:
  std::ostringstream out_;
  int indent_ = 0;

  static std::string q(const std::string& s) { return "\"" + s + "\""; }

  void line(const std::string& s) {
    for (int i = 0; i < indent_; ++i) out_ << "  ";
    out_ << s << "\n";
  }

  // --- expressions --------------------------------------------------------

  static int prec_of(BinOp op) {
    switch (op) {
      case BinOp::Or: return 1;
      case BinOp::And: return 2;
      case BinOp::Eq:
      case BinOp::Ne:
      case BinOp::Lt:
      case BinOp::Le:
      case BinOp::Gt:
      case BinOp::Ge: return 3;
      case BinOp::Add:
      case BinOp::Sub: return 4;
      case BinOp::Mul:
      case BinOp::Div: return 5;
    }
    return 0;
  }

  static const char* op_sym(BinOp op) {
    switch (op) {
      case BinOp::Or: return "or";
      case BinOp::And: return "and";
      case BinOp::Eq: return "=";
      case BinOp::Ne: return "!=";
      case BinOp::Lt: return "<";
      case BinOp::Le: return "<=";
      case BinOp::Gt: return ">";
      case BinOp::Ge: return ">=";
      case BinOp::Add: return "+";
      case BinOp::Sub: return "-";
      case BinOp::Mul: return "*";
      case BinOp::Div: return "/";
    }
    return "?";
  }

  static std::string literal_text(const Value& v) {
    switch (v.kind()) {
      case ValueKind::Bool: return v.num() ? "true" : "false";
      case ValueKind::Int: return std::to_string(v.num());
      case ValueKind::Text: return q(v.as_text());
      case ValueKind::Date: return "@" + format_date(v.num());
      case ValueKind::Time: return "@" + format_time(v.num());
      case ValueKind::Timestamp:
        return "@" + format_date(v.num() / kSecondsPerDay) + "T" +
               format_time(((v.num() % kSecondsPerDay) + kSecondsPerDay) %
                           kSecondsPerDay);
      case ValueKind::Duration: {
        std::int64_t n = v.num();
        if (n != 0 && n % kSecondsPerDay == 0)
          return std::to_string(n / kSecondsPerDay) + " days";
        if (n != 0 && n % 3600 == 0) return std::to_string(n / 3600) + " hours";
        if (n != 0 && n % 60 == 0) return std::to_string(n / 60) + " minutes";
        return std::to_string(n) + " seconds";
      }
      case ValueKind::Record: return value_to_string(v);
    }
    return "?";
  }

  static std::string temporal_name(TemporalFn fn) {
    switch (fn) {
      case TemporalFn::StartDate: return "start_date";
      case TemporalFn::EndDate: return "end_date";
      case TemporalFn::StartTime: return "start_time";
      case TemporalFn::EndTime: return "end_time";
      case TemporalFn::SendDate: return "send_date";
      case TemporalFn::RecDate: return "rec_date";
      case TemporalFn::StateEntered: return "state_entered";
      case TemporalFn::OutcomePositive: return "outcome";
    }
    return "?";
  }

  static std::string expr_prec(const ExprPtr& e, int min_prec) {
    if (!e) return "true";
    switch (e->node) {
      case Expr::Literal: return literal_text(e->literal);
      case Expr::VarRef: return e->name;
      case Expr::Now: return "now()";
      case Expr::Today: return "today()";
      case Expr::Payload: return "payload(" + q(e->name) + ")";
      case Expr::Temporal:
        return temporal_name(e->fn) + "(" + q(e->name) + ")";
      case Expr::FieldGet: return expr_prec(e->lhs, 7) + "." + e->name;
      case Expr::Unary: {
        std::string s = e->un == UnOp::Not
                            ? "not " + expr_prec(e->lhs, 6)
                            : "-" + expr_prec(e->lhs, 7);
        // `not` sits between `and` and comparisons
        int p = e->un == UnOp::Not ? 2 : 6;
        return p < min_prec ? "(" + s + ")" : s;
      }
      case Expr::Binary: {
        int p = prec_of(e->bin);
        // Comparisons don't chain in the grammar, so a comparison operand
        // of a comparison needs parentheses on either side.
        int lhs_min = p == 3 ? p + 1 : p;
        std::string s = expr_prec(e->lhs, lhs_min) + " " + op_sym(e->bin) +
                        " " + expr_prec(e->rhs, p + 1);
        return p < min_prec ? "(" + s + ")" : s;
      }
      case Expr::Quant: {
        std::string s = std::string(e->forall ? "forall " : "exists ") +
                        e->var + " in " + q(e->name);
        if (e->rhs) s += " where " + expr_prec(e->rhs, 1);
        return min_prec > 0 ? "(" + s + ")" : s;
      }
      case Expr::First: {
        std::string s = "first " + q(e->name);
        if (e->rhs) s += " where " + expr_prec(e->rhs, 1);
        return min_prec > 0 ? "(" + s + ")" : s;
      }
    }
    return "?";
  }

  // --- declarations -------------------------------------------------------

  void print_scope(const AstScope& sc) {
    out_ << "scope {\n";
    indent_ = 1;
    for (const auto& o : sc.orgs) {
      std::string s = "org " + q(o.name);
      if (o.parent) s += " in " + q(*o.parent);
      line(s);
    }
    for (const auto& r : sc.roles) line("role " + q(r.name));
    for (const auto& a : sc.actors) {
      std::string s = "actor " + q(a.name);
      if (a.org) s += " in " + q(*a.org);
      if (!a.roles.empty()) {
        s += " roles ";
        for (std::size_t i = 0; i < a.roles.size(); ++i)
          s += (i ? ", " : "") + q(a.roles[i]);
      }
      line(s);
    }
    for (const auto& s : sc.services)
      line("service " + q(s.name) + (s.external ? " external" : ""));
    for (const auto& m : sc.messages)
      line("message " + q(m.name) + (m.external ? " external" : "") +
           " schema " + q(m.schema));
    for (const auto& st : sc.stores) {
      std::string s = "store " + q(st.name) + " schema ";
      for (std::size_t i = 0; i < st.schemas.size(); ++i)
        s += (i ? ", " : "") + q(st.schemas[i]);
      if (st.org) s += " in " + q(*st.org);
      if (st.fragment) s += " fragment " + q(*st.fragment);
      line(s);
    }
    for (const auto& b : sc.buffers) {
      std::string s = "buffer " + q(b.name) + " protocol ";
      switch (b.protocol) {
        case BufferProtocol::Fifo: s += "fifo"; break;
        case BufferProtocol::Lifo: s += "lifo"; break;
        case BufferProtocol::Random: s += "random"; break;
        case BufferProtocol::Predicate:
          s += "predicate(" + expr(b.order_key) + ")";
          break;
      }
      if (!b.accepts.empty()) {
        s += " accepts ";
        for (std::size_t i = 0; i < b.accepts.size(); ++i)
          s += (i ? ", " : "") + q(b.accepts[i]);
      }
      line(s);
    }
    indent_ = 0;
    out_ << "}\n";
  }

  void print_schema(const AstSchemaDecl& s) {
    line("");
    out_ << "schema " << q(s.name) << (s.material ? " material" : "")
         << " {\n";
    indent_ = 1;
    for (const auto& [n, k] : s.fields)
      line(n + ": " + to_string(k) + ",");
    indent_ = 0;
    out_ << "}\n";
  }

  static std::string dest_text(const MessageDest& d) {
    switch (d.kind) {
      case MessageDest::EntityTarget: return "entity " + q(d.name);
      case MessageDest::LocalService:
      case MessageDest::RemoteService: return "service " + q(d.name);
      case MessageDest::Buffer: return "buffer " + q(d.name);
      case MessageDest::Environment: return "environment";
    }
    return "environment";
  }

  void print_record_lit(
      const std::vector<std::pair<std::string, ExprPtr>>& fields) {
    out_ << "{ ";
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ", ";
      out_ << fields[i].first << ": " << expr(fields[i].second);
    }
    out_ << " }";
  }

  void print_action(const ActionStmt& a) {
    for (int i = 0; i < indent_; ++i) out_ << "  ";
    switch (a.kind) {
      case ActionStmt::Add:
        out_ << "add " << q(a.store) << " ";
        print_record_lit(a.fields);
        break;
      case ActionStmt::Copy:
        out_ << "copy " << q(a.message) << " to " << q(a.store);
        break;
      case ActionStmt::Set:
        out_ << "set " << a.var << " = " << expr(a.fields.at(0).second);
        break;
      case ActionStmt::Send:
        out_ << "send " << q(a.message) << " ";
        if (!a.fields.empty()) {
          print_record_lit(a.fields);
          out_ << " ";
        }
        out_ << "to " << dest_text(a.dest);
        break;
      case ActionStmt::BulkSend:
        out_ << "send " << q(a.message) << " to each " << a.var << " in "
             << q(a.store);
        if (a.where) out_ << " where " << expr(a.where);
        out_ << " ";
        print_record_lit(a.fields);
        break;
      case ActionStmt::Remove:
        out_ << "remove " << a.var << " from " << q(a.store) << " where "
             << expr(a.where);
        break;
      case ActionStmt::Update:
        out_ << "update " << a.var << " in " << q(a.store) << " where "
             << expr(a.where) << " ";
        print_record_lit(a.fields);
        break;
    }
    out_ << "\n";
  }

  static std::string duration_text(std::int64_t secs) {
    if (secs != 0 && secs % kSecondsPerDay == 0)
      return std::to_string(secs / kSecondsPerDay) + " days";
    if (secs != 0 && secs % 3600 == 0)
      return std::to_string(secs / 3600) + " hours";
    if (secs != 0 && secs % 60 == 0)
      return std::to_string(secs / 60) + " minutes";
    return std::to_string(secs) + " seconds";
  }

  void print_entity(const AstEntity& e) {
    const char* kw = e.kind == ConceptKind::Decision     ? "decision"
                     : e.kind == ConceptKind::Synchroniser ? "sync"
                                                           : "process";
    bool empty = !e.initial && !e.exclusive && !e.role && !e.unit &&
                 e.duration == 0 && !e.timeout && e.hcis.empty() &&
                 e.messaging.empty() && !e.pre && !e.post &&
                 e.actions.empty() && e.rules.empty() &&
                 e.terminators.empty() && e.triggers.empty() && !e.body;
    if (empty) {
      line(std::string(kw) + " " + q(e.name));
      return;
    }
    for (int i = 0; i < indent_; ++i) out_ << "  ";
    out_ << kw << " " << q(e.name) << " {\n";
    ++indent_;
    if (e.initial) line("initial");
    if (e.exclusive) line("exclusive");
    if (e.role) line("role " + q(*e.role));
    if (e.unit) line("unit " + q(*e.unit));
    if (e.duration != 0) line("duration " + duration_text(e.duration));
    if (e.timeout) line("timeout " + duration_text(*e.timeout));
    for (const auto& h : e.hcis)
      line("hci " + q(h.name) +
           (h.schema ? " schema " + q(*h.schema) : std::string()));
    for (const auto& m : e.messaging) {
      switch (m.mode) {
        case AstMessaging::Receive:
          line("receive " + q(m.message) +
               (m.from ? " from " + q(*m.from) : std::string()));
          break;
        case AstMessaging::Send:
          line("send " + q(m.message) + " to " + dest_text(m.dest));
          break;
        case AstMessaging::Call: {
          std::string s = "call " + q(m.service);
          if (!m.call_send.empty()) s += " send " + q(m.call_send);
          s += " reply " + q(m.call_reply);
          line(s);
          break;
        }
      }
    }
    if (e.pre) line("pre " + expr(e.pre));
    if (e.post) line("post " + expr(e.post));
    if (!e.actions.empty()) {
      line("action {");
      ++indent_;
      for (const auto& a : e.actions) print_action(a);
      --indent_;
      line("}");
    }
    for (const auto& r : e.rules)
      line(std::string("rule ") + (r.positive ? "positive " : "negative ") +
           expr(r.predicate));
    for (const auto& t : e.terminators) {
      std::string s = std::string("terminate on ") +
                      (t.on_positive ? "positive" : "negative");
      if (t.abort) s += " abort";
      if (t.condition) s += " if " + expr(t.condition);
      if (t.yields) s += std::string(" yields ") +
                         (*t.yields ? "positive" : "negative");
      line(s);
    }
    for (const auto& t : e.triggers) {
      std::string s = "triggers " + q(t.target);
      if (t.on_positive)
        s += std::string(" on ") + (*t.on_positive ? "positive" : "negative");
      line(s);
    }
    if (e.body) print_body_items(*e.body);
    --indent_;
    line("}");
  }

  void print_body_items(const AstBody& b) {
    if (!b.uses.empty()) {
      std::string s = "uses ";
      for (std::size_t i = 0; i < b.uses.size(); ++i)
        s += (i ? ", " : "") + q(b.uses[i]);
      line(s);
    }
    for (const auto& [n, k] : b.vars)
      line("var " + n + ": " + to_string(k));
    for (const auto& c : b.commit_scopes) {
      std::string s = "commit scope " + q(c.name) + " { ";
      for (std::size_t i = 0; i < c.members.size(); ++i)
        s += (i ? ", " : "") + q(c.members[i]);
      s += " }";
      line(s);
    }
    for (const auto& e : b.entities) print_entity(e);
  }

  static std::string state_ref(const std::string& s) {
    return (s == "birth" || s == "death") ? s : q(s);
  }

  void print_service(const AstServiceModel& sm) {
    line("");
    out_ << "service model " << q(sm.name) << " {\n";
    indent_ = 1;
    if (sm.has_birth) line("state birth");
    for (const auto& s : sm.states) line("state " + q(s));
    if (sm.has_death) line("state death");
    for (const auto& t : sm.transitions) {
      for (int i = 0; i < indent_; ++i) out_ << "  ";
      out_ << "transition " << state_ref(t.from) << " -> "
           << state_ref(t.to) << " {\n";
      ++indent_;
      line("when " + event_text(t.when));
      if (t.condition) line("if " + expr(t.condition));
      if (!t.actions.empty()) {
        std::string s = "then ";
        for (std::size_t i = 0; i < t.actions.size(); ++i)
          s += (i ? ", " : "") + eca_text(t.actions[i]);
        line(s);
      }
      --indent_;
      line("}");
    }
    indent_ = 0;
    out_ << "}\n";
  }

  static std::string event_text(const AstEventSpec& ev) {
    switch (ev.kind) {
      case AstEventSpec::MsgFrom: return "msg_from " + q(ev.name);
      case AstEventSpec::MsgTo: return "msg_to " + q(ev.name);
      case AstEventSpec::DbState: return "db_state " + expr(ev.expr);
      case AstEventSpec::DecisionEnd:
        return "decision_end " + q(ev.name) +
               (ev.positive ? " positive" : " negative");
      case AstEventSpec::ProcessStart: return "process_start " + q(ev.name);
      case AstEventSpec::ProcessEnd: return "process_end " + q(ev.name);
      case AstEventSpec::ProcessStartFailed:
        return "process_start_failed " + q(ev.name) + " " +
               std::to_string(ev.threshold);
      case AstEventSpec::Abort:
        return std::string("abort ") +
               (ev.failure ? "failure" : "nonfailure");
      case AstEventSpec::Timer: return "timer " + expr(ev.expr);
    }
    return "?";
  }

  static std::string eca_text(const AstEcaAction& a) {
    switch (a.kind) {
      case AstEcaAction::Forward:
        return "forward " + q(a.message) + " to " + q(a.target);
      case AstEcaAction::Trigger: return "trigger " + q(a.target);
      case AstEcaAction::Send:
        return "send " + q(a.message) + " to " + q(a.target);
      case AstEcaAction::None: return "none";
    }
    return "none";
  }

  void print_recovery(const AstRecovery& rec) {
    line("");
    out_ << "recovery {\n";
    indent_ = 1;
    for (const auto& e : rec.entries) {
      for (int i = 0; i < indent_; ++i) out_ << "  ";
      out_ << "entity " << q(e.entity) << " {\n";
      ++indent_;
      if (!e.ladder.empty()) {
        std::string s = "redo ";
        for (std::size_t i = 0; i < e.ladder.size(); ++i) {
          const auto& c = e.ladder[i];
          if (i) s += ", ";
          s += "contingency ";
          s += c.threshold ? std::to_string(*c.threshold)
                           : std::string("unbounded");
          s += " -> ";
          s += c.target.empty() ? std::string("self") : q(c.target);
        }
        line(s);
      }
      switch (e.rollback) {
        case AstRecoveryEntry::Unset: break;
        case AstRecoveryEntry::Undo: line("rollback undo"); break;
        case AstRecoveryEntry::Null: line("rollback none"); break;
        case AstRecoveryEntry::Compensate:
          line("rollback compensate " + q(e.compensation));
          break;
      }
      --indent_;
      line("}");
    }
    indent_ = 0;
    out_ << "}\n";
  }
};

}  // namespace detail

inline std::string format_spec(const SpecAst& ast) {
  return detail::Printer().print(ast);
}

inline std::string format_expr(const ExprPtr& e) {
  return detail::Printer::expr(e);
}

}  // namespace btw
