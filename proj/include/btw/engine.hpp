#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "btw/action.hpp"
#include "btw/buffer.hpp"
#include "btw/lower.hpp"
#include "btw/model.hpp"
#include "btw/scenario.hpp"
#include "btw/trace.hpp"

namespace btw {

enum class RunStatus { Running, Death, Stuck, BudgetExhausted };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Death: return "death";
    case RunStatus::Stuck: return "stuck";
    case RunStatus::BudgetExhausted: return "budget-exhausted";
  }
  return "?";
}

class EngineError : public std::runtime_error {
 public:
  enum Code { ModelInvalid, MissingCompensation };
  EngineError(Code c, const std::string& what)
      : std::runtime_error(what), code_(c) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct EcaEvent {
  AstEventSpec::Kind kind = AstEventSpec::MsgFrom;
  std::string name;      // message / decision / entity
  bool positive = true;  // DecisionEnd
  bool failure = true;   // Abort
  int count = 0;         // ProcessStartFailed
  std::optional<Value> payload;
};

struct PendingReply {
  std::string service;
  std::string message;
  Value payload;
};

struct Activation {
  int id = -1;
  int entity = -1;  // resolved (never an alias)
  int frame = -1;
  enum Phase { Waiting, Running, SuspendedSync, Done, Cancelled, Failed };
  Phase phase = Waiting;
  std::int64_t activated_at = 0;
  std::int64_t started_at = 0;
  std::int64_t completed_at = 0;
  bool has_outcome = false;
  bool outcome = true;
  int child_frame = -1;
  int resume_clause = -1;  // messaging clause a sync call suspended at
  std::string wait_service, wait_message;
  std::map<std::string, Value> bindings;  // msg payloads and the like
  std::vector<Effect> journal;
  bool committed = false;
  bool undone = false;
  std::set<int> tokens;  // synchroniser: source entities that delivered
};

struct SimFrame {
  int id = -1;
  int block = -1;
  int owner = -1;  // owning activation id, -1 for the root frame
  std::map<std::string, Value> vars;
  std::vector<int> acts;
};

struct EngineState {
  const WorkflowModel* model = nullptr;
  const ConceptRegistry* registry = nullptr;
  Scenario scenario;
  std::size_t scenario_pos = 0;
  std::uint64_t seed = 0;
  SimRng rng;
  std::int64_t clock = 0;
  std::uint64_t seq = 0;
  std::uint64_t step_count = 0;
  RunStatus status = RunStatus::Running;

  std::string service_state;  // empty when the model has no service model
  std::int64_t state_entered = 0;
  std::vector<std::pair<std::string, std::string>> transition_history;

  std::vector<SimFrame> frames;
  std::vector<Activation> acts;
  std::vector<int> completion_order;  // activation ids, completion order
  std::map<std::string, MessageBuffer> buffers;
  std::uint64_t put_seq = 0;
  StoreSnapshot snapshot;
  TemporalIndex temporal;
  std::deque<EcaEvent> eca;
  std::deque<PendingReply> replies;
  std::map<int, int> fail_count;            // entity -> failed starts
  std::map<std::string, int> run_count;     // decision occurrences
  std::map<std::string, std::map<int, bool>> overrides;  // -1 = any
  int quiesce_for = -1;  // exclusive activation everything waits on
  bool quiesce_logged = false;

  Trace trace;
};

namespace detail {

class Sim {
 public:
  explicit Sim(EngineState& st) : st(st), m(*st.model) {}

  EngineState& st;
  const WorkflowModel& m;

  // --- plumbing -----------------------------------------------------------

  void emit(TraceKind kind, const std::string& subject,
            nlohmann::ordered_json detail = {}) {
    TraceEntry e;
    e.seq = st.seq++;
    e.clock = st.clock;
    e.kind = kind;
    e.subject = subject;
    e.detail = std::move(detail);
    st.trace.push_back(std::move(e));
  }

  const ModelEntity& ent(int idx) const { return m.entities[idx]; }

  EvalContext eval_ctx(const std::map<std::string, Value>* bindings) const {
    EvalContext ctx;
    ctx.snapshot = &st.snapshot;
    ctx.temporal = &st.temporal;
    ctx.bindings = bindings;
    ctx.clock = st.clock;
    return ctx;
  }

  // Evaluation that cannot crash the scheduler: an unbound name at runtime
  // reads as "undefined", the same third value a missing temporal fact gives.
  std::optional<bool> pred(const ExprPtr& e, const EvalContext& ctx) const {
    try {
      return eval_predicate(e, ctx);
    } catch (const EvalError&) {
      return std::nullopt;
    }
  }

  ActionEnv action_env(const ModelEntity& e) const {
    ActionEnv env;
    env.schemas = &m.schemas;
    for (const auto& s : m.stores)
      if (!s.schemas.empty()) env.store_schemas[s.name] = s.schemas.front();
    for (const auto& msg : m.messages)
      env.message_schemas[msg.name] = msg.schema;
    env.is_decision = e.kind == ConceptKind::Decision;
    return env;
  }

  const Schema* schema_of_message(const std::string& msg) const {
    auto it = m.message_index.find(msg);
    if (it == m.message_index.end()) return nullptr;
    auto sit = m.schemas.find(m.messages[it->second].schema);
    return sit == m.schemas.end() ? nullptr : &sit->second;
  }

  // --- frames and activation ----------------------------------------------

  int new_frame(int block, int owner_act) {
    SimFrame f;
    f.id = static_cast<int>(st.frames.size());
    f.block = block;
    f.owner = owner_act;
    for (const auto& [n, k] : m.blocks[block].vars) (void)n, (void)k;
    st.frames.push_back(std::move(f));
    return st.frames.back().id;
  }

  // Most recent live frame instantiating `block`; -1 if none.
  int find_frame(int block) const {
    for (int i = static_cast<int>(st.frames.size()) - 1; i >= 0; --i)
      if (st.frames[i].block == block) return i;
    return -1;
  }

  // Frame an activation of `entity` belongs in, creating the enclosing
  // composite chain (without initial tokens) when nothing is active yet.
  int frame_for(int entity) {
    const ModelEntity& e = ent(entity);
    int f = find_frame(e.block);
    if (f >= 0) return f;
    if (e.parent < 0) return new_frame(e.block, -1);
    int owner = m.resolve(e.parent);
    int pf = frame_for(owner);
    int act = find_act(owner, pf);
    if (act < 0) {
      act = make_act(owner, pf);
      Activation& a = st.acts[act];
      a.phase = Activation::Running;
      a.started_at = st.clock;
      a.child_frame = new_frame(ent(owner).body, act);
      emit(TraceKind::EntityStarted, ent(owner).name);
      st.temporal.note_start(ent(owner).name, st.clock);
      push_event(AstEventSpec::ProcessStart, ent(owner).name);
      return a.child_frame;
    }
    Activation& a = st.acts[act];
    if (a.child_frame < 0) a.child_frame = new_frame(e.block, act);
    return a.child_frame;
  }

  int find_act(int entity, int frame) const {
    for (int i = static_cast<int>(st.frames[frame].acts.size()) - 1; i >= 0;
         --i) {
      int id = st.frames[frame].acts[i];
      if (st.acts[id].entity == entity) return id;
    }
    return -1;
  }

  int make_act(int entity, int frame) {
    Activation a;
    a.id = static_cast<int>(st.acts.size());
    a.entity = entity;
    a.frame = frame;
    a.activated_at = st.clock;
    st.acts.push_back(std::move(a));
    st.frames[frame].acts.push_back(st.acts.back().id);
    return st.acts.back().id;
  }

  // Creates (or revives) a waiting activation for an entity.
  int activate(int entity, int frame = -1) {
    entity = m.resolve(entity);
    if (frame < 0) frame = frame_for(entity);
    int id = find_act(entity, frame);
    if (id >= 0) {
      Activation& a = st.acts[id];
      if (a.phase == Activation::Waiting ||
          a.phase == Activation::Running ||
          a.phase == Activation::SuspendedSync)
        return id;
    }
    return make_act(entity, frame);
  }

  // --- messaging ----------------------------------------------------------

  void buffer_put(const std::string& buffer, const std::string& msg,
                  Value payload, const std::string& from) {
    auto it = st.buffers.find(buffer);
    if (it == st.buffers.end()) {
      MessageBuffer b(BufferProtocol::Fifo);
      it = st.buffers.emplace(buffer, std::move(b)).first;
    }
    BufferedMessage bm;
    bm.message = msg;
    bm.payload = std::move(payload);
    bm.from = from;
    bm.arrival = st.clock;
    bm.seq = st.put_seq++;
    it->second.put(std::move(bm));
    emit(TraceKind::BufferPut, buffer, {{"message", msg}});
  }

  void route_message(const std::string& from, const std::string& msg,
                     Value payload, const MessageDest& dest) {
    nlohmann::ordered_json detail;
    detail["from"] = from;
    switch (dest.kind) {
      case MessageDest::EntityTarget: detail["to"] = dest.name; break;
      case MessageDest::Buffer: detail["to"] = dest.name; break;
      case MessageDest::LocalService:
      case MessageDest::RemoteService:
        detail["to"] = dest.name;
        detail["service"] = true;
        break;
      case MessageDest::Environment: detail["to"] = "environment"; break;
    }
    emit(TraceKind::MessageSent, msg, detail);
    st.temporal.note_sent(msg, st.clock);
    switch (dest.kind) {
      case MessageDest::EntityTarget: {
        buffer_put(inbox_name(dest.name, msg), msg, std::move(payload), from);
        auto it = m.entity_index.find(dest.name);
        if (it != m.entity_index.end()) activate(it->second);
        break;
      }
      case MessageDest::Buffer:
        buffer_put(dest.name, msg, std::move(payload), from);
        break;
      case MessageDest::LocalService:
      case MessageDest::RemoteService:
      case MessageDest::Environment: {
        EcaEvent ev;
        ev.kind = AstEventSpec::MsgTo;
        ev.name = msg;
        ev.payload = std::move(payload);
        st.eca.push_back(std::move(ev));
        break;
      }
    }
  }

  void push_event(AstEventSpec::Kind kind, const std::string& name,
                  bool positive = true, bool failure = true, int count = 0,
                  std::optional<Value> payload = std::nullopt) {
    EcaEvent ev;
    ev.kind = kind;
    ev.name = name;
    ev.positive = positive;
    ev.failure = failure;
    ev.count = count;
    ev.payload = std::move(payload);
    st.eca.push_back(std::move(ev));
  }

  // --- readiness ----------------------------------------------------------

  std::vector<std::pair<int, int>> incoming_edges(int sync) const {
    // static trigger edges into a synchroniser, as (source entity, edge)
    std::vector<std::pair<int, int>> in;
    const ModelEntity& s = ent(sync);
    for (int idx : m.blocks[s.block].entities) {
      const ModelEntity& e = m.entities[idx];
      for (std::size_t k = 0; k < e.triggers.size(); ++k)
        if (e.triggers[k].target == sync)
          in.emplace_back(idx, static_cast<int>(k));
    }
    return in;
  }

  bool sync_ready(const Activation& a) const {
    auto in = incoming_edges(a.entity);
    if (in.empty()) return false;
    for (const auto& [src, k] : in)
      if (!a.tokens.count(src)) return false;
    return true;
  }

  // Peek-bindings for the pre-condition: front of each awaited buffer.
  bool bind_peek(const ModelEntity& e,
                 std::map<std::string, Value>& bindings) const {
    for (const auto& c : e.messaging) {
      if (c.kind != MsgClause::AsyncIn) continue;
      auto it = st.buffers.find(c.buffer);
      if (it == st.buffers.end() || it->second.empty()) return false;
      bindings["msg:" + c.message] = it->second.items().front().payload;
    }
    return true;
  }

  bool ready(const Activation& a) const {
    if (a.phase != Activation::Waiting) return false;
    const ModelEntity& e = ent(a.entity);
    if (e.kind == ConceptKind::Synchroniser) return sync_ready(a);
    std::map<std::string, Value> bindings = frame_bindings(a.frame);
    if (!bind_peek(e, bindings)) return false;
    if (e.pre) {
      auto ok = pred(e.pre, eval_ctx(&bindings));
      if (!ok || !*ok) return false;  // undefined collapses to false here
    }
    return true;
  }

  // A false pre-condition aborts once the declared wait budget (default 0)
  // elapses; waiting on messages alone never times out.
  bool pre_timed_out(const Activation& a) const {
    const ModelEntity& e = ent(a.entity);
    if (!e.pre || a.phase != Activation::Waiting) return false;
    std::map<std::string, Value> bindings = frame_bindings(a.frame);
    if (!bind_peek(e, bindings)) return false;
    auto ok = pred(e.pre, eval_ctx(&bindings));
    if (ok && *ok) return false;
    return st.clock - a.activated_at >= e.timeout.value_or(0);
  }

  std::map<std::string, Value> frame_bindings(int frame) const {
    std::map<std::string, Value> out;
    for (int f = frame; f >= 0;
         f = st.frames[f].owner >= 0 ? st.acts[st.frames[f].owner].frame : -1)
      for (const auto& [n, v] : st.frames[f].vars) out.emplace(n, v);
    return out;
  }

  // --- starting and finishing ---------------------------------------------

  void start(int act_id) {
    Activation& a = st.acts[act_id];
    const ModelEntity& e = ent(a.entity);
    a.phase = Activation::Running;
    a.started_at = st.clock;
    a.bindings = frame_bindings(a.frame);
    emit(TraceKind::EntityStarted, e.name);
    st.temporal.note_start(e.name, st.clock);
    push_event(AstEventSpec::ProcessStart, e.name);
    if (e.is_composite()) {
      a.child_frame = new_frame(e.body, act_id);
      for (int idx : m.blocks[e.body].entities)
        if (m.entities[idx].initial) activate(idx, a.child_frame);
      return;
    }
    run_clauses(act_id, 0);
  }

  void run_clauses(int act_id, int from) {
    const ModelEntity& e = ent(st.acts[act_id].entity);
    for (std::size_t i = from; i < e.messaging.size(); ++i) {
      const MsgClause& c = e.messaging[i];
      switch (c.kind) {
        case MsgClause::AsyncIn: {
          auto it = st.buffers.find(c.buffer);
          if (it == st.buffers.end()) break;
          auto msg = it->second.take(st.rng);
          if (!msg) break;  // readiness guaranteed it; defensive anyway
          emit(TraceKind::BufferTake, c.buffer, {{"message", msg->message}});
          emit(TraceKind::MessageReceived, msg->message,
               {{"by", e.name}});
          st.temporal.note_received(msg->message, st.clock);
          st.acts[act_id].bindings["msg:" + msg->message] = msg->payload;
          break;
        }
        case MsgClause::AsyncOut: {
          Value payload = Value::record(std::make_shared<Record>());
          route_message(e.name, c.message, std::move(payload), c.dest);
          break;
        }
        case MsgClause::SyncCall: {
          MessageDest d;
          d.kind = MessageDest::RemoteService;
          d.name = c.service;
          route_message(e.name, c.call_send,
                        Value::record(std::make_shared<Record>()), d);
          Activation& a = st.acts[act_id];
          a.phase = Activation::SuspendedSync;
          a.resume_clause = static_cast<int>(i);
          a.wait_service = c.service;
          a.wait_message = c.call_reply;
          return;
        }
      }
    }
    finish_atomic(act_id);
  }

  void finish_atomic(int act_id) {
    const ModelEntity& e = ent(st.acts[act_id].entity);
    // actions run over the current snapshot; effects form the journal
    if (!e.actions.empty()) {
      try {
        auto [snap, effects] = exec_action(e.actions, st.snapshot,
                                           st.acts[act_id].bindings,
                                           action_env(e), &st.temporal,
                                           st.clock);
        st.snapshot = std::move(snap);
        for (const auto& eff : effects) {
          if (eff.kind == Effect::MessageOut)
            route_message(e.name, eff.message,
                          Value::record(std::make_shared<Record>(eff.payload)),
                          eff.dest);
          if (eff.kind == Effect::VarSet) write_var(st.acts[act_id].frame,
                                                    eff.var, eff.value);
        }
        st.acts[act_id].journal = std::move(effects);
      } catch (const ActionError& err) {
        emit(TraceKind::AbortRaised, e.name,
             {{"kind", "nonfailure"}, {"reason", err.what()}});
        fail_activation(act_id);
        rollback_pass();
        push_event(AstEventSpec::Abort, e.name, true, false);
        return;
      }
    }
    // The completion timestamp is fixed before the post-condition runs so
    // end_date/end_time facts about this very execution are defined.
    {
      Activation& a0 = st.acts[act_id];
      a0.completed_at = std::max(st.clock, a0.started_at + e.duration);
      st.clock = std::max(st.clock, a0.completed_at);
      st.temporal.note_end(e.name, a0.completed_at);
    }
    // post-condition
    if (e.post) {
      auto ok = pred(e.post, eval_ctx(&st.acts[act_id].bindings));
      if (!ok || !*ok) {
        if (is_temporal_expr(e.post))
          emit(TraceKind::TemporalViolation, e.name,
               {{"constraint", "post"}});
        raise_nf(a_entity_name(act_id), act_id);
        return;
      }
    }
    // outcome
    bool outcome = true;
    if (e.kind == ConceptKind::Decision) {
      auto o = decide(e, st.acts[act_id].bindings);
      if (!o) {  // StuckDecision surfaces as a nonfailure abort
        emit(TraceKind::AbortRaised, e.name,
             {{"kind", "nonfailure"}, {"reason", "stuck decision"}});
        fail_activation(act_id);
        rollback_pass();
        push_event(AstEventSpec::Abort, e.name, true, false);
        return;
      }
      outcome = *o;
    } else {
      for (const auto& r : e.rules) {
        auto v = pred(r.predicate,
                                eval_ctx(&st.acts[act_id].bindings));
        if (v && *v) {
          outcome = r.positive;
          break;
        }
      }
    }
    complete(act_id, outcome);
  }

  std::string a_entity_name(int act_id) const {
    return ent(st.acts[act_id].entity).name;
  }

  void write_var(int frame, const std::string& var, const Value& v) {
    for (int f = frame; f >= 0;
         f = st.frames[f].owner >= 0 ? st.acts[st.frames[f].owner].frame
                                     : -1) {
      for (const auto& [n, k] : m.blocks[st.frames[f].block].vars) {
        if (n == var) {
          st.frames[f].vars[var] = v;
          return;
        }
      }
    }
  }

  std::optional<bool> decide(const ModelEntity& e,
                             const std::map<std::string, Value>& bindings) {
    int occurrence = ++st.run_count[e.name];
    auto oit = st.overrides.find(e.name);
    if (oit != st.overrides.end()) {
      auto hit = oit->second.find(occurrence);
      if (hit == oit->second.end()) hit = oit->second.find(-1);
      if (hit != oit->second.end()) return hit->second;
    }
    bool pos = false, neg = false;
    for (const auto& r : e.rules) {
      auto v = pred(r.predicate, eval_ctx(&bindings));
      if (v && *v) (r.positive ? pos : neg) = true;
    }
    if (pos != neg) return pos;
    if (pos && neg) return st.rng.next(2) == 0;
    return std::nullopt;  // no rule true
  }

  void fail_activation(int act_id) {
    Activation& a = st.acts[act_id];
    undo_journal(a);
    a.phase = Activation::Failed;
    if (st.quiesce_for == act_id) st.quiesce_for = -1;
  }

  void complete(int act_id, bool outcome) {
    Activation& a = st.acts[act_id];
    const ModelEntity& e = ent(a.entity);
    a.completed_at = std::max(st.clock, a.started_at + e.duration);
    st.clock = std::max(st.clock, a.completed_at);
    a.phase = Activation::Done;
    a.has_outcome = true;
    a.outcome = outcome;
    st.completion_order.push_back(act_id);
    emit(TraceKind::EntityCompleted, e.name,
         {{"outcome", outcome ? "positive" : "negative"}});
    st.temporal.note_end(e.name, a.completed_at);
    if (e.kind == ConceptKind::Decision) {
      emit(TraceKind::DecisionOutcome, e.name,
           {{"outcome", outcome ? "positive" : "negative"}});
      st.temporal.outcomes[e.name] = outcome;
      push_event(AstEventSpec::DecisionEnd, e.name, outcome);
    } else {
      push_event(AstEventSpec::ProcessEnd, e.name);
    }
    if (st.quiesce_for == act_id) st.quiesce_for = -1;
    try_commit(act_id);
    // trigger successors
    for (const auto& t : e.triggers) {
      if (t.target < 0) continue;
      if (t.on_positive && *t.on_positive != outcome) continue;
      int tgt = m.resolve(t.target);
      if (ent(tgt).kind == ConceptKind::Synchroniser) {
        int sid = activate(tgt, a.frame);
        st.acts[sid].tokens.insert(a.entity);
      } else {
        activate(tgt, a.frame);
      }
    }
    // terminators may end the enclosing composite
    for (const auto& t : e.terminators) {
      if (t.on_positive != outcome) continue;
      if (t.condition) {
        auto v = pred(t.condition, eval_ctx(&a.bindings));
        if (!v || !*v) continue;
      }
      fire_terminator(act_id, t);
      break;
    }
  }

  void fire_terminator(int act_id, const AstTerminator& t) {
    const Activation& a = st.acts[act_id];
    int owner = st.frames[a.frame].owner;
    if (owner < 0) return;  // terminator at top level: nothing to end
    if (t.abort) {
      for (int id : st.frames[a.frame].acts) {
        Activation& sib = st.acts[id];
        if (id != act_id && sib.phase != Activation::Done &&
            sib.phase != Activation::Failed)
          sib.phase = Activation::Cancelled;
      }
    }
    if (st.acts[owner].phase == Activation::Running)
      complete(owner, t.yields.value_or(a.outcome));
  }

  // --- commit -------------------------------------------------------------

  void try_commit(int act_id) {
    Activation& a = st.acts[act_id];
    const ModelEntity& e = ent(a.entity);
    const ModelBlock& blk = m.blocks[st.frames[a.frame].block];
    for (const auto& cs : blk.commit_scopes) {
      bool member = false;
      for (int mi : cs.members) member |= mi == a.entity;
      if (!member) continue;
      // commit fires only when every scope member has completed here
      std::vector<int> done_acts;
      for (int mi : cs.members) {
        int id = find_act(mi, a.frame);
        if (id < 0 || st.acts[id].phase != Activation::Done) return;
        done_acts.push_back(id);
      }
      for (int id : done_acts) st.acts[id].committed = true;
      emit(TraceKind::Commit, cs.name, {{"scope", cs.name}});
      push_event(AstEventSpec::DbState, "");
      return;
    }
    if (e.kind == ConceptKind::Decision ||
        e.kind == ConceptKind::Synchroniser) {
      a.committed = true;  // nothing journalled; no commit grain of its own
      return;
    }
    a.committed = true;
    emit(TraceKind::Commit, e.name, {{"scope", e.name}});
    push_event(AstEventSpec::DbState, "");
  }

  // --- aborts and recovery ------------------------------------------------

  void undo_journal(Activation& a) {
    if (a.journal.empty() || a.undone) return;
    for (auto it = a.journal.rbegin(); it != a.journal.rend(); ++it) {
      if (it->kind == Effect::StoreChanged) invert_ops(st.snapshot, it->ops);
      if (it->kind == Effect::VarSet) {
        if (it->had_old)
          write_var(a.frame, it->var, it->old_value);
        else
          st.frames[a.frame].vars.erase(it->var);
      }
    }
    a.undone = true;
    a.journal.clear();
  }

  // Failure abort: the start failed; count it, walk the ladder.
  void raise_f(int entity, int frame_hint = -1) {
    entity = m.resolve(entity);
    const ModelEntity& e = ent(entity);
    int frame = frame_hint >= 0 ? frame_hint : frame_for(entity);
    int act = find_act(entity, frame);
    if (act < 0 || st.acts[act].phase == Activation::Done ||
        st.acts[act].phase == Activation::Failed ||
        st.acts[act].phase == Activation::Cancelled)
      act = make_act(entity, frame);
    int count = ++st.fail_count[entity];
    emit(TraceKind::AbortRaised, e.name, {{"kind", "failure"}});
    emit(TraceKind::RedoAttempt, e.name, {{"attempt", count}});
    push_event(AstEventSpec::ProcessStartFailed, e.name, true, true, count);
    auto rit = m.recovery.find(entity);
    if (rit == m.recovery.end()) return;  // plain retry
    for (const auto& rung : rit->second.ladder) {
      if (!rung.threshold) return;  // unbounded: keep retrying (forcible)
      if (*rung.threshold == count) {
        if (rung.target >= 0 && rung.target != entity) {
          emit(TraceKind::ContingencyFired, e.name,
               {{"fallback", ent(rung.target).name}});
          st.acts[find_act(entity, frame) >= 0 ? find_act(entity, frame)
                                               : act]
              .phase = Activation::Cancelled;
          activate(rung.target, frame);
        } else {
          emit(TraceKind::ContingencyFired, e.name, {{"fallback", "self"}});
        }
        return;
      }
    }
  }

  // Nonfailure abort: rollback pass over work done in the current service
  // state, then let the service react.
  void raise_nf(const std::string& subject, int failed_act = -1) {
    emit(TraceKind::AbortRaised, subject, {{"kind", "nonfailure"}});
    if (failed_act >= 0) fail_activation(failed_act);
    // cancel everything still in flight in the subject's frame
    int frame = failed_act >= 0 ? st.acts[failed_act].frame : -1;
    if (frame < 0) {
      auto it = m.entity_index.find(subject);
      if (it != m.entity_index.end()) {
        int blk = ent(m.resolve(it->second)).block;
        frame = find_frame(blk);
      }
    }
    if (frame >= 0) {
      for (int id : st.frames[frame].acts) {
        Activation& a = st.acts[id];
        if (a.phase == Activation::Waiting ||
            a.phase == Activation::SuspendedSync)
          a.phase = Activation::Cancelled;
      }
    }
    rollback_pass();
    push_event(AstEventSpec::Abort, subject, true, false);
  }

  void rollback_pass() {
    // reverse completion order, limited to the current service state's span
    for (auto it = st.completion_order.rbegin();
         it != st.completion_order.rend(); ++it) {
      Activation& a = st.acts[*it];
      if (a.started_at < st.state_entered && !st.service_state.empty())
        break;
      const ModelEntity& e = ent(a.entity);
      if (e.kind == ConceptKind::Decision) continue;  // never rolled back
      if (a.undone) continue;
      if (!a.committed) {
        if (!a.journal.empty()) {
          undo_journal(a);
          emit(TraceKind::UndoApplied, e.name);
        }
        continue;
      }
      auto rit = m.recovery.find(a.entity);
      if (rit != m.recovery.end() &&
          rit->second.committed == ModelRecovery::Compensate) {
        if (rit->second.compensation < 0)
          throw EngineError(EngineError::MissingCompensation,
                            "no compensation entity for '" + e.name + "'");
        emit(TraceKind::CompensationStarted, e.name,
             {{"compensation", ent(rit->second.compensation).name}});
        activate(rit->second.compensation);
      }
      a.undone = true;  // each completed execution rolls back at most once
    }
  }

  // --- ECA ----------------------------------------------------------------

  bool event_matches(const ModelTransition& t, const EcaEvent& ev) {
    if (t.from != st.service_state) return false;
    if (t.when.kind != ev.kind) return false;
    switch (t.when.kind) {
      case AstEventSpec::MsgFrom:
      case AstEventSpec::MsgTo: return t.when.name == ev.name;
      case AstEventSpec::DbState: {
        if (!t.when.expr) return false;
        auto v = pred(t.when.expr, eval_ctx(nullptr));
        return v && *v;
      }
      case AstEventSpec::Timer: {
        if (!t.when.expr) return false;
        auto v = pred(t.when.expr, eval_ctx(nullptr));
        return v && *v;
      }
      case AstEventSpec::DecisionEnd:
        return t.when.name == ev.name && t.when.positive == ev.positive;
      case AstEventSpec::ProcessStart:
      case AstEventSpec::ProcessEnd: return t.when.name == ev.name;
      case AstEventSpec::ProcessStartFailed:
        return t.when.name == ev.name && t.when.threshold == ev.count;
      case AstEventSpec::Abort: return t.when.failure == ev.failure;
    }
    return false;
  }

  std::vector<int> dispatch(const EcaEvent& ev) {
    if (!m.service || st.service_state.empty()) return {};
    std::vector<int> matched;
    for (const auto& t : m.service->transitions) {
      if (!event_matches(t, ev)) continue;
      if (t.condition) {
        auto v = pred(t.condition, eval_ctx(nullptr));
        if (!v || !*v) continue;
      }
      matched.push_back(t.rule_id);
    }
    if (matched.empty()) return {};
    const ModelTransition& t = m.service->transitions[matched.front() - 1];
    std::vector<int> shadowed(matched.begin() + 1, matched.end());
    if (t.to != t.from) {
      nlohmann::ordered_json d;
      d["from"] = t.from;
      d["to"] = t.to;
      d["rule"] = t.rule_id;
      if (!shadowed.empty()) d["shadowed"] = shadowed;
      emit(TraceKind::StateTransition, m.service->name, d);
      st.service_state = t.to;
      st.state_entered = st.clock;
      st.temporal.state_entry[t.to] = st.clock;
      st.transition_history.emplace_back(t.from, t.to);
    }
    for (const auto& a : t.actions) run_eca_action(a, ev);
    if (st.service_state == "death" && st.status == RunStatus::Running) {
      emit(TraceKind::Death, m.service->name);
      st.status = RunStatus::Death;
    }
    return {matched.front()};
  }

  void run_eca_action(const EcaAct& a, const EcaEvent& ev) {
    switch (a.kind) {
      case AstEcaAction::Forward: {
        if (a.target_entity < 0) return;
        const ModelEntity& tgt = ent(a.target_entity);
        Value payload = ev.payload ? *ev.payload
                                   : Value::record(std::make_shared<Record>());
        bool has_inbox = false;
        for (const auto& c : tgt.messaging)
          has_inbox |= c.kind == MsgClause::AsyncIn && c.message == a.message;
        int frame = frame_for(a.target_entity);
        if (has_inbox)
          buffer_put(inbox_name(tgt.name, a.message), a.message, payload,
                     "service");
        int id = activate(a.target_entity, frame);
        if (!has_inbox)
          st.acts[id].bindings["msg:" + a.message] = payload;
        break;
      }
      case AstEcaAction::Trigger:
        if (a.target_entity >= 0) activate(a.target_entity);
        break;
      case AstEcaAction::Send: {
        MessageDest d;
        d.kind = MessageDest::RemoteService;
        d.name = a.target_name;
        route_message("service", a.message,
                      Value::record(std::make_shared<Record>()), d);
        break;
      }
      case AstEcaAction::None: break;
    }
  }

  // --- composite sweep ----------------------------------------------------

  // A frame whose members have all settled completes its owner.
  int sweep_candidate() const {
    for (const auto& f : st.frames) {
      if (f.owner < 0) continue;
      if (st.acts[f.owner].phase != Activation::Running) continue;
      bool live = false, ready_member = false;
      for (int id : f.acts) {
        const Activation& a = st.acts[id];
        if (a.phase == Activation::Running ||
            a.phase == Activation::SuspendedSync)
          live = true;
        if (a.phase == Activation::Waiting && ready(a)) ready_member = true;
        if (a.phase == Activation::Waiting &&
            ent(a.entity).kind == ConceptKind::Synchroniser && sync_ready(a))
          ready_member = true;
      }
      if (!live && !ready_member && !f.acts.empty()) return f.id;
    }
    return -1;
  }

  void complete_frame(int frame_id) {
    SimFrame& f = st.frames[frame_id];
    int owner = f.owner;
    const ModelEntity& oe = ent(st.acts[owner].entity);
    // leftover waiting members can no longer run
    for (int id : f.acts)
      if (st.acts[id].phase == Activation::Waiting)
        st.acts[id].phase = Activation::Cancelled;
    if (oe.kind == ConceptKind::Decision) {
      // a complex decision must end through a terminator
      emit(TraceKind::AbortRaised, oe.name,
           {{"kind", "nonfailure"}, {"reason", "stuck decision"}});
      fail_activation(owner);
      rollback_pass();
      push_event(AstEventSpec::Abort, oe.name, true, false);
      return;
    }
    complete(owner, true);
  }

  // --- scenario -----------------------------------------------------------

  void consume_scenario() {
    const ScenarioEvent& ev = st.scenario.events[st.scenario_pos++];
    bool advanced = ev.t > st.clock;
    st.clock = std::max(st.clock, ev.t);
    switch (ev.kind) {
      case ScenarioEvent::Advance: break;
      case ScenarioEvent::Msg: {
        std::string msg = ev.payload.value("message", std::string{});
        Value payload = Value::record(std::make_shared<Record>());
        if (const Schema* sc = schema_of_message(msg))
          payload = record_from_json(ev.payload.value("fields",
                                                      nlohmann::json::object()),
                                     *sc);
        if (!ev.target.empty() && st.buffers.count(ev.target) &&
            !m.entity_index.count(ev.target)) {
          buffer_put(ev.target, msg, payload, "environment");
        } else if (!ev.target.empty() && m.entity_index.count(ev.target)) {
          MessageDest d;
          d.kind = MessageDest::EntityTarget;
          d.name = ev.target;
          emit(TraceKind::MessageSent, msg,
               {{"from", "environment"}, {"to", ev.target}});
          buffer_put(inbox_name(ev.target, msg), msg, payload, "environment");
          activate(m.entity_index.at(ev.target));
        }
        push_event(AstEventSpec::MsgFrom, msg, true, true, 0, payload);
        break;
      }
      case ScenarioEvent::Reply: {
        PendingReply r;
        r.service = ev.target;
        r.message = ev.payload.value("message", std::string{});
        r.payload = Value::record(std::make_shared<Record>());
        if (const Schema* sc = schema_of_message(r.message))
          r.payload = record_from_json(
              ev.payload.value("fields", nlohmann::json::object()), *sc);
        st.replies.push_back(std::move(r));
        break;
      }
      case ScenarioEvent::Override: {
        int occ = -1;
        if (ev.payload.contains("occurrence") &&
            ev.payload["occurrence"].is_number_integer())
          occ = ev.payload["occurrence"].get<int>();
        st.overrides[ev.target][occ] = ev.payload.value("outcome", true);
        break;
      }
      case ScenarioEvent::FAbort: {
        auto it = m.entity_index.find(ev.target);
        if (it != m.entity_index.end()) raise_f(it->second);
        break;
      }
      case ScenarioEvent::NfAbort: raise_nf(ev.target); break;
    }
    if (advanced) push_event(AstEventSpec::Timer, "");
  }

  // --- the micro-step -----------------------------------------------------

  bool micro_step() {
    // 1. resume a sync-suspended entity whose reply has arrived
    for (std::size_t ri = 0; ri < st.replies.size(); ++ri) {
      const PendingReply& r = st.replies[ri];
      for (auto& a : st.acts) {
        if (a.phase != Activation::SuspendedSync) continue;
        if (a.wait_service != r.service || a.wait_message != r.message)
          continue;
        int act_id = a.id;
        PendingReply taken = r;
        st.replies.erase(st.replies.begin() +
                         static_cast<std::ptrdiff_t>(ri));
        Activation& act = st.acts[act_id];
        emit(TraceKind::MessageReceived, taken.message,
             {{"by", ent(act.entity).name}, {"from", taken.service}});
        st.temporal.note_received(taken.message, st.clock);
        act.bindings["msg:" + taken.message] = taken.payload;
        act.phase = Activation::Running;
        run_clauses(act_id, act.resume_clause + 1);
        return true;
      }
    }
    // 2. deliver one ECA event
    if (!st.eca.empty()) {
      EcaEvent ev = std::move(st.eca.front());
      st.eca.pop_front();
      dispatch(ev);
      return true;
    }
    // 3. fire a ready synchroniser
    for (auto& a : st.acts) {
      if (a.phase != Activation::Waiting) continue;
      if (ent(a.entity).kind != ConceptKind::Synchroniser) continue;
      if (!sync_ready(a)) continue;
      if (st.quiesce_for >= 0 && st.quiesce_for != a.id) continue;
      int id = a.id;
      st.acts[id].phase = Activation::Running;
      st.acts[id].started_at = st.clock;
      emit(TraceKind::EntityStarted, ent(st.acts[id].entity).name);
      st.temporal.note_start(ent(st.acts[id].entity).name, st.clock);
      complete(id, true);
      return true;
    }
    // 4. start one ready entity (declaration order), or time out a wait
    {
      int pick = -1;
      for (const auto& a : st.acts) {
        if (a.phase != Activation::Waiting) continue;
        if (ent(a.entity).kind == ConceptKind::Synchroniser) continue;
        if (pre_timed_out(a)) {
          int id = a.id;
          if (is_temporal_expr(ent(a.entity).pre))
            emit(TraceKind::TemporalViolation, ent(a.entity).name,
                 {{"constraint", "pre"}});
          raise_nf(a_entity_name(id), id);
          return true;
        }
        if (!ready(a)) continue;
        if (st.quiesce_for >= 0 && st.quiesce_for != a.id) continue;
        if (ent(a.entity).exclusive && st.quiesce_for < 0) {
          bool busy = false;
          for (const auto& other : st.acts)
            busy |= other.id != a.id &&
                    other.phase == Activation::SuspendedSync;
          if (busy) {
            if (!st.quiesce_logged) {
              emit(TraceKind::Quiesce, ent(a.entity).name);
              st.quiesce_logged = true;
            }
            st.quiesce_for = a.id;
            continue;  // wait for the suspended work to finish
          }
        }
        if (pick < 0 || a.entity < st.acts[pick].entity ||
            (a.entity == st.acts[pick].entity && a.id < st.acts[pick].id))
          pick = a.id;
      }
      if (pick >= 0) {
        if (ent(st.acts[pick].entity).exclusive && st.quiesce_for < 0 &&
            !st.quiesce_logged)
          emit(TraceKind::Quiesce, ent(st.acts[pick].entity).name);
        if (ent(st.acts[pick].entity).exclusive) {
          st.quiesce_for = pick;
          st.quiesce_logged = true;
        }
        start(pick);
        if (st.quiesce_for == pick &&
            st.acts[pick].phase == Activation::Done) {
          st.quiesce_for = -1;
          st.quiesce_logged = false;
        }
        return true;
      }
    }
    // 4.5 complete a settled composite
    {
      int f = sweep_candidate();
      if (f >= 0) {
        complete_frame(f);
        return true;
      }
    }
    // 5. consume the next scenario injection
    if (st.scenario_pos < st.scenario.events.size()) {
      consume_scenario();
      return true;
    }
    return false;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Public operations

inline EngineState init_instance(const WorkflowModel& model,
                                 const ConceptRegistry& registry,
                                 Scenario scenario, std::uint64_t seed) {
  if (!model.validated)
    throw EngineError(EngineError::ModelInvalid,
                      "simulation requires a validated model");
  EngineState st;
  st.model = &model;
  st.registry = &registry;
  st.scenario = std::move(scenario);
  st.seed = seed;
  st.rng = SimRng(seed);
  for (const auto& b : model.buffers)
    st.buffers.emplace(b.name, MessageBuffer(b.protocol, b.order_key));
  if (model.service) {
    st.service_state = "birth";
    st.state_entered = 0;
    st.temporal.state_entry["birth"] = 0;
  }
  detail::Sim sim(st);
  for (int root : model.roots) {
    int f = sim.new_frame(root, -1);
    for (int idx : model.blocks[root].entities)
      if (model.entities[idx].initial) sim.activate(idx, f);
  }
  return st;
}

// One scheduling micro-step. Returns the trace entries it emitted.
inline std::vector<TraceEntry> step(EngineState& st) {
  if (st.status != RunStatus::Running) return {};
  std::size_t before = st.trace.size();
  detail::Sim sim(st);
  bool progressed = sim.micro_step();
  ++st.step_count;
  if (!progressed) {
    if (!st.model->service || st.service_state.empty()) {
      sim.emit(TraceKind::Death, "");
      st.status = RunStatus::Death;
    } else if (st.service_state == "death") {
      st.status = RunStatus::Death;
    } else {
      st.status = RunStatus::Stuck;
    }
  }
  return {st.trace.begin() + static_cast<std::ptrdiff_t>(before),
          st.trace.end()};
}

inline RunStatus run(EngineState& st, std::uint64_t max_steps) {
  std::uint64_t steps = 0;
  while (st.status == RunStatus::Running && steps < max_steps) {
    step(st);
    ++steps;
  }
  if (st.status == RunStatus::Running) st.status = RunStatus::BudgetExhausted;
  return st.status;
}

inline std::vector<int> dispatch_eca(EngineState& st, const EcaEvent& ev) {
  detail::Sim sim(st);
  return sim.dispatch(ev);
}

inline void raise_abort(EngineState& st, bool failure,
                        const std::string& entity) {
  detail::Sim sim(st);
  if (failure) {
    auto it = st.model->entity_index.find(entity);
    if (it != st.model->entity_index.end()) sim.raise_f(it->second);
  } else {
    sim.raise_nf(entity);
  }
}

}  // namespace btw
