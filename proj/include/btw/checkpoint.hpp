#pragma once

#include <stdexcept>
#include <string>

#include "btw/engine.hpp"

namespace btw {

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what)
      : std::runtime_error(what) {}
};

namespace detail {

// Tagged value serialization: unlike scenario payloads, a checkpoint must
// round-trip the kind of every value without a schema at hand.
inline nlohmann::ordered_json value_to_ckpt(const Value& v);

inline nlohmann::ordered_json record_to_ckpt(const Record& r) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [n, fv] : r.fields) out.push_back({n, value_to_ckpt(fv)});
  return out;
}

inline nlohmann::ordered_json value_to_ckpt(const Value& v) {
  nlohmann::ordered_json j;
  j["k"] = to_string(v.kind());
  switch (v.kind()) {
    case ValueKind::Text: j["s"] = v.as_text(); break;
    case ValueKind::Record:
      j["r"] = v.as_record() ? record_to_ckpt(*v.as_record())
                             : nlohmann::ordered_json::array();
      break;
    default: j["n"] = v.num(); break;
  }
  return j;
}

inline Value value_from_ckpt(const nlohmann::json& j);

inline Record record_from_ckpt(const nlohmann::json& j) {
  Record r;
  for (const auto& f : j)
    r.fields.emplace_back(f.at(0).get<std::string>(), value_from_ckpt(f.at(1)));
  return r;
}

inline Value value_from_ckpt(const nlohmann::json& j) {
  auto kind = value_kind_from_name(j.at("k").get<std::string>());
  if (!kind && j.at("k") == "record")
    return Value::record(std::make_shared<Record>(record_from_ckpt(j.at("r"))));
  if (!kind) throw CheckpointError("unknown value kind in checkpoint");
  switch (*kind) {
    case ValueKind::Bool: return Value::boolean(j.at("n").get<std::int64_t>());
    case ValueKind::Int: return Value::integer(j.at("n").get<std::int64_t>());
    case ValueKind::Text: return Value::text(j.at("s").get<std::string>());
    case ValueKind::Date: return Value::date(j.at("n").get<std::int64_t>());
    case ValueKind::Time: return Value::time(j.at("n").get<std::int64_t>());
    case ValueKind::Timestamp:
      return Value::timestamp(j.at("n").get<std::int64_t>());
    case ValueKind::Duration:
      return Value::duration(j.at("n").get<std::int64_t>());
    case ValueKind::Record:
      return Value::record(
          std::make_shared<Record>(record_from_ckpt(j.at("r"))));
  }
  throw CheckpointError("unknown value kind in checkpoint");
}

inline nlohmann::ordered_json bindings_to_ckpt(
    const std::map<std::string, Value>& b) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [n, v] : b) out.push_back({n, value_to_ckpt(v)});
  return out;
}

inline std::map<std::string, Value> bindings_from_ckpt(
    const nlohmann::json& j) {
  std::map<std::string, Value> out;
  for (const auto& e : j)
    out.emplace(e.at(0).get<std::string>(), value_from_ckpt(e.at(1)));
  return out;
}

inline nlohmann::ordered_json effect_to_ckpt(const Effect& e) {
  nlohmann::ordered_json j;
  j["kind"] = static_cast<int>(e.kind);
  switch (e.kind) {
    case Effect::MessageOut:
      j["message"] = e.message;
      j["payload"] = record_to_ckpt(e.payload);
      j["dest"] = {{"kind", static_cast<int>(e.dest.kind)},
                   {"name", e.dest.name}};
      break;
    case Effect::VarSet:
      j["var"] = e.var;
      j["value"] = value_to_ckpt(e.value);
      j["had_old"] = e.had_old;
      if (e.had_old) j["old"] = value_to_ckpt(e.old_value);
      break;
    case Effect::StoreChanged: {
      nlohmann::ordered_json ops = nlohmann::ordered_json::array();
      for (const auto& op : e.ops)
        ops.push_back({{"kind", static_cast<int>(op.kind)},
                       {"store", op.store},
                       {"index", op.index},
                       {"before", record_to_ckpt(op.before)},
                       {"after", record_to_ckpt(op.after)}});
      j["ops"] = std::move(ops);
      break;
    }
  }
  return j;
}

inline Effect effect_from_ckpt(const nlohmann::json& j) {
  Effect e;
  e.kind = static_cast<Effect::Kind>(j.at("kind").get<int>());
  switch (e.kind) {
    case Effect::MessageOut:
      e.message = j.at("message").get<std::string>();
      e.payload = record_from_ckpt(j.at("payload"));
      e.dest.kind =
          static_cast<MessageDest::Kind>(j.at("dest").at("kind").get<int>());
      e.dest.name = j.at("dest").at("name").get<std::string>();
      break;
    case Effect::VarSet:
      e.var = j.at("var").get<std::string>();
      e.value = value_from_ckpt(j.at("value"));
      e.had_old = j.at("had_old").get<bool>();
      if (e.had_old) e.old_value = value_from_ckpt(j.at("old"));
      break;
    case Effect::StoreChanged:
      for (const auto& oj : j.at("ops")) {
        StoreOp op;
        op.kind = static_cast<StoreOp::Kind>(oj.at("kind").get<int>());
        op.store = oj.at("store").get<std::string>();
        op.index = oj.at("index").get<std::size_t>();
        op.before = record_from_ckpt(oj.at("before"));
        op.after = record_from_ckpt(oj.at("after"));
        e.ops.push_back(std::move(op));
      }
      break;
  }
  return e;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json checkpoint(const EngineState& st) {
  using detail::bindings_to_ckpt;
  using detail::effect_to_ckpt;
  using detail::record_to_ckpt;
  using detail::value_to_ckpt;
  nlohmann::ordered_json j;
  j["v"] = kCheckpointVersion;
  j["model_hash"] = st.model ? st.model->hash() : 0;
  j["seed"] = st.seed;
  j["draws"] = st.rng.draws;
  j["clock"] = st.clock;
  j["seq"] = st.seq;
  j["step_count"] = st.step_count;
  j["status"] = static_cast<int>(st.status);
  j["service_state"] = st.service_state;
  j["state_entered"] = st.state_entered;
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [f, t] : st.transition_history) arr.push_back({f, t});
    j["transitions"] = std::move(arr);
  }
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : st.frames)
      arr.push_back({{"id", f.id},
                     {"block", f.block},
                     {"owner", f.owner},
                     {"vars", bindings_to_ckpt(f.vars)},
                     {"acts", f.acts}});
    j["frames"] = std::move(arr);
  }
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& a : st.acts) {
      nlohmann::ordered_json ja;
      ja["id"] = a.id;
      ja["entity"] = a.entity;
      ja["frame"] = a.frame;
      ja["phase"] = static_cast<int>(a.phase);
      ja["activated_at"] = a.activated_at;
      ja["started_at"] = a.started_at;
      ja["completed_at"] = a.completed_at;
      ja["has_outcome"] = a.has_outcome;
      ja["outcome"] = a.outcome;
      ja["child_frame"] = a.child_frame;
      ja["resume_clause"] = a.resume_clause;
      ja["wait_service"] = a.wait_service;
      ja["wait_message"] = a.wait_message;
      ja["bindings"] = bindings_to_ckpt(a.bindings);
      auto jj = nlohmann::ordered_json::array();
      for (const auto& e : a.journal) jj.push_back(effect_to_ckpt(e));
      ja["journal"] = std::move(jj);
      ja["committed"] = a.committed;
      ja["undone"] = a.undone;
      ja["tokens"] = std::vector<int>(a.tokens.begin(), a.tokens.end());
      arr.push_back(std::move(ja));
    }
    j["acts"] = std::move(arr);
  }
  j["completion_order"] = st.completion_order;
  {
    auto obj = nlohmann::ordered_json::object();
    for (const auto& [name, buf] : st.buffers) {
      auto items = nlohmann::ordered_json::array();
      for (const auto& bm : buf.items())
        items.push_back({{"message", bm.message},
                         {"payload", value_to_ckpt(bm.payload)},
                         {"from", bm.from},
                         {"arrival", bm.arrival},
                         {"seq", bm.seq}});
      obj[name] = std::move(items);
    }
    j["buffers"] = std::move(obj);
    j["put_seq"] = st.put_seq;
  }
  {
    auto obj = nlohmann::ordered_json::object();
    for (const auto& [name, recs] : st.snapshot.stores) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& r : recs) arr.push_back(record_to_ckpt(r));
      obj[name] = std::move(arr);
    }
    j["stores"] = std::move(obj);
  }
  {
    nlohmann::ordered_json t;
    auto ex = nlohmann::ordered_json::object();
    for (const auto& [n, e] : st.temporal.executions) {
      nlohmann::ordered_json je{{"start", e.start}};
      if (e.end) je["end"] = *e.end;
      ex[n] = std::move(je);
    }
    t["executions"] = std::move(ex);
    auto ms = nlohmann::ordered_json::object();
    for (const auto& [n, f] : st.temporal.messages) {
      nlohmann::ordered_json jf;
      if (f.sent) jf["sent"] = *f.sent;
      if (f.received) jf["received"] = *f.received;
      ms[n] = std::move(jf);
    }
    t["messages"] = std::move(ms);
    t["state_entry"] = st.temporal.state_entry;
    t["outcomes"] = st.temporal.outcomes;
    j["temporal"] = std::move(t);
  }
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : st.eca) {
      nlohmann::ordered_json je;
      je["kind"] = static_cast<int>(e.kind);
      je["name"] = e.name;
      je["positive"] = e.positive;
      je["failure"] = e.failure;
      je["count"] = e.count;
      if (e.payload) je["payload"] = value_to_ckpt(*e.payload);
      arr.push_back(std::move(je));
    }
    j["eca"] = std::move(arr);
  }
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : st.replies)
      arr.push_back({{"service", r.service},
                     {"message", r.message},
                     {"payload", value_to_ckpt(r.payload)}});
    j["replies"] = std::move(arr);
  }
  {
    auto fc = nlohmann::ordered_json::array();
    for (const auto& [k, v] : st.fail_count) fc.push_back({k, v});
    j["fail_count"] = std::move(fc);
    j["run_count"] = st.run_count;
    auto ov = nlohmann::ordered_json::object();
    for (const auto& [d, m] : st.overrides) {
      auto inner = nlohmann::ordered_json::array();
      for (const auto& [occ, out] : m) inner.push_back({occ, out});
      ov[d] = std::move(inner);
    }
    j["overrides"] = std::move(ov);
  }
  j["quiesce_for"] = st.quiesce_for;
  j["quiesce_logged"] = st.quiesce_logged;
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : st.scenario.events)
      arr.push_back({{"t", e.t},
                     {"kind", static_cast<int>(e.kind)},
                     {"target", e.target},
                     {"payload", e.payload},
                     {"line", e.line}});
    j["scenario"] = std::move(arr);
    j["scenario_pos"] = st.scenario_pos;
  }
  {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : st.trace)
      arr.push_back({{"seq", e.seq},
                     {"clock", e.clock},
                     {"kind", static_cast<int>(e.kind)},
                     {"subject", e.subject},
                     {"detail", e.detail}});
    j["trace"] = std::move(arr);
  }
  return j;
}

// Takes the ordered document checkpoint() produced; a plain (key-sorted)
// json would reorder trace detail objects and break byte-level replay.
inline EngineState restore(const WorkflowModel& model,
                           const ConceptRegistry& registry,
                           const nlohmann::ordered_json& j) {
  using detail::bindings_from_ckpt;
  using detail::effect_from_ckpt;
  using detail::record_from_ckpt;
  using detail::value_from_ckpt;
  if (!j.is_object() || j.value("v", 0) != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version");
  if (j.value("model_hash", std::uint64_t{0}) != model.hash())
    throw CheckpointError("checkpoint was taken against a different model");
  EngineState st;
  st.model = &model;
  st.registry = &registry;
  st.seed = j.at("seed").get<std::uint64_t>();
  st.rng = SimRng(st.seed);
  auto draws = j.at("draws").get<std::uint64_t>();
  st.rng.gen.discard(draws);
  st.rng.draws = draws;
  st.clock = j.at("clock").get<std::int64_t>();
  st.seq = j.at("seq").get<std::uint64_t>();
  st.step_count = j.at("step_count").get<std::uint64_t>();
  st.status = static_cast<RunStatus>(j.at("status").get<int>());
  st.service_state = j.at("service_state").get<std::string>();
  st.state_entered = j.at("state_entered").get<std::int64_t>();
  for (const auto& e : j.at("transitions"))
    st.transition_history.emplace_back(e.at(0).get<std::string>(),
                                       e.at(1).get<std::string>());
  for (const auto& jf : j.at("frames")) {
    SimFrame f;
    f.id = jf.at("id").get<int>();
    f.block = jf.at("block").get<int>();
    f.owner = jf.at("owner").get<int>();
    f.vars = bindings_from_ckpt(jf.at("vars"));
    f.acts = jf.at("acts").get<std::vector<int>>();
    st.frames.push_back(std::move(f));
  }
  for (const auto& ja : j.at("acts")) {
    Activation a;
    a.id = ja.at("id").get<int>();
    a.entity = ja.at("entity").get<int>();
    a.frame = ja.at("frame").get<int>();
    a.phase = static_cast<Activation::Phase>(ja.at("phase").get<int>());
    a.activated_at = ja.at("activated_at").get<std::int64_t>();
    a.started_at = ja.at("started_at").get<std::int64_t>();
    a.completed_at = ja.at("completed_at").get<std::int64_t>();
    a.has_outcome = ja.at("has_outcome").get<bool>();
    a.outcome = ja.at("outcome").get<bool>();
    a.child_frame = ja.at("child_frame").get<int>();
    a.resume_clause = ja.at("resume_clause").get<int>();
    a.wait_service = ja.at("wait_service").get<std::string>();
    a.wait_message = ja.at("wait_message").get<std::string>();
    a.bindings = bindings_from_ckpt(ja.at("bindings"));
    for (const auto& je : ja.at("journal"))
      a.journal.push_back(effect_from_ckpt(je));
    a.committed = ja.at("committed").get<bool>();
    a.undone = ja.at("undone").get<bool>();
    for (const auto& t : ja.at("tokens")) a.tokens.insert(t.get<int>());
    st.acts.push_back(std::move(a));
  }
  st.completion_order = j.at("completion_order").get<std::vector<int>>();
  for (const auto& b : model.buffers)
    st.buffers.emplace(b.name, MessageBuffer(b.protocol, b.order_key));
  for (const auto& [name, items] : j.at("buffers").items()) {
    auto it = st.buffers.find(name);
    if (it == st.buffers.end())  // synthesised (inbox) buffers are FIFO
      it = st.buffers.emplace(name, MessageBuffer(BufferProtocol::Fifo)).first;
    for (const auto& ji : items) {
      BufferedMessage bm;
      bm.message = ji.at("message").get<std::string>();
      bm.payload = value_from_ckpt(ji.at("payload"));
      bm.from = ji.at("from").get<std::string>();
      bm.arrival = ji.at("arrival").get<std::int64_t>();
      bm.seq = ji.at("seq").get<std::uint64_t>();
      it->second.put(std::move(bm));
    }
  }
  st.put_seq = j.at("put_seq").get<std::uint64_t>();
  for (const auto& [name, arr] : j.at("stores").items()) {
    auto& recs = st.snapshot.stores[name];
    for (const auto& jr : arr) recs.push_back(record_from_ckpt(jr));
  }
  {
    const auto& t = j.at("temporal");
    for (const auto& [n, je] : t.at("executions").items()) {
      TemporalIndex::Execution e;
      e.start = je.at("start").get<std::int64_t>();
      if (je.contains("end")) e.end = je.at("end").get<std::int64_t>();
      st.temporal.executions[n] = e;
    }
    for (const auto& [n, jf] : t.at("messages").items()) {
      TemporalIndex::MessageFact f;
      if (jf.contains("sent")) f.sent = jf.at("sent").get<std::int64_t>();
      if (jf.contains("received"))
        f.received = jf.at("received").get<std::int64_t>();
      st.temporal.messages[n] = f;
    }
    st.temporal.state_entry =
        t.at("state_entry").get<std::map<std::string, std::int64_t>>();
    st.temporal.outcomes =
        t.at("outcomes").get<std::map<std::string, bool>>();
  }
  for (const auto& je : j.at("eca")) {
    EcaEvent e;
    e.kind = static_cast<AstEventSpec::Kind>(je.at("kind").get<int>());
    e.name = je.at("name").get<std::string>();
    e.positive = je.at("positive").get<bool>();
    e.failure = je.at("failure").get<bool>();
    e.count = je.at("count").get<int>();
    if (je.contains("payload")) e.payload = value_from_ckpt(je.at("payload"));
    st.eca.push_back(std::move(e));
  }
  for (const auto& jr : j.at("replies")) {
    PendingReply r;
    r.service = jr.at("service").get<std::string>();
    r.message = jr.at("message").get<std::string>();
    r.payload = value_from_ckpt(jr.at("payload"));
    st.replies.push_back(std::move(r));
  }
  for (const auto& e : j.at("fail_count"))
    st.fail_count[e.at(0).get<int>()] = e.at(1).get<int>();
  st.run_count = j.at("run_count").get<std::map<std::string, int>>();
  for (const auto& [d, inner] : j.at("overrides").items())
    for (const auto& e : inner)
      st.overrides[d][e.at(0).get<int>()] = e.at(1).get<bool>();
  st.quiesce_for = j.at("quiesce_for").get<int>();
  st.quiesce_logged = j.at("quiesce_logged").get<bool>();
  for (const auto& je : j.at("scenario")) {
    ScenarioEvent e;
    e.t = je.at("t").get<std::int64_t>();
    e.kind = static_cast<ScenarioEvent::Kind>(je.at("kind").get<int>());
    e.target = je.at("target").get<std::string>();
    e.payload = je.at("payload");
    e.line = je.at("line").get<int>();
    st.scenario.events.push_back(std::move(e));
  }
  st.scenario_pos = j.at("scenario_pos").get<std::size_t>();
  for (const auto& je : j.at("trace")) {
    TraceEntry e;
    e.seq = je.at("seq").get<std::uint64_t>();
    e.clock = je.at("clock").get<std::int64_t>();
    e.kind = static_cast<TraceKind>(je.at("kind").get<int>());
    e.subject = je.at("subject").get<std::string>();
    e.detail = je.at("detail");
    st.trace.push_back(std::move(e));
  }
  return st;
}

}  // namespace btw
