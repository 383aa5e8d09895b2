#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "btw/checkpoint.hpp"
#include "btw/engine.hpp"
#include "btw/lower.hpp"
#include "btw/parser.hpp"
#include "btw/validate.hpp"

namespace fs = std::filesystem;

using btw::EngineState;
using btw::RunStatus;
using btw::Scenario;
using btw::TraceEntry;
using btw::TraceKind;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Loaded {
  btw::LowerResult lowered;
};

Loaded load(const char* name) {
  fs::path p = fs::path(BTW_FIXTURE_DIR) / name;
  auto parsed = btw::parse(slurp(p), name);
  REQUIRE(parsed.ok());
  Loaded l{btw::lower(parsed.ast)};
  REQUIRE(l.lowered.ok());
  auto diags = btw::validate(l.lowered.registry, l.lowered.model);
  REQUIRE(!btw::has_errors(diags));
  return l;
}

Scenario scenario(const char* name) {
  fs::path p = fs::path(BTW_FIXTURE_DIR) / "scenarios" / name;
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<btw::Diagnostic> diags;
  auto sc = btw::load_scenario(in, name, diags);
  REQUIRE(sc.has_value());
  REQUIRE(diags.empty());
  return *sc;
}

std::vector<const TraceEntry*> entries(const EngineState& st, TraceKind k) {
  std::vector<const TraceEntry*> out;
  for (const auto& e : st.trace)
    if (e.kind == k) out.push_back(&e);
  return out;
}

// The state the service was in when it transitioned to death.
std::string final_named_state(const EngineState& st) {
  for (auto it = st.trace.rbegin(); it != st.trace.rend(); ++it)
    if (it->kind == TraceKind::StateTransition &&
        it->detail.value("to", "") == "death")
      return it->detail.value("from", "");
  return "";
}

}  // namespace

TEST_CASE("happy path drives the service model to death via title issue") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("happy.jsonl"), 0);
  CHECK(btw::run(st, 10000) == RunStatus::Death);
  CHECK(final_named_state(st) == "Title issued");

  // The service walked the expected states in order.
  std::vector<std::string> states;
  for (auto* e : entries(st, TraceKind::StateTransition))
    states.push_back(e->detail.value("to", ""));
  std::vector<std::string> want = {"Lodged", "Initial review passed",
                                   "Offer made", "Title issued", "death"};
  CHECK(states == want);
  // Every completed entity started, and no aborts were raised.
  CHECK(entries(st, TraceKind::AbortRaised).empty());
  CHECK(!entries(st, TraceKind::Commit).empty());
}

TEST_CASE("an overridden decision sends the case to rejection") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("reject.jsonl"), 0);
  CHECK(btw::run(st, 10000) == RunStatus::Death);
  CHECK(final_named_state(st) == "Application rejected");
  // The override flipped "Reject Application?" to positive.
  bool flipped = false;
  for (auto* e : entries(st, TraceKind::DecisionOutcome))
    if (e->subject == "Reject Application?")
      flipped = e->detail.value("outcome", "") == "positive";
  CHECK(flipped);
}

TEST_CASE("a non-failure abort rolls back in reverse completion order") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("rollback.jsonl"), 0);
  btw::run(st, 10000);

  auto aborts = entries(st, TraceKind::AbortRaised);
  REQUIRE(!aborts.empty());
  CHECK(aborts[0]->detail.value("kind", "") == "nonfailure");

  // Two compensations, most recent completion first.
  auto comps = entries(st, TraceKind::CompensationStarted);
  REQUIRE(comps.size() == 2);
  CHECK(comps[0]->subject == "Seek Views");
  CHECK(comps[0]->detail.value("compensation", "") ==
        "Closure Rejection Notification");
  CHECK(comps[1]->subject == "Preparation");
  CHECK(comps[1]->detail.value("compensation", "") == "Revert Preparation");

  // Decisions are never rolled back.
  for (auto* e : entries(st, TraceKind::UndoApplied))
    CHECK(e->subject.find('?') == std::string::npos);
  for (auto* e : comps) CHECK(e->subject.find('?') == std::string::npos);

  // The abort transition lands the case in rejection.
  auto trans = entries(st, TraceKind::StateTransition);
  REQUIRE(!trans.empty());
  CHECK(trans.back()->detail.value("to", "") == "Application rejected");
}

TEST_CASE("late replies violate the gazettal post-condition") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("temporal_post.jsonl"), 0);
  btw::run(st, 10000);
  auto v = entries(st, TraceKind::TemporalViolation);
  REQUIRE(!v.empty());
  CHECK(v[0]->subject == "Seek Views");
  CHECK(v[0]->detail.value("constraint", "") == "post");
  CHECK(!entries(st, TraceKind::AbortRaised).empty());
}

TEST_CASE("a stale inspection slot violates the pre-condition window") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("temporal_pre.jsonl"), 0);
  btw::run(st, 10000);
  auto v = entries(st, TraceKind::TemporalViolation);
  REQUIRE(!v.empty());
  CHECK(v[0]->subject == "Site Inspection");
  CHECK(v[0]->detail.value("constraint", "") == "pre");
}

TEST_CASE("contingency ladder: bounded rungs fire at their thresholds") {
  auto l = load("ladder.btw");
  // Inject failures against "Flaky" until both bounded rungs have fired.
  std::string ev;
  for (int i = 0; i < 50; ++i)
    ev += R"({"t":0,"kind":"f_abort","target":"Flaky"})" "\n";
  std::vector<btw::Diagnostic> diags;
  auto sc = btw::load_scenario_string(ev, "inline", diags);
  REQUIRE(sc.has_value());
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry, *sc, 0);
  btw::run(st, 100000);

  CHECK(entries(st, TraceKind::RedoAttempt).size() == 50);
  auto fired = entries(st, TraceKind::ContingencyFired);
  REQUIRE(fired.size() == 2);
  CHECK(fired[0]->detail.value("fallback", "") == "Fallback A");
  CHECK(fired[1]->detail.value("fallback", "") == "Fallback B");
  // Each rung fires right after its threshold's redo attempt.
  auto attempts_before = [&](const TraceEntry* mark) {
    int n = 0;
    for (const auto& e : st.trace) {
      if (&e == mark) break;
      if (e.kind == TraceKind::RedoAttempt) ++n;
    }
    return n;
  };
  CHECK(attempts_before(fired[0]) == 2);
  CHECK(attempts_before(fired[1]) == 5);
  // Both fallbacks actually ran.
  bool a = false, b = false;
  for (auto* e : entries(st, TraceKind::EntityStarted)) {
    a |= e->subject == "Fallback A";
    b |= e->subject == "Fallback B";
  }
  CHECK(a);
  CHECK(b);
}

TEST_CASE("equal seeds replay byte-identical traces") {
  auto l = load("road_closures.btw");
  for (const char* sc : {"happy.jsonl", "rollback.jsonl"}) {
    auto a = btw::init_instance(l.lowered.model, l.lowered.registry,
                                scenario(sc), 7);
    auto b = btw::init_instance(l.lowered.model, l.lowered.registry,
                                scenario(sc), 7);
    btw::run(a, 10000);
    btw::run(b, 10000);
    CHECK(a.status == b.status);
    CHECK(btw::trace_to_string(a.trace) == btw::trace_to_string(b.trace));
  }
}

TEST_CASE("checkpoint and restore continue identically") {
  auto l = load("road_closures.btw");
  auto full = btw::init_instance(l.lowered.model, l.lowered.registry,
                                 scenario("rollback.jsonl"), 3);

  // Reference run straight through.
  auto ref = btw::init_instance(l.lowered.model, l.lowered.registry,
                                scenario("rollback.jsonl"), 3);
  btw::run(ref, 10000);

  // Stop partway, snapshot, and restore into a fresh state.
  for (int i = 0; i < 25 && full.status == RunStatus::Running; ++i)
    btw::step(full);
  auto snap = btw::checkpoint(full);
  auto resumed = btw::restore(l.lowered.model, l.lowered.registry, snap);
  CHECK(resumed.clock == full.clock);
  CHECK(resumed.trace.size() == full.trace.size());

  btw::run(full, 10000);
  btw::run(resumed, 10000);
  CHECK(full.status == ref.status);
  CHECK(resumed.status == ref.status);
  CHECK(btw::trace_to_string(full.trace) == btw::trace_to_string(ref.trace));
  CHECK(btw::trace_to_string(resumed.trace) ==
        btw::trace_to_string(ref.trace));
}

TEST_CASE("checkpoints refuse a mismatched model") {
  auto a = load("road_closures.btw");
  auto b = load("ladder.btw");
  auto st = btw::init_instance(a.lowered.model, a.lowered.registry,
                               scenario("happy.jsonl"), 0);
  btw::step(st);
  auto snap = btw::checkpoint(st);
  CHECK_THROWS_AS(btw::restore(b.lowered.model, b.lowered.registry, snap),
                  btw::CheckpointError);
  auto bad = snap;
  bad["v"] = 999;
  CHECK_THROWS_AS(btw::restore(a.lowered.model, a.lowered.registry, bad),
                  btw::CheckpointError);
}

TEST_CASE("simulation requires a validated model") {
  fs::path p = fs::path(BTW_FIXTURE_DIR) / "road_closures.btw";
  auto parsed = btw::parse(slurp(p), "m");
  REQUIRE(parsed.ok());
  auto lowered = btw::lower(parsed.ast);
  REQUIRE(lowered.ok());
  // validate() was never called.
  CHECK_THROWS_AS(btw::init_instance(lowered.model, lowered.registry,
                                     Scenario{}, 0),
                  btw::EngineError);
}

TEST_CASE("a step budget that is too small reports exhaustion") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("happy.jsonl"), 0);
  CHECK(btw::run(st, 3) == RunStatus::BudgetExhausted);
}

TEST_CASE("an empty scenario starves the worked model into a stuck state") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               Scenario{}, 0);
  CHECK(btw::run(st, 10000) == RunStatus::Stuck);
}

TEST_CASE("messages flow through hidden inboxes in fifo order") {
  auto l = load("road_closures.btw");
  auto st = btw::init_instance(l.lowered.model, l.lowered.registry,
                               scenario("happy.jsonl"), 0);
  btw::run(st, 10000);
  // Every BufferTake pops the oldest put for that buffer.
  std::map<std::string, std::vector<std::uint64_t>> puts;
  for (const auto& e : st.trace) {
    if (e.kind == TraceKind::BufferPut)
      puts[e.subject].push_back(e.seq);
    if (e.kind == TraceKind::BufferTake) {
      auto& q = puts[e.subject];
      REQUIRE(!q.empty());
      q.erase(q.begin());
    }
  }
}
