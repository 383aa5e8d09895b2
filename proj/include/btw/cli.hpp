#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btw/checkpoint.hpp"
#include "btw/dot.hpp"
#include "btw/engine.hpp"
#include "btw/format.hpp"
#include "btw/lower.hpp"
#include "btw/parser.hpp"
#include "btw/validate.hpp"

namespace btw {

// Exit code contract:
//   0  success (validate: no errors; simulate: reached death)
//   1  validation errors
//   2  simulation ended stuck or out of budget
//   3  usage or IO failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitStuck = 2;
inline constexpr int kExitUsage = 3;

namespace detail {

inline bool color_enabled() {
  const char* v = std::getenv("BTW_COLOR");
  return v && std::string(v) == "1";
}

inline bool read_file(const std::string& path, std::string& out,
                      std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << "error: cannot read '" << path << "'\n";
    return false;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

inline void print_diags(const std::vector<Diagnostic>& diags,
                        const std::string& format, std::ostream& out) {
  if (format == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : diags) arr.push_back(d.to_json());
    out << arr.dump(2) << "\n";
    return;
  }
  bool color = color_enabled();
  for (const auto& d : diags) out << d.render(color) << "\n";
}

struct LoadedModel {
  ConceptRegistry registry;
  WorkflowModel model;
  std::vector<Diagnostic> diags;
  bool parse_ok = false;
  bool ok = false;  // no errors anywhere in the pipeline
};

inline LoadedModel load_model(const std::string& path, const std::string& text,
                              bool strict_allocation) {
  LoadedModel lm;
  auto pr = parse(text, path);
  lm.diags = pr.diags;
  lm.parse_ok = pr.ok();
  if (!pr.ok()) return lm;
  auto lr = lower(pr.ast);
  lm.diags.insert(lm.diags.end(), lr.diags.begin(), lr.diags.end());
  lm.registry = std::move(lr.registry);
  lm.model = std::move(lr.model);
  if (!lr.ok()) return lm;
  ValidateOptions opts;
  opts.strict_allocation = strict_allocation;
  auto vd = validate(lm.registry, lm.model, opts);
  lm.diags.insert(lm.diags.end(), vd.begin(), vd.end());
  lm.ok = true;
  for (const auto& d : lm.diags)
    if (d.severity == Severity::Error) lm.ok = false;
  return lm;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv,
                   std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"workflow specification kernel"};
  app.require_subcommand(1);

  std::string spec_path, scenario_path, trace_path, format = "text";
  std::string graph_out, code;
  std::uint64_t seed = 0, max_steps = 10000;
  bool strict_allocation = false;

  auto* v = app.add_subcommand("validate", "statically check a workflow spec");
  v->add_option("spec", spec_path, "workflow spec file")->required();
  v->add_option("--format", format, "text|json")
      ->check(CLI::IsMember({"text", "json"}));
  v->add_flag("--strict-allocation", strict_allocation,
              "require every actor and role to be fully allocated");

  auto* s = app.add_subcommand("simulate", "run a spec against a scenario");
  s->add_option("spec", spec_path, "workflow spec file")->required();
  s->add_option("--scenario", scenario_path, "scenario file (JSONL)");
  s->add_option("--seed", seed, "simulation seed");
  s->add_option("--max-steps", max_steps, "step budget");
  s->add_option("--trace", trace_path, "write the trace here (JSONL)");
  s->add_option("--format", format, "text|json")
      ->check(CLI::IsMember({"text", "json"}));
  s->add_flag("--strict-allocation", strict_allocation,
              "require every actor and role to be fully allocated");

  auto* e = app.add_subcommand("explain", "describe a validator code");
  e->add_option("code", code, "diagnostic code, e.g. V003")->required();

  auto* g = app.add_subcommand("export-graph",
                               "render the workflow structure as DOT");
  g->add_option("spec", spec_path, "workflow spec file")->required();
  g->add_option("-o,--output", graph_out, "output file (default stdout)");

  auto* f = app.add_subcommand("fmt", "print the canonical form of a spec");
  f->add_option("spec", spec_path, "workflow spec file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    std::ostringstream dummy;
    int rc = app.exit(pe, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::string text;
  if ((v->parsed() || s->parsed() || g->parsed() || f->parsed()) &&
      !detail::read_file(spec_path, text, err))
    return kExitUsage;

  if (e->parsed()) {
    try {
      auto ex = explain(code);
      out << ex.code << ": " << ex.rule << "\n";
      if (!ex.anchor.empty()) out << "  checks: " << ex.anchor << "\n";
      if (!ex.example.empty()) out << "  example: " << ex.example << "\n";
      return kExitOk;
    } catch (const UnknownCode&) {
      err << "error: unknown diagnostic code '" << code << "'\n";
      return kExitUsage;
    }
  }

  if (f->parsed()) {
    auto pr = parse(text, spec_path);
    if (!pr.ok()) {
      detail::print_diags(pr.diags, "text", err);
      return kExitInvalid;
    }
    out << format_spec(pr.ast);
    return kExitOk;
  }

  if (g->parsed()) {
    auto pr = parse(text, spec_path);
    if (!pr.ok()) {
      detail::print_diags(pr.diags, "text", err);
      return kExitInvalid;
    }
    auto lr = lower(pr.ast);
    std::string dot = export_graph(lr.model);
    if (graph_out.empty()) {
      out << dot;
    } else {
      std::ofstream o(graph_out);
      if (!o) {
        err << "error: cannot write '" << graph_out << "'\n";
        return kExitUsage;
      }
      o << dot;
    }
    return kExitOk;
  }

  auto lm = detail::load_model(spec_path, text, strict_allocation);
  if (v->parsed()) {
    detail::print_diags(lm.diags, format, out);
    return lm.ok ? kExitOk : kExitInvalid;
  }

  // simulate
  if (!lm.ok) {
    detail::print_diags(lm.diags, "text", err);
    return kExitInvalid;
  }
  Scenario scenario;
  if (!scenario_path.empty()) {
    std::ifstream in(scenario_path);
    if (!in) {
      err << "error: cannot read '" << scenario_path << "'\n";
      return kExitUsage;
    }
    std::vector<Diagnostic> sdiags;
    auto sc = load_scenario(in, scenario_path, sdiags);
    if (!sc || !sdiags.empty()) {
      detail::print_diags(sdiags, "text", err);
      return kExitUsage;
    }
    scenario = std::move(*sc);
  }
  EngineState st = init_instance(lm.model, lm.registry, std::move(scenario),
                                 seed);
  RunStatus status = run(st, max_steps);
  if (!trace_path.empty()) {
    std::ofstream t(trace_path);
    if (!t) {
      err << "error: cannot write '" << trace_path << "'\n";
      return kExitUsage;
    }
    write_trace(t, st.trace);
  }
  std::map<std::string, int> counts;
  for (const auto& te : st.trace) counts[to_string(te.kind)]++;
  if (format == "json") {
    nlohmann::ordered_json j;
    j["status"] = to_string(status);
    j["final_state"] = st.service_state;
    j["steps"] = st.step_count;
    j["clock"] = st.clock;
    j["trace_entries"] = st.trace.size();
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [k, n] : counts) c[k] = n;
    j["counts"] = std::move(c);
    out << j.dump(2) << "\n";
  } else {
    out << "status: " << to_string(status) << "\n";
    if (!st.service_state.empty())
      out << "final state: " << st.service_state << "\n";
    out << "steps: " << st.step_count << ", clock: " << st.clock
        << ", trace entries: " << st.trace.size() << "\n";
    for (const auto& [k, n] : counts) out << "  " << k << ": " << n << "\n";
  }
  switch (status) {
    case RunStatus::Death: return kExitOk;
    case RunStatus::Stuck:
    case RunStatus::BudgetExhausted: return kExitStuck;
    default: return kExitStuck;
  }
}

}  // namespace btw
