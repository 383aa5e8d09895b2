#pragma once

#include <cctype>
#include <sstream>
#include <string>

#include "btw/model.hpp"

namespace btw {

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline const char* dot_shape(const ModelEntity& e) {
  switch (e.kind) {
    case ConceptKind::Decision: return "diamond";
    case ConceptKind::Synchroniser: return "circle";
    default: return e.is_composite() ? "box3d" : "box";
  }
}

}  // namespace detail

// Renders the workflow structure as a Graphviz digraph: one node per entity
// (shaped by kind), solid edges for triggers, dashed edges for messaging,
// and the service state machine as its own cluster.
inline std::string export_graph(const WorkflowModel& m) {
  using detail::dot_escape;
  std::ostringstream out;
  out << "digraph workflow {\n"
      << "  rankdir=LR;\n"
      << "  node [fontname=\"Helvetica\"];\n";
  for (const auto& e : m.entities) {
    if (e.alias_of >= 0) continue;
    out << "  n" << e.index << " [label=\"" << dot_escape(e.name)
        << "\", shape=" << detail::dot_shape(e);
    if (e.exclusive) out << ", peripheries=2";
    out << "];\n";
  }
  for (const auto& e : m.entities) {
    if (e.alias_of >= 0) continue;
    for (const auto& t : e.triggers) {
      if (t.target < 0) continue;
      out << "  n" << e.index << " -> n" << m.resolve(t.target)
          << " [style=solid";
      if (t.on_positive)
        out << ", label=\"" << (*t.on_positive ? "+" : "-") << "\"";
      out << "];\n";
    }
    for (const auto& c : e.messaging) {
      if (c.kind == MsgClause::AsyncOut &&
          c.dest.kind == MessageDest::EntityTarget) {
        auto it = m.entity_index.find(c.dest.name);
        if (it == m.entity_index.end()) continue;
        out << "  n" << e.index << " -> n" << m.resolve(it->second)
            << " [style=dashed, label=\"" << dot_escape(c.message) << "\"];\n";
      }
    }
    if (e.body >= 0)
      for (int child : m.blocks[e.body].entities) {
        if (m.entities[child].alias_of >= 0) continue;
        out << "  n" << e.index << " -> n" << child
            << " [style=dotted, arrowhead=none];\n";
      }
  }
  if (m.service) {
    out << "  subgraph cluster_service {\n"
        << "    label=\"" << dot_escape(m.service->name) << "\";\n"
        << "    node [shape=ellipse];\n";
    auto state_id = [&](const std::string& s) {
      std::string id = "s_";
      for (char c : s)
        id.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
      return id;
    };
    out << "    " << state_id("birth")
        << " [label=\"birth\", shape=circle];\n";
    for (const auto& s : m.service->states)
      out << "    " << state_id(s) << " [label=\"" << dot_escape(s)
          << "\"];\n";
    out << "    " << state_id("death")
        << " [label=\"death\", shape=doublecircle];\n";
    for (const auto& t : m.service->transitions)
      out << "    " << state_id(t.from) << " -> " << state_id(t.to)
          << " [label=\"" << t.rule_id << "\"];\n";
    out << "  }\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace btw
