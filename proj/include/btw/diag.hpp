#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace btw {

// Half-open range in a source file. line/col are 1-based; end_col points one
// past the last character of the range.
struct Span {
  std::string file;
  int line = 0;
  int col = 0;
  int end_line = 0;
  int end_col = 0;

  bool valid() const { return line > 0; }
};

enum class Severity { Error, Warning };

inline const char* to_string(Severity s) {
  return s == Severity::Error ? "error" : "warning";
}

struct Diagnostic {
  std::string code;  // "P001", "L004", "V003", ...
  Severity severity = Severity::Error;
  Span span;
  std::string message;
  std::string subject;  // concept or entity name, when one applies
  std::string anchor;   // validator codes cite the axiom they enforce

  std::string render(bool color = false) const {
    std::string out;
    if (!span.file.empty()) {
      out += span.file + ":" + std::to_string(span.line) + ":" +
             std::to_string(span.col) + ": ";
    }
    if (color)
      out += severity == Severity::Error ? "\x1b[31m" : "\x1b[33m";
    out += to_string(severity);
    if (color) out += "\x1b[0m";
    out += " [" + code + "] " + message;
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["code"] = code;
    j["severity"] = to_string(severity);
    j["file"] = span.file;
    j["line"] = span.line;
    j["col"] = span.col;
    j["message"] = message;
    return j;
  }
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::Error) return true;
  return false;
}

}  // namespace btw
