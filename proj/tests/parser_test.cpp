#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "btw/parser.hpp"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte offset of a 1-based line/col position.
std::size_t offset_of(const std::string& src, int line, int col) {
  std::size_t off = 0;
  int l = 1;
  while (l < line && off < src.size())
    if (src[off++] == '\n') ++l;
  return std::min(off + std::size_t(col - 1), src.size());
}

std::vector<btw::Token> tokens_of(const std::string& src) {
  std::vector<btw::Diagnostic> diags;
  btw::Lexer lex(src, "t");
  auto toks = lex.run(diags);
  REQUIRE(diags.empty());
  REQUIRE(!toks.empty());
  toks.pop_back();  // drop End
  return toks;
}

std::string delete_token(const std::string& src, const btw::Token& t) {
  std::size_t b = offset_of(src, t.span.line, t.span.col);
  std::size_t e = offset_of(src, t.span.end_line, t.span.end_col);
  if (e < b) e = b;
  return src.substr(0, b) + src.substr(e);
}

int count_lines(const std::string& src) {
  return 1 + int(std::count(src.begin(), src.end(), '\n'));
}

// Every reported span must point inside the mutated source.
void check_diags(const std::string& src, const std::vector<btw::Diagnostic>& diags) {
  int lines = count_lines(src);
  for (const auto& d : diags) {
    CHECK(!d.code.empty());
    CHECK(!d.message.empty());
    if (d.span.valid()) {
      CHECK(d.span.line >= 1);
      CHECK(d.span.line <= lines);
      CHECK(d.span.col >= 1);
    }
  }
  // Bounded errors: recovery must not spray one error per remaining token.
  CHECK(diags.size() <= 50);
}

std::string fixture(const char* name) {
  return slurp(fs::path(BTW_FIXTURE_DIR) / name);
}

}  // namespace

TEST_CASE("the bundled fixtures parse without diagnostics") {
  for (const char* name : {"road_closures.btw", "ladder.btw"}) {
    auto res = btw::parse(fixture(name), name);
    CHECK(res.ok());
    CHECK(res.diags.empty());
  }
  for (const auto& entry :
       fs::directory_iterator(fs::path(BTW_FIXTURE_DIR) / "axioms")) {
    auto res = btw::parse(slurp(entry.path()), entry.path().filename());
    CHECK(res.ok());  // axiom fixtures are syntactically valid by design
  }
}

TEST_CASE("parsed structure of the worked model") {
  auto res = btw::parse(fixture("road_closures.btw"), "road_closures.btw");
  REQUIRE(res.ok());
  REQUIRE(res.ast.processes.size() == 3);
  CHECK(res.ast.processes[0].name == "Application Lodgement");
  CHECK(res.ast.processes[1].name == "Application Investigation");
  CHECK(res.ast.processes[2].name == "Title Issue");
  CHECK(res.ast.service.has_value());
  CHECK(res.ast.recovery.has_value());
  CHECK(!res.ast.scope.actors.empty());
}

TEST_CASE("duration literals normalise to seconds") {
  const char* src = R"(
scope { org "U" role "R" actor "A" in "U" roles "R" }
process "Main" {
  process "P1" { role "R" unit "U" duration 90 seconds }
  process "P2" { role "R" unit "U" duration 2 hours }
  process "P3" { role "R" unit "U" duration 1 day }
  process "P4" { role "R" unit "U" duration 3 months }
  process "P5" { role "R" unit "U" duration 1 year }
}
)";
  auto res = btw::parse(src, "d");
  REQUIRE(res.ok());
  const auto& es = res.ast.processes.at(0).body.entities;
  REQUIRE(es.size() == 5);
  CHECK(es[0].duration == 90);
  CHECK(es[1].duration == 2 * 3600);
  CHECK(es[2].duration == 86400);
  CHECK(es[3].duration == 3 * 30 * 86400);
  CHECK(es[4].duration == 365 * 86400);
}

TEST_CASE("malformed input produces diagnostics, not exceptions") {
  for (const char* src : {
           "process",
           "process \"X\" {",
           "}}}}",
           "scope { org }",
           "process \"X\" { decision \"D\" { rule positive } }",
           "\"just a string\"",
           "process \"X\" { process \"P\" { pre ((((( } }",
           "scope { actor \"A\" in } process \"X\" { }",
       }) {
    auto res = btw::parse(src, "bad");
    CHECK(!res.ok());
    check_diags(src, res.diags);
  }
}

TEST_CASE("single token deletion never crashes and keeps spans in bounds") {
  std::string src = fixture("road_closures.btw");
  auto toks = tokens_of(src);
  for (const auto& t : toks) {
    std::string mutated = delete_token(src, t);
    auto res = btw::parse(mutated, "mut");
    check_diags(mutated, res.diags);
  }
}

TEST_CASE("random multi-token deletion is equally safe") {
  std::string src = fixture("road_closures.btw");
  auto toks = tokens_of(src);
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    // Delete 1..5 tokens, highest offset first so earlier spans stay valid.
    std::vector<std::size_t> idx;
    for (int k = 0; k < 1 + int(gen() % 5); ++k)
      idx.push_back(gen() % toks.size());
    std::sort(idx.rbegin(), idx.rend());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    std::string mutated = src;
    for (auto i : idx) mutated = delete_token(mutated, toks[i]);
    auto res = btw::parse(mutated, "mut");
    check_diags(mutated, res.diags);
  }
}

TEST_CASE("string literals support escapes and report unterminated ones") {
  auto res = btw::parse(R"(
scope { org "A\"B" }
process "Main" { process "P" { role "R" unit "A\"B" } }
)",
                        "esc");
  // The escaped quote must survive into the AST name.
  REQUIRE(!res.ast.scope.orgs.empty());
  CHECK(res.ast.scope.orgs[0].name == "A\"B");

  auto bad = btw::parse("scope { org \"unterminated \n}", "unterm");
  CHECK(!bad.ok());
}
