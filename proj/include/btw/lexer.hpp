#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "btw/diag.hpp"
#include "btw/value.hpp"

namespace btw {

struct Token {
  enum Kind { Ident, String, Int, DateLit, TimeLit, TimestampLit, Punct, End };
  Kind kind = End;
  std::string text;       // identifier text, string contents, punct spelling
  std::int64_t number = 0;  // Int and the date/time literal kinds
  Span span;

  bool is(Kind k, const char* t = nullptr) const {
    return kind == k && (!t || text == t);
  }
};

class Lexer {
 public:
  Lexer(std::string_view src, std::string file)
      : src_(src), file_(std::move(file)) {}

  std::vector<Token> run(std::vector<Diagnostic>& diags) {
    std::vector<Token> out;
    while (true) {
      skip_ws();
      Token t = next(diags);
      out.push_back(t);
      if (t.kind == Token::End) break;
    }
    return out;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  Token next(std::vector<Diagnostic>& diags) {
    Token t;
    t.span = here();
    if (pos_ >= src_.size()) {
      t.kind = Token::End;
      return t;
    }
    char c = src_[pos_];
    if (c == '"') return lex_string(diags);
    if (c == '@') return lex_datetime(diags);
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::int64_t v = 0;
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        v = v * 10 + (src_[pos_] - '0');
        advance();
      }
      t.kind = Token::Int;
      t.number = v;
      close(t);
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::string id;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
              src_[pos_] == '_')) {
        id += src_[pos_];
        advance();
      }
      t.kind = Token::Ident;
      t.text = std::move(id);
      close(t);
      return t;
    }
    // multi-char punctuation first
    for (const char* p : {"->", "!=", "<=", ">="}) {
      if (src_.substr(pos_, 2) == p) {
        t.kind = Token::Punct;
        t.text = p;
        advance();
        advance();
        close(t);
        return t;
      }
    }
    static const std::string singles = "{}(),:.=<>+-*/";
    if (singles.find(c) != std::string::npos) {
      t.kind = Token::Punct;
      t.text = std::string(1, c);
      advance();
      close(t);
      return t;
    }
    diags.push_back({"P001", Severity::Error, here(),
                     std::string("unexpected character '") + c + "'"});
    advance();
    return next(diags);
  }

  Token lex_string(std::vector<Diagnostic>& diags) {
    Token t;
    t.span = here();
    advance();  // opening quote
    std::string s;
    while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) advance();
      s += src_[pos_];
      advance();
    }
    if (pos_ >= src_.size() || src_[pos_] != '"') {
      diags.push_back({"P002", Severity::Error, t.span,
                       "unterminated string literal"});
    } else {
      advance();
    }
    t.kind = Token::String;
    t.text = std::move(s);
    close(t);
    return t;
  }

  // @YYYY-MM-DD, @HH:MM:SS or @YYYY-MM-DDTHH:MM:SS
  Token lex_datetime(std::vector<Diagnostic>& diags) {
    Token t;
    t.span = here();
    advance();
    std::string raw;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
            src_[pos_] == '-' || src_[pos_] == ':' || src_[pos_] == 'T')) {
      raw += src_[pos_];
      advance();
    }
    int y, mo, d, h, mi, s;
    if (std::sscanf(raw.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi,
                    &s) == 6) {
      t.kind = Token::TimestampLit;
      t.number = days_from_civil(y, mo, d) * kSecondsPerDay + h * 3600 +
                 mi * 60 + s;
    } else if (std::sscanf(raw.c_str(), "%d-%d-%d", &y, &mo, &d) == 3) {
      t.kind = Token::DateLit;
      t.number = days_from_civil(y, mo, d);
    } else if (std::sscanf(raw.c_str(), "%d:%d:%d", &h, &mi, &s) == 3) {
      t.kind = Token::TimeLit;
      t.number = h * 3600 + mi * 60 + s;
    } else {
      diags.push_back({"P003", Severity::Error, t.span,
                       "malformed date/time literal '@" + raw + "'"});
      t.kind = Token::DateLit;
    }
    close(t);
    return t;
  }

  Span here() const {
    Span s;
    s.file = file_;
    s.line = line_;
    s.col = col_;
    s.end_line = line_;
    s.end_col = col_ + 1;
    return s;
  }

  void close(Token& t) const {
    t.span.end_line = line_;
    t.span.end_col = col_;
  }

  void advance() {
    if (pos_ < src_.size() && src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  std::string_view src_;
  std::string file_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace btw
