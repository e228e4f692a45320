#pragma once

#include <cctype>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vlad/errors.hpp"
#include "vlad/syntax.hpp"

namespace vlad {

// ---------------------------------------------------------------------------
// Surface syntax
// ---------------------------------------------------------------------------

struct SurfaceExpr;
using Surface = std::shared_ptr<const SurfaceExpr>;

struct SurfaceExpr {
  enum class Kind { Symbol, Real, List };
  Kind kind;
  std::string symbol;             // Symbol
  Variable symbol_var;            // Symbol, tags already decoded
  double real = 0.0;              // Real
  std::vector<Surface> children;  // List; empty list = the () literal
  Surface dotted_tail;            // (a b . c) data syntax; null for proper lists
  int line = 0, column = 0;
};

inline Surface make_symbol(Variable v, std::string text, int line, int col) {
  auto s = std::make_shared<SurfaceExpr>();
  const_cast<SurfaceExpr&>(*s).kind = SurfaceExpr::Kind::Symbol;
  const_cast<SurfaceExpr&>(*s).symbol = std::move(text);
  const_cast<SurfaceExpr&>(*s).symbol_var = std::move(v);
  const_cast<SurfaceExpr&>(*s).line = line;
  const_cast<SurfaceExpr&>(*s).column = col;
  return s;
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

// `internal` mode additionally accepts the reserved spellings produced when
// printing transformed code: `%`-prefixed generated names and `~r`/`~s`/`~b`
// tag suffixes. User programs are parsed with internal = false and reject
// both.
class Reader {
 public:
  explicit Reader(std::string_view text, bool internal = false)
      : text_(text), internal_(internal) {}

  std::vector<Surface> read_all() {
    std::vector<Surface> forms;
    skip_atmosphere();
    while (!at_end()) {
      forms.push_back(read_form());
      skip_atmosphere();
    }
    return forms;
  }

  Surface read_one() {
    skip_atmosphere();
    if (at_end()) throw ParseError("expected a form", line_, col_);
    Surface s = read_form();
    skip_atmosphere();
    if (!at_end()) throw ParseError("trailing input after form", line_, col_);
    return s;
  }

 private:
  std::string_view text_;
  bool internal_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  char advance() {
    char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_atmosphere() {
    while (!at_end()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == ';') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  Surface read_form() {
    int line = line_, col = col_;
    char c = peek();
    if (c == '(') {
      advance();
      auto node = std::make_shared<SurfaceExpr>();
      auto& n = const_cast<SurfaceExpr&>(*node);
      n.kind = SurfaceExpr::Kind::List;
      n.line = line;
      n.column = col;
      skip_atmosphere();
      while (true) {
        if (at_end()) throw ParseError("unbalanced '('", line, col);
        if (peek() == ')') {
          advance();
          break;
        }
        Surface child = read_form();
        if (child->kind == SurfaceExpr::Kind::Symbol && child->symbol == ".") {
          if (n.children.empty())
            throw ParseError("'.' needs a preceding element", line, col);
          skip_atmosphere();
          if (at_end() || peek() == ')')
            throw ParseError("'.' needs a tail element", line, col);
          n.dotted_tail = read_form();
          skip_atmosphere();
          if (at_end() || peek() != ')')
            throw ParseError("expected ')' after dotted tail", line, col);
          advance();
          break;
        }
        n.children.push_back(child);
        skip_atmosphere();
      }
      return node;
    }
    if (c == ')') throw ParseError("unexpected ')'", line, col);
    return read_atom(line, col);
  }

  Surface read_atom(int line, int col) {
    size_t start = pos_;
    while (!at_end()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' ||
          c == ')' || c == ';')
        break;
      advance();
    }
    std::string tok(text_.substr(start, pos_ - start));
    if (tok.empty()) throw ParseError("empty atom", line, col);

    if (auto num = parse_number(tok)) {
      auto s = std::make_shared<SurfaceExpr>();
      auto& n = const_cast<SurfaceExpr&>(*s);
      n.kind = SurfaceExpr::Kind::Real;
      n.real = *num;
      n.line = line;
      n.column = col;
      return s;
    }
    return make_symbol(decode_symbol(tok, line, col), tok, line, col);
  }

  static std::optional<double> parse_number(const std::string& tok) {
    if (tok == "NaN") return std::nan("");
    if (tok == "inf") return HUGE_VAL;
    if (tok == "-inf") return -HUGE_VAL;
    char first = tok[0];
    if (!(std::isdigit(static_cast<unsigned char>(first)) ||
          ((first == '-' || first == '+' || first == '.') && tok.size() > 1)))
      return std::nullopt;
    const char* begin = tok.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + tok.size()) return std::nullopt;
    return v;
  }

  Variable decode_symbol(const std::string& tok, int line, int col) {
    std::string base = tok;
    std::vector<Tag> tags;
    // Trailing ~r/~s/~b runs encode tag stacks, innermost first.
    while (base.size() >= 2 && base[base.size() - 2] == '~') {
      char t = base.back();
      Tag tag;
      if (t == 'r')
        tag = Tag::Reverse;
      else if (t == 's')
        tag = Tag::Sensitivity;
      else if (t == 'b')
        tag = Tag::Backpropagator;
      else
        break;
      tags.push_back(tag);
      base.resize(base.size() - 2);
    }
    std::reverse(tags.begin(), tags.end());
    if (!internal_) {
      if (!tags.empty())
        throw ParseError("'~' tag suffixes are reserved: " + tok, line, col);
      if (tok.find('~') != std::string::npos)
        throw ParseError("'~' is reserved in symbols: " + tok, line, col);
      if (tok[0] == '%')
        throw ParseError("'%' names are reserved: " + tok, line, col);
    }
    if (base.empty() || base.find('~') != std::string::npos)
      throw ParseError("malformed symbol: " + tok, line, col);
    Variable v = named_var(base);
    v.tags = std::move(tags);
    return v;
  }
};

inline std::vector<Surface> parse(std::string_view text, bool internal = false) {
  return Reader(text, internal).read_all();
}

inline Surface parse_one(std::string_view text, bool internal = false) {
  return Reader(text, internal).read_one();
}

}  // namespace vlad
