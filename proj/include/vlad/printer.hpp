#pragma once

#include <charconv>
#include <cmath>
#include <string>

#include "vlad/value.hpp"

namespace vlad {

// Shortest round-trip decimal for binary64.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string print_variable(const Variable& v) {
  std::string out;
  if (v.literal) {
    out = v.lit_empty ? "()" : format_real(v.lit_value);
  } else {
    out = v.name;
  }
  for (Tag t : v.tags) {
    out += '~';
    out += tag_letter(t);
  }
  return out;
}

inline std::string print_value(const Value& v);

namespace detail {
inline void print_pair_tail(const Value& v, std::string& out) {
  auto p = try_pair(v);
  if (!p) {
    if (v->is_empty()) return;  // proper list
    out += " . ";
    out += print_value(v);
    return;
  }
  out += ' ';
  out += print_value(p->car);
  print_pair_tail(p->cdr, out);
}
}  // namespace detail

inline std::string print_value(const Value& v) {
  if (v->is_empty()) return "()";
  if (v->is_real()) return format_real(v->real());
  if (v->is_tagged()) return "(reverse " + print_value(v->inner()) + ")";
  if (v->is_prim()) return "#<primitive:" + std::string(prim_name(v->prim())) + ">";
  if (v->is_custom()) return "#<custom " + print_value(v->custom().primal) + ">";
  if (auto p = try_pair(v)) {
    std::string out = "(" + print_value(p->car);
    detail::print_pair_tail(p->cdr, out);
    out += ')';
    return out;
  }
  return "#<closure:\xce\xbb" + print_variable(v->closure().lam->lam().param) + ">";
}

// ---------------------------------------------------------------------------
// Expression printing; output re-parses in internal reader mode.
// ---------------------------------------------------------------------------

inline std::string print_expr(const Expr& e, int indent = 0);

namespace detail {

inline std::string pad(int n) { return std::string(static_cast<size_t>(n), ' '); }

inline std::string print_body(const AnfBody& body, int indent) {
  std::string out;
  int depth = 0;
  for (const Binding& b : body.bindings) {
    out += "\n" + pad(indent + depth) + "(let ((" + print_variable(b.target) + " ";
    switch (b.kind) {
      case Binding::Kind::Alias:
        out += print_variable(b.u);
        break;
      case Binding::Kind::Apply:
        out += "(" + print_variable(b.u) + " " + print_variable(b.w) + ")";
        break;
      case Binding::Kind::Abs:
        out += print_expr(b.lam, indent + depth + 2);
        break;
    }
    out += "))";
    ++depth;
  }
  out += "\n" + pad(indent + depth) + print_variable(body.result);
  for (int i = 0; i < depth; ++i) out += ')';
  return out;
}

}  // namespace detail

inline std::string print_expr(const Expr& e, int indent) {
  if (e->is_var()) return print_variable(e->var());
  if (e->is_app())
    return "(" + print_expr(e->app().first, indent) + " " +
           print_expr(e->app().second, indent) + ")";
  const LamData& lam = e->lam();
  std::string out = "(lambda (" + print_variable(lam.param) + ")";
  if (lam.anf) {
    out += detail::print_body(*lam.anf, indent + 2);
  } else {
    out += " " + print_expr(lam.general, indent + 2);
  }
  out += ")";
  return out;
}

}  // namespace vlad
