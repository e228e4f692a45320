#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "vlad/errors.hpp"
#include "vlad/prims.hpp"

namespace vlad {

// ---------------------------------------------------------------------------
// Variables and tags
// ---------------------------------------------------------------------------

enum class Tag : uint8_t { Reverse = 0, Sensitivity = 1, Backpropagator = 2 };

inline char tag_letter(Tag t) {
  switch (t) {
    case Tag::Reverse: return 'r';
    case Tag::Sensitivity: return 's';
    case Tag::Backpropagator: return 'b';
  }
  return '?';
}

// A variable is either named or a literal constant. Constants (reals and the
// empty list) are routed through variables so the expression grammar stays at
// three forms; the evaluator resolves untagged literal variables directly.
struct Variable {
  std::string name;        // empty iff literal
  bool literal = false;
  bool lit_empty = false;  // literal (): the empty list
  double lit_value = 0.0;  // literal real payload
  std::vector<Tag> tags;   // tags[0] innermost (first applied), back() outermost

  bool untagged() const { return tags.empty(); }
  bool has_top(Tag t) const { return !tags.empty() && tags.back() == t; }

  // Consecutive Reverse tags at the top of the stack.
  int reverse_depth() const {
    int d = 0;
    for (size_t i = tags.size(); i-- > 0 && tags[i] == Tag::Reverse;) ++d;
    return d;
  }
  bool all_reverse() const {
    return std::all_of(tags.begin(), tags.end(),
                       [](Tag t) { return t == Tag::Reverse; });
  }

  Variable with_tag(Tag t) const {
    Variable v = *this;
    v.tags.push_back(t);
    return v;
  }
  Variable strip_top() const {
    Variable v = *this;
    if (v.tags.empty()) throw InternalError("strip_top on untagged variable");
    v.tags.pop_back();
    return v;
  }
};

inline Variable named_var(std::string name) {
  Variable v;
  v.name = std::move(name);
  return v;
}
inline Variable real_lit_var(double x) {
  Variable v;
  v.literal = true;
  v.lit_value = x;
  return v;
}
inline Variable empty_lit_var() {
  Variable v;
  v.literal = true;
  v.lit_empty = true;
  return v;
}
inline Variable rtag(const Variable& v) { return v.with_tag(Tag::Reverse); }
inline Variable stag(const Variable& v) { return v.with_tag(Tag::Sensitivity); }
inline Variable btag(const Variable& v) { return v.with_tag(Tag::Backpropagator); }

// Monotone bit pattern for a total order over doubles (sign-magnitude flip).
inline uint64_t real_order_key(double x) {
  uint64_t b = std::bit_cast<uint64_t>(x);
  return (b & 0x8000000000000000ull) ? ~b : (b | 0x8000000000000000ull);
}

// Strict total order: base names lexicographically (named before literal,
// literal reals before the literal empty list), then tag stacks
// lexicographically with Reverse < Sensitivity < Backpropagator and shorter
// stacks first on prefix ties.
inline int compare_vars(const Variable& a, const Variable& b) {
  if (a.literal != b.literal) return a.literal ? 1 : -1;
  if (!a.literal) {
    if (int c = a.name.compare(b.name)) return c < 0 ? -1 : 1;
  } else {
    if (a.lit_empty != b.lit_empty) return a.lit_empty ? 1 : -1;
    if (!a.lit_empty) {
      uint64_t ka = real_order_key(a.lit_value), kb = real_order_key(b.lit_value);
      if (ka != kb) return ka < kb ? -1 : 1;
    }
  }
  size_t n = std::min(a.tags.size(), b.tags.size());
  for (size_t i = 0; i < n; ++i)
    if (a.tags[i] != b.tags[i]) return a.tags[i] < b.tags[i] ? -1 : 1;
  if (a.tags.size() != b.tags.size())
    return a.tags.size() < b.tags.size() ? -1 : 1;
  return 0;
}

inline bool operator==(const Variable& a, const Variable& b) {
  return compare_vars(a, b) == 0;
}
inline bool operator!=(const Variable& a, const Variable& b) { return !(a == b); }

struct VarLess {
  bool operator()(const Variable& a, const Variable& b) const {
    return compare_vars(a, b) < 0;
  }
};

using VarSet = std::set<Variable, VarLess>;

// ---------------------------------------------------------------------------
// Core expressions
// ---------------------------------------------------------------------------

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct Binding {
  enum class Kind { Alias, Apply, Abs };
  Variable target;
  Kind kind;
  Variable u;  // Alias: source; Apply: operator
  Variable w;  // Apply: operand
  Expr lam;    // Abs: the lambda expression
};

// A lambda body in A-normal form: an ordered binding list whose last target
// is the result.
struct AnfBody {
  std::vector<Binding> bindings;
  Variable result;
};

struct LamData {
  Variable param;
  // Exactly one of `general` / `anf` is set; desugaring produces general
  // bodies and anf conversion replaces them.
  Expr general;
  std::optional<AnfBody> anf;

  // Free variables in order, computed when the node is built.
  std::vector<Variable> fv;

  // Provenance marks used by the untransformed-free-variable analysis and by
  // the inverse of the reverse transform.
  std::optional<PrimOp> prim_origin;  // body generated for a transformed primitive
  Expr origin;                        // the lambda this one was transformed from
  std::optional<std::vector<Variable>> attached_bree;  // generated backpropagators
};

struct ExprNode {
  std::variant<Variable, std::pair<Expr, Expr>, LamData> v;

  bool is_var() const { return v.index() == 0; }
  bool is_app() const { return v.index() == 1; }
  bool is_lam() const { return v.index() == 2; }
  const Variable& var() const { return std::get<0>(v); }
  const std::pair<Expr, Expr>& app() const { return std::get<1>(v); }
  const LamData& lam() const { return std::get<2>(v); }
};

inline Expr make_var(Variable v) {
  return std::make_shared<ExprNode>(ExprNode{std::move(v)});
}
inline Expr make_app(Expr f, Expr a) {
  return std::make_shared<ExprNode>(ExprNode{std::make_pair(std::move(f), std::move(a))});
}

// ---------------------------------------------------------------------------
// Free variables
// ---------------------------------------------------------------------------

inline void collect_free(const Expr& e, VarSet& bound, VarSet& out);

inline void collect_free_body(const AnfBody& body, VarSet& bound, VarSet& out) {
  for (const Binding& b : body.bindings) {
    switch (b.kind) {
      case Binding::Kind::Alias:
        if (!bound.count(b.u)) out.insert(b.u);
        break;
      case Binding::Kind::Apply:
        if (!bound.count(b.u)) out.insert(b.u);
        if (!bound.count(b.w)) out.insert(b.w);
        break;
      case Binding::Kind::Abs:
        for (const Variable& v : b.lam->lam().fv)
          if (!bound.count(v)) out.insert(v);
        break;
    }
    bound.insert(b.target);
  }
  if (!bound.count(body.result)) out.insert(body.result);
}

inline void collect_free(const Expr& e, VarSet& bound, VarSet& out) {
  if (e->is_var()) {
    if (!bound.count(e->var())) out.insert(e->var());
  } else if (e->is_app()) {
    collect_free(e->app().first, bound, out);
    collect_free(e->app().second, bound, out);
  } else {
    for (const Variable& v : e->lam().fv)
      if (!bound.count(v)) out.insert(v);
  }
}

inline std::vector<Variable> compute_lam_fv(const Variable& param,
                                            const Expr& general,
                                            const std::optional<AnfBody>& anf) {
  VarSet bound, out;
  bound.insert(param);
  if (anf) {
    VarSet b = bound;
    collect_free_body(*anf, b, out);
  } else {
    collect_free(general, bound, out);
  }
  return {out.begin(), out.end()};
}

inline Expr make_lam(Variable param, Expr general_body) {
  LamData d;
  d.param = std::move(param);
  d.general = std::move(general_body);
  d.fv = compute_lam_fv(d.param, d.general, d.anf);
  return std::make_shared<ExprNode>(ExprNode{std::move(d)});
}

inline Expr make_anf_lam(Variable param, AnfBody body,
                         std::optional<PrimOp> prim_origin = std::nullopt,
                         Expr origin = nullptr,
                         std::optional<std::vector<Variable>> attached_bree =
                             std::nullopt) {
  LamData d;
  d.param = std::move(param);
  d.anf = std::move(body);
  d.fv = compute_lam_fv(d.param, d.general, d.anf);
  d.prim_origin = prim_origin;
  d.origin = std::move(origin);
  d.attached_bree = std::move(attached_bree);
  return std::make_shared<ExprNode>(ExprNode{std::move(d)});
}

// FV of an arbitrary expression, in variable order.
inline std::vector<Variable> free_vars(const Expr& e) {
  VarSet bound, out;
  collect_free(e, bound, out);
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// BREE: ordered untransformed free variables of a lambda
// ---------------------------------------------------------------------------

// Layout of closure sensitivities. Bodies generated for transformed
// primitives carry an empty list; other generated backpropagator lambdas
// carry the list attached when they were built; a lambda whose parameter is
// reverse-tagged on top is the transform of its origin, so its list is the
// reverse-tagging of the origin's; and a lambda with an untagged parameter
// exposes all of its free variables.
inline std::vector<Variable> bree(const Expr& lam_expr) {
  if (!lam_expr || !lam_expr->is_lam())
    throw InternalError("bree: not a lambda");
  const LamData& lam = lam_expr->lam();
  if (lam.prim_origin) return {};
  if (lam.attached_bree) return *lam.attached_bree;
  if (lam.param.untagged()) return lam.fv;
  if (lam.param.has_top(Tag::Reverse)) {
    if (!lam.origin)
      throw InternalError("bree: reverse-tagged lambda without origin");
    std::vector<Variable> inner = bree(lam.origin);
    std::vector<Variable> out;
    out.reserve(inner.size());
    for (const Variable& v : inner) out.push_back(rtag(v));
    std::sort(out.begin(), out.end(), VarLess{});
    return out;
  }
  throw InternalError(
      "bree: sensitivity/backpropagator-tagged parameter outside generated "
      "code");
}

// ---------------------------------------------------------------------------
// Structural equality (marks and caches ignored)
// ---------------------------------------------------------------------------

inline bool expr_equal(const Expr& a, const Expr& b);

inline bool body_equal(const AnfBody& a, const AnfBody& b) {
  if (a.bindings.size() != b.bindings.size()) return false;
  if (a.result != b.result) return false;
  for (size_t i = 0; i < a.bindings.size(); ++i) {
    const Binding &x = a.bindings[i], &y = b.bindings[i];
    if (x.kind != y.kind || x.target != y.target) return false;
    switch (x.kind) {
      case Binding::Kind::Alias:
        if (x.u != y.u) return false;
        break;
      case Binding::Kind::Apply:
        if (x.u != y.u || x.w != y.w) return false;
        break;
      case Binding::Kind::Abs:
        if (!expr_equal(x.lam, y.lam)) return false;
        break;
    }
  }
  return true;
}

inline bool expr_equal(const Expr& a, const Expr& b) {
  if (a.get() == b.get()) return true;
  if (!a || !b) return false;
  if (a->v.index() != b->v.index()) return false;
  if (a->is_var()) return a->var() == b->var();
  if (a->is_app())
    return expr_equal(a->app().first, b->app().first) &&
           expr_equal(a->app().second, b->app().second);
  const LamData &la = a->lam(), &lb = b->lam();
  if (la.param != lb.param) return false;
  if (la.anf.has_value() != lb.anf.has_value()) return false;
  if (la.anf) return body_equal(*la.anf, *lb.anf);
  return expr_equal(la.general, lb.general);
}

}  // namespace vlad
