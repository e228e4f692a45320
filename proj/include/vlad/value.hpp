#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "vlad/errors.hpp"
#include "vlad/prims.hpp"
#include "vlad/syntax.hpp"

namespace vlad {

struct ValueNode;
using Value = std::shared_ptr<const ValueNode>;

// A closure environment: a flat, variable-ordered binding vector restricted
// to the lambda's free variables. Literal-constant variables are resolved by
// the evaluator and never stored.
struct Env {
  std::shared_ptr<const std::vector<std::pair<Variable, Value>>> entries;

  Env() : entries(std::make_shared<std::vector<std::pair<Variable, Value>>>()) {}
  explicit Env(std::vector<std::pair<Variable, Value>> e)
      : entries(std::make_shared<std::vector<std::pair<Variable, Value>>>(
            std::move(e))) {}

  const Value* find(const Variable& v) const {
    auto it = std::lower_bound(
        entries->begin(), entries->end(), v,
        [](const auto& a, const Variable& b) { return VarLess{}(a.first, b); });
    if (it != entries->end() && it->first == v) return &it->second;
    return nullptr;
  }
  size_t size() const { return entries->size(); }
};

struct EmptyList {};

struct ClosureData {
  Env env;
  Expr lam;  // an ExprNode holding LamData with an ANF body
};

struct CustomData {
  Value primal;
  Value deriv;
  // The value handed out by differentiation. For closure derivatives this is
  // a private copy registered with the interpreter so the inverse transform
  // can recover the attached pair.
  Value jworld;
};

struct ValueNode {
  std::variant<EmptyList, double, Value /*reverse-tagged*/, PrimOp, ClosureData,
               CustomData>
      v;
  // Set on values built by the zero constructor; a nonconformant accumulation
  // against such a value behaves as the identity instead of erroring.
  bool pristine_zero = false;

  bool is_empty() const { return v.index() == 0; }
  bool is_real() const { return v.index() == 1; }
  bool is_tagged() const { return v.index() == 2; }
  bool is_prim() const { return v.index() == 3; }
  bool is_closure() const { return v.index() == 4; }
  bool is_custom() const { return v.index() == 5; }

  double real() const { return std::get<1>(v); }
  const Value& inner() const { return std::get<2>(v); }
  PrimOp prim() const { return std::get<3>(v); }
  const ClosureData& closure() const { return std::get<4>(v); }
  const CustomData& custom() const { return std::get<5>(v); }
};

inline Value make_empty() {
  return std::make_shared<ValueNode>(ValueNode{EmptyList{}});
}
inline Value make_real(double x) {
  return std::make_shared<ValueNode>(ValueNode{x});
}
inline Value make_tagged(Value inner) {
  return std::make_shared<ValueNode>(ValueNode{std::move(inner)});
}
inline Value make_prim(PrimOp op) {
  return std::make_shared<ValueNode>(ValueNode{op});
}
inline Value make_closure(Env env, Expr lam) {
  return std::make_shared<ValueNode>(
      ValueNode{ClosureData{std::move(env), std::move(lam)}});
}

// ---------------------------------------------------------------------------
// Encoded pairs
// ---------------------------------------------------------------------------

// A pair <a, b> is the closure <{x1 -> a, x2 -> b}, \x3. (x3 x1) x2>. The
// shape is matched structurally so pairs built by any copy of the encoding
// are recognized.
inline bool is_pair_lam(const Expr& lam_expr) {
  if (!lam_expr->is_lam()) return false;
  const LamData& l = lam_expr->lam();
  if (!l.anf || l.anf->bindings.size() != 2) return false;
  const Binding& b0 = l.anf->bindings[0];
  const Binding& b1 = l.anf->bindings[1];
  if (b0.kind != Binding::Kind::Apply || b1.kind != Binding::Kind::Apply)
    return false;
  if (!(b0.u == l.param) || b0.w == l.param) return false;
  if (!(b1.u == b0.target) || b1.w == l.param || b1.w == b0.target) return false;
  return l.anf->result == b1.target && !b0.w.literal && !b1.w.literal;
}

struct PairView {
  Value car;
  Value cdr;
};

inline std::optional<PairView> try_pair(const Value& v) {
  if (!v->is_closure()) return std::nullopt;
  const ClosureData& c = v->closure();
  if (!is_pair_lam(c.lam)) return std::nullopt;
  const Binding& b0 = c.lam->lam().anf->bindings[0];
  const Binding& b1 = c.lam->lam().anf->bindings[1];
  const Value* a = c.env.find(b0.w);
  const Value* b = c.env.find(b1.w);
  if (!a || !b) return std::nullopt;
  return PairView{*a, *b};
}

// ---------------------------------------------------------------------------
// Structural value equality (IEEE == on reals, so NaN compares unequal)
// ---------------------------------------------------------------------------

inline bool value_equal(const Value& a, const Value& b) {
  if (a.get() == b.get()) return true;
  if (a->v.index() != b->v.index()) return false;
  if (a->is_empty()) return true;
  if (a->is_real()) return a->real() == b->real();
  if (a->is_tagged()) return value_equal(a->inner(), b->inner());
  if (a->is_prim()) return a->prim() == b->prim();
  if (a->is_closure()) {
    const ClosureData &x = a->closure(), &y = b->closure();
    if (!(x.lam.get() == y.lam.get() || expr_equal(x.lam, y.lam))) return false;
    if (x.env.size() != y.env.size()) return false;
    for (size_t i = 0; i < x.env.size(); ++i) {
      const auto& ea = (*x.env.entries)[i];
      const auto& eb = (*y.env.entries)[i];
      if (!(ea.first == eb.first) || !value_equal(ea.second, eb.second))
        return false;
    }
    return true;
  }
  const CustomData &x = a->custom(), &y = b->custom();
  return value_equal(x.primal, y.primal) && value_equal(x.deriv, y.deriv);
}

}  // namespace vlad
