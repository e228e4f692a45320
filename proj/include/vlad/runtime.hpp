#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "vlad/desugar.hpp"
#include "vlad/printer.hpp"
#include "vlad/reader.hpp"
#include "vlad/transform.hpp"
#include "vlad/value.hpp"

namespace vlad {

inline std::string describe_value(const Value& v) {
  if (v->is_empty()) return "()";
  if (v->is_real()) return "real " + format_real(v->real());
  if (v->is_tagged()) return "reverse-tagged value";
  if (v->is_prim()) return "primitive " + std::string(prim_name(v->prim()));
  if (v->is_custom()) return "custom-derivative value";
  return try_pair(v) ? "pair" : "closure";
}

// One interpreter instance: the top-level environment, the transform and
// memo caches, and the apply-step budget. Instances are single-threaded and
// independent.
class Interp {
 public:
  long step_budget = 1000000;
  bool trace = false;

  Interp() { bootstrap(); }

  const Env& sigma0() const { return sigma0_; }
  long steps() const { return steps_; }
  void reset_steps() { steps_ = 0; }

  // -------------------------------------------------------------------------
  // Evaluation
  // -------------------------------------------------------------------------

  Value evaluate(const Env& env, const Expr& e) {
    if (e->is_var()) return lookup(env, nullptr, e->var());
    if (e->is_app()) {
      Value f = evaluate(env, e->app().first);
      Value a = evaluate(env, e->app().second);
      return apply(f, a);
    }
    return close(env, nullptr, e);
  }

  Value apply(const Value& f, const Value& v) {
    if (++steps_ > step_budget)
      throw ResourceError("step budget exceeded (" +
                          std::to_string(step_budget) + " applications)");
    if (trace) {
      std::fprintf(stderr, "%*sA %s\n", depth_ > 40 ? 40 : depth_, "",
                   describe_value(f).c_str());
    }
    if (f->is_closure()) {
      ++depth_;
      Value r = apply_closure(f->closure(), v);
      --depth_;
      return r;
    }
    if (f->is_prim()) return apply_prim(f->prim(), v);
    if (f->is_custom()) return apply(f->custom().primal, v);
    throw LangError("cannot apply a non-function (" + describe_value(f) + ")");
  }

  // -------------------------------------------------------------------------
  // AD value operations
  // -------------------------------------------------------------------------

  Value zero_of(const Value& v) {
    if (v->is_empty() || v->is_prim()) return pristine(make_empty());
    if (v->is_real()) return pristine(make_real(0.0));
    if (v->is_tagged()) return pristine(make_tagged(zero_of(v->inner())));
    if (v->is_custom()) return zero_of(v->custom().primal);
    auto it = zero_cache_.find(v.get());
    if (it != zero_cache_.end()) return it->second.second;
    // The closure differentiation hands out for an attached pair is a
    // reverse-world value; its zero lives there too.
    auto reg = attach_registry_.find(v.get());
    if (reg != attach_registry_.end()) {
      Value out = j(zero_of(reg->second));
      zero_cache_.emplace(v.get(), std::make_pair(v, out));
      return out;
    }
    const ClosureData& c = v->closure();
    std::vector<Variable> elems = bree(c.lam);
    std::vector<Value> zs;
    zs.reserve(elems.size());
    for (const Variable& e : elems) zs.push_back(zero_of(capture(c, e)));
    int depth = c.lam->lam().param.reverse_depth();
    Value out = tagged_list(zs, depth);
    zero_cache_.emplace(v.get(), std::make_pair(v, out));
    return out;
  }

  Value plus(const Value& a, const Value& b) {
    std::vector<std::string> path;
    return plus_rec(a, b, path);
  }

  Value j(const Value& v) {
    if (v->is_custom()) return v->custom().jworld;
    if (v->is_prim()) return prim_transform(v->prim());
    if (v->is_closure()) {
      auto it = j_cache_.find(v.get());
      if (it != j_cache_.end()) return it->second.second;
      const ClosureData& c = v->closure();
      Expr tlam = transformer_.transform_lambda(c.lam);
      Value out = make_closure(transform_env(c, tlam), tlam);
      if (v->pristine_zero) out = pristine(out);
      j_cache_.emplace(v.get(), std::make_pair(v, out));
      jinv_cache_.emplace(out.get(), std::make_pair(out, v));
      return out;
    }
    Value out = make_tagged(v);
    if (v->pristine_zero) out = pristine(out);
    return out;
  }

  Value j_inverse(const Value& v) {
    auto reg = attach_registry_.find(v.get());
    if (reg != attach_registry_.end()) return reg->second;
    if (v->is_tagged()) return v->inner();
    if (v->is_custom())
      return make_custom_value(j_inverse(v->custom().primal), v);
    if (v->is_closure()) {
      const LamData& lam = v->closure().lam->lam();
      if (lam.prim_origin) return make_prim(*lam.prim_origin);
      if (lam.origin) {
        auto it = jinv_cache_.find(v.get());
        if (it != jinv_cache_.end()) return it->second.second;
        const LamData& orig = lam.origin->lam();
        std::vector<std::pair<Variable, Value>> entries;
        for (const Variable& x : orig.fv) {
          if (x.literal && x.all_reverse()) continue;
          const Value* e = v->closure().env.find(rtag(x));
          if (!e)
            throw InternalError("j_inverse: transformed environment misses " +
                                print_variable(rtag(x)));
          entries.emplace_back(x, j_inverse(*e));
        }
        Value out = make_closure(Env(std::move(entries)), lam.origin);
        jinv_cache_.emplace(v.get(), std::make_pair(v, out));
        j_cache_.emplace(out.get(), std::make_pair(out, v));
        return out;
      }
    }
    throw LangError("not a reverse-tagged value (" + describe_value(v) + ")");
  }

  // Builds a pair tagged by a variable carrying `depth` reverse tags.
  Value tagged_pair(Value a, Value b, int depth) {
    if (depth == 0) return make_pair_value(std::move(a), std::move(b));
    try {
      Value ra = j_inverse(a), rb = j_inverse(b);
      return j(tagged_pair(std::move(ra), std::move(rb), depth - 1));
    } catch (const LangError&) {
      throw ConformanceError(
          "tagged pair over a reverse-tagged variable needs reverse-world "
          "parts",
          {});
    }
  }
  Value tagged_empty(int depth) {
    Value v = make_empty();
    for (int k = 0; k < depth; ++k) v = j(v);
    return v;
  }

  Value make_pair_value(Value a, Value b) {
    std::vector<std::pair<Variable, Value>> e;
    e.emplace_back(named_var("x1"), std::move(a));
    e.emplace_back(named_var("x2"), std::move(b));
    return make_closure(Env(std::move(e)), cons_inner_lam_);
  }

  Value make_list_value(const std::vector<Value>& elems) {
    Value v = make_empty();
    for (size_t i = elems.size(); i-- > 0;) v = make_pair_value(elems[i], v);
    return v;
  }

  // -------------------------------------------------------------------------
  // Program helpers
  // -------------------------------------------------------------------------

  Expr compile(const Surface& form) { return to_anf(desugar(form)); }

  Value eval_form(const Env& env, const Surface& form) {
    return evaluate(env, compile(form));
  }

  // Evaluates a sequence of top-level forms; (define n e) extends the
  // environment for the remaining forms. Returns the last value and the
  // resulting environment. The step budget applies per form.
  std::pair<Value, Env> eval_program(Env env, const std::vector<Surface>& forms) {
    Value last = make_empty();
    for (const Surface& f : forms) {
      reset_steps();
      if (f->kind == SurfaceExpr::Kind::List && !f->children.empty() &&
          f->children[0]->kind == SurfaceExpr::Kind::Symbol &&
          f->children[0]->symbol == "define") {
        if (f->children.size() != 3 ||
            f->children[1]->kind != SurfaceExpr::Kind::Symbol)
          throw ParseError("define expects (define name expr)", f->line,
                           f->column);
        Value v = eval_form(env, f->children[2]);
        env = extend(env, f->children[1]->symbol_var, v);
        last = v;
      } else {
        last = eval_form(env, f);
      }
    }
    return {last, env};
  }

  static Env extend(const Env& env, const Variable& var, Value v) {
    std::vector<std::pair<Variable, Value>> entries = *env.entries;
    auto it = std::lower_bound(entries.begin(), entries.end(), var,
                               [](const auto& a, const Variable& b) {
                                 return VarLess{}(a.first, b);
                               });
    if (it != entries.end() && it->first == var)
      it->second = std::move(v);
    else
      entries.insert(it, {var, std::move(v)});
    return Env(std::move(entries));
  }

  Value prim_transform(PrimOp op) {
    auto it = prim_transforms_.find(op);
    if (it != prim_transforms_.end()) return it->second;
    Value v = build_prim_transform(op);
    prim_transforms_.emplace(op, v);
    return v;
  }

 private:
  Transformer transformer_;
  Env sigma0_;
  Value true_val_, false_val_, cons_val_;
  Expr cons_inner_lam_;
  std::map<PrimOp, Value> prim_transforms_;
  std::map<const ValueNode*, std::pair<Value, Value>> j_cache_, jinv_cache_,
      zero_cache_;
  std::map<const ValueNode*, Value> attach_registry_;
  long steps_ = 0;
  int depth_ = 0;

  using Scope = std::vector<std::pair<Variable, Value>>;

  static Value pristine(Value v) {
    const_cast<ValueNode&>(*v).pristine_zero = true;
    return v;
  }

  Value lookup(const Env& env, const Scope* scope, const Variable& v) {
    if (scope)
      for (size_t i = scope->size(); i-- > 0;)
        if ((*scope)[i].first == v) return (*scope)[i].second;
    if (const Value* e = env.find(v)) return *e;
    if (v.literal && v.all_reverse()) {
      Value out = v.lit_empty ? make_empty() : make_real(v.lit_value);
      for (size_t k = 0; k < v.tags.size(); ++k) out = j(out);
      return out;
    }
    throw LangError("unbound variable: " + print_variable(v));
  }

  Value capture(const ClosureData& c, const Variable& v) {
    if (v.literal && v.all_reverse()) {
      Value out = v.lit_empty ? make_empty() : make_real(v.lit_value);
      for (size_t k = 0; k < v.tags.size(); ++k) out = j(out);
      return out;
    }
    const Value* e = c.env.find(v);
    if (!e) throw InternalError("closure misses capture " + print_variable(v));
    return *e;
  }

  Value close(const Env& env, const Scope* scope, const Expr& lam_expr) {
    const LamData& lam = lam_expr->lam();
    if (!lam.anf) throw InternalError("evaluate: lambda body not in ANF");
    std::vector<std::pair<Variable, Value>> entries;
    entries.reserve(lam.fv.size());
    for (const Variable& v : lam.fv) {
      if (v.literal && v.all_reverse()) continue;  // resolved by the evaluator
      entries.emplace_back(v, lookup(env, scope, v));
    }
    return make_closure(Env(std::move(entries)), lam_expr);
  }

  Value apply_closure(const ClosureData& c, const Value& arg) {
    const LamData& lam = c.lam->lam();
    Scope scope;
    scope.reserve(lam.anf->bindings.size() + 1);
    scope.emplace_back(lam.param, arg);
    for (const Binding& b : lam.anf->bindings) {
      Value v;
      switch (b.kind) {
        case Binding::Kind::Alias:
          v = lookup(c.env, &scope, b.u);
          break;
        case Binding::Kind::Apply: {
          Value f = lookup(c.env, &scope, b.u);
          Value a = lookup(c.env, &scope, b.w);
          v = apply(f, a);
          break;
        }
        case Binding::Kind::Abs:
          v = close(c.env, &scope, b.lam);
          break;
      }
      scope.emplace_back(b.target, std::move(v));
    }
    return lookup(c.env, &scope, lam.anf->result);
  }

  // -------------------------------------------------------------------------
  // Primitive application
  // -------------------------------------------------------------------------

  double want_real(PrimOp op, const Value& v) {
    if (!v->is_real())
      throw LangError(std::string(prim_name(op)) + " expects a real, got " +
                      describe_value(v));
    return v->real();
  }

  PairView want_pair(PrimOp op, const Value& v) {
    auto p = try_pair(v);
    if (!p)
      throw LangError(std::string(prim_name(op)) +
                      " expects an argument pair, got " + describe_value(v));
    return *p;
  }

  Value boolean(bool b) { return b ? true_val_ : false_val_; }

  Value apply_prim(PrimOp op, const Value& v) {
    if (is_unary_real(op)) {
      double x = want_real(op, v);
      double y = 0;
      switch (op) {
        case PrimOp::Sqrt: y = std::sqrt(x); break;
        case PrimOp::Exp: y = std::exp(x); break;
        case PrimOp::Log: y = std::log(x); break;
        case PrimOp::Sin: y = std::sin(x); break;
        case PrimOp::Cos: y = std::cos(x); break;
        case PrimOp::Neg: y = -x; break;
        case PrimOp::Abs: y = std::fabs(x); break;
        default: break;
      }
      return make_real(y);
    }
    if (is_binary_real(op)) {
      PairView p = want_pair(op, v);
      double a = want_real(op, p.car), b = want_real(op, p.cdr);
      double y = 0;
      switch (op) {
        case PrimOp::Add: y = a + b; break;
        case PrimOp::Sub: y = a - b; break;
        case PrimOp::Mul: y = a * b; break;
        case PrimOp::Div: y = a / b; break;
        case PrimOp::Atan2: y = std::atan2(a, b); break;
        default: break;
      }
      return make_real(y);
    }
    if (is_unary_bool(op)) {
      switch (op) {
        case PrimOp::IsNull: return boolean(v->is_empty());
        case PrimOp::IsReal: return boolean(v->is_real());
        case PrimOp::IsPair: return boolean(try_pair(v).has_value());
        case PrimOp::IsZero: return boolean(want_real(op, v) == 0.0);
        case PrimOp::IsPositive: return boolean(want_real(op, v) > 0.0);
        case PrimOp::IsNegative: return boolean(want_real(op, v) < 0.0);
        default: break;
      }
    }
    if (is_binary_bool(op)) {
      PairView p = want_pair(op, v);
      double a = want_real(op, p.car), b = want_real(op, p.cdr);
      switch (op) {
        case PrimOp::Lt: return boolean(a < b);
        case PrimOp::Le: return boolean(a <= b);
        case PrimOp::EqNum: return boolean(a == b);
        case PrimOp::Gt: return boolean(a > b);
        case PrimOp::Ge: return boolean(a >= b);
        default: break;
      }
    }
    switch (op) {
      case PrimOp::Zero: return zero_of(v);
      case PrimOp::Plus: {
        PairView p = want_pair(op, v);
        return plus(p.car, p.cdr);
      }
      case PrimOp::Rad: return j(v);
      case PrimOp::RadInverse: return j_inverse(v);
      case PrimOp::Attach: {
        PairView p = want_pair(op, v);
        return make_custom_value(p.car, p.cdr);
      }
      default: break;
    }
    throw InternalError("apply_prim: unhandled primitive");
  }

  Value make_custom_value(Value primal, Value deriv) {
    // Differentiation hands out a private copy of the attached derivative;
    // the inverse transform maps that copy back to the attached pair.
    Value jworld = std::make_shared<ValueNode>(*deriv);
    auto node = std::make_shared<ValueNode>(
        ValueNode{CustomData{std::move(primal), std::move(deriv), jworld}});
    attach_registry_[jworld.get()] = node;
    return node;
  }

  // -------------------------------------------------------------------------
  // Gradient accumulation
  // -------------------------------------------------------------------------

  [[noreturn]] void conformance_fail(const Value& a, const Value& b,
                                     std::vector<std::string>& path) {
    throw ConformanceError(
        "cannot add " + describe_value(a) + " and " + describe_value(b), path);
  }

  Value plus_rec(const Value& a, const Value& b,
                 std::vector<std::string>& path) {
    if (a->is_custom()) return plus_rec(a->custom().primal, b, path);
    if (b->is_custom()) return plus_rec(a, b->custom().primal, path);
    if (a->v.index() == b->v.index()) {
      if (a->is_empty()) return both_pristine(a, b, make_empty());
      if (a->is_real())
        return both_pristine(a, b, make_real(a->real() + b->real()));
      if (a->is_tagged()) {
        path.push_back("reverse");
        Value inner = plus_rec(a->inner(), b->inner(), path);
        path.pop_back();
        return both_pristine(a, b, make_tagged(std::move(inner)));
      }
      if (a->is_prim()) {
        if (a->prim() == b->prim()) return a;
        return rescue(a, b, path);
      }
      const ClosureData& ca = a->closure();
      const ClosureData& cb = b->closure();
      if (!(ca.lam.get() == cb.lam.get() || expr_equal(ca.lam, cb.lam)) ||
          ca.env.size() != cb.env.size())
        return rescue(a, b, path);
      std::vector<std::pair<Variable, Value>> entries;
      entries.reserve(ca.env.size());
      for (size_t i = 0; i < ca.env.size(); ++i) {
        const auto& ea = (*ca.env.entries)[i];
        const auto& eb = (*cb.env.entries)[i];
        if (!(ea.first == eb.first)) return rescue(a, b, path);
        path.push_back("slot " + print_variable(ea.first));
        entries.emplace_back(ea.first, plus_rec(ea.second, eb.second, path));
        path.pop_back();
      }
      return both_pristine(a, b, make_closure(Env(std::move(entries)), ca.lam));
    }
    return rescue(a, b, path);
  }

  static Value both_pristine(const Value& a, const Value& b, Value r) {
    if (a->pristine_zero && b->pristine_zero) return pristine(std::move(r));
    return r;
  }

  // A slot initialized by the zero constructor rejects a contribution whose
  // shape disagrees with the slot's forward value: the slot keeps its
  // authoritative shape and the contribution is dropped. The one such flow
  // the transform produces is the derivative-slot component of the attach
  // operator's backpropagator, whose information also reaches the primal
  // slot. Nonconformant sums between ordinary values still fail.
  Value rescue(const Value& a, const Value& b, std::vector<std::string>& path) {
    if (a->pristine_zero || b->pristine_zero)
      return a->pristine_zero ? a : b;
    conformance_fail(a, b, path);
  }

  // -------------------------------------------------------------------------
  // Environment transformation
  // -------------------------------------------------------------------------

  Env transform_env(const ClosureData& c, const Expr& tlam) {
    std::vector<std::pair<Variable, Value>> entries;
    const LamData& lam = c.lam->lam();
    for (const Variable& x : lam.fv) {
      if (x.literal && x.all_reverse()) continue;
      const Value* e = c.env.find(x);
      if (!e) throw LangError("unbound variable: " + print_variable(x));
      entries.emplace_back(rtag(x), j(*e));
    }
    for (const Variable& w : tlam->lam().fv) {
      if (!w.untagged()) continue;  // the reverse-tagging of a source variable
      if (w.literal) continue;
      const Value* s = sigma0_.find(w);
      if (!s)
        throw InternalError("transform introduced unknown name " +
                            print_variable(w));
      entries.emplace_back(w, *s);
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& x, const auto& y) {
                return VarLess{}(x.first, y.first);
              });
    return Env(std::move(entries));
  }

  Value tagged_list(const std::vector<Value>& elems, int depth) {
    Value cur = pristine(tagged_empty(depth));
    for (size_t i = elems.size(); i-- > 0;)
      cur = pristine(tagged_pair(elems[i], cur, depth));
    return cur;
  }

  // -------------------------------------------------------------------------
  // Bootstrap: the top-level environment and transformed primitives
  // -------------------------------------------------------------------------

  Value eval_closed(const char* src) {
    Expr e = to_anf(desugar(parse_one(src, true)));
    return evaluate(Env{}, e);
  }

  void bootstrap() {
    cons_val_ = eval_closed(
        "(lambda (x1) (lambda (x2) (lambda (x3) ((x3 x1) x2))))");
    // inner pair lambda: cons applied twice closes over x1/x2
    const Expr& outer = cons_val_->closure().lam;
    const Expr& mid = outer->lam().anf->bindings[0].lam;
    cons_inner_lam_ = mid->lam().anf->bindings[0].lam;

    Value car = eval_closed("(lambda (p) (p (lambda (x1) (lambda (x2) x1))))");
    Value cdr = eval_closed("(lambda (p) (p (lambda (x1) (lambda (x2) x2))))");
    true_val_ = car;
    false_val_ = cdr;

    std::vector<std::pair<Variable, Value>> entries;
    for (auto& [op, name] : kPrimNames)
      entries.emplace_back(named_var(std::string(name)), make_prim(op));
    entries.emplace_back(named_var("cons"), cons_val_);
    entries.emplace_back(named_var("car"), car);
    entries.emplace_back(named_var("cdr"), cdr);
    entries.emplace_back(named_var("true"), true_val_);
    entries.emplace_back(named_var("false"), false_val_);
    std::sort(entries.begin(), entries.end(),
              [](const auto& x, const auto& y) {
                return VarLess{}(x.first, y.first);
              });
    sigma0_ = Env(std::move(entries));
  }

  // Source of the transformed primitive for `op`, written against the
  // top-level environment. The parameter is the reverse-world input; the
  // body strips it, computes the primal, and pairs the reverse-world result
  // with the backpropagator.
  std::string prim_transform_source(PrimOp op) {
    std::string n(prim_name(op));
    if (is_unary_real(op)) {
      std::string deriv;
      switch (op) {
        case PrimOp::Sqrt: deriv = "(/ 1 (* 2 y))"; break;
        case PrimOp::Exp: deriv = "y"; break;
        case PrimOp::Log: deriv = "(/ 1 x)"; break;
        case PrimOp::Sin: deriv = "(cos x)"; break;
        case PrimOp::Cos: deriv = "(neg (sin x))"; break;
        case PrimOp::Neg: deriv = "-1"; break;
        case PrimOp::Abs: deriv = "(/ x y)"; break;
        default: break;
      }
      return "(lambda (x~r) (let ((x (rad-inverse x~r))) (let ((y (" + n +
             " x))) (cons (rad y) (lambda (y~s) (cons () (* " + deriv +
             " y~s)))))))";
    }
    if (is_binary_real(op)) {
      std::string bp;
      if (op == PrimOp::Atan2) {
        bp = "(let ((den (+ (* x1 x1) (* x2 x2)))) (cons () (cons (* (/ x2 "
             "den) y~s) (cons (* (/ (neg x1) den) y~s) ()))))";
      } else {
        std::string d1, d2;
        switch (op) {
          case PrimOp::Add: d1 = "1"; d2 = "1"; break;
          case PrimOp::Sub: d1 = "1"; d2 = "-1"; break;
          case PrimOp::Mul: d1 = "x2"; d2 = "x1"; break;
          case PrimOp::Div:
            d1 = "(/ 1 x2)";
            d2 = "(/ (neg x1) (* x2 x2))";
            break;
          default: break;
        }
        bp = "(cons () (cons (* " + d1 + " y~s) (cons (* " + d2 +
             " y~s) ())))";
      }
      return "(lambda (z~r) (let ((z (rad-inverse z~r))) (let ((x1 (car z))) "
             "(let ((x2 (cdr z))) (let ((y (" +
             n + " z))) (cons (rad y) (lambda (y~s) " + bp + ")))))))";
    }
    if (is_unary_bool(op)) {
      return "(lambda (x~r) (let ((x (rad-inverse x~r))) (cons (rad (" + n +
             " x)) (lambda (y~s) (cons () (zero x))))))";
    }
    if (is_binary_bool(op)) {
      return "(lambda (z~r) (let ((z (rad-inverse z~r))) (let ((x1 (car z))) "
             "(let ((x2 (cdr z))) (cons (rad (" +
             n +
             " z)) (lambda (y~s) (cons () (cons (zero x1) (cons (zero x2) "
             "())))))))))";
    }
    switch (op) {
      case PrimOp::Zero:
        return "(lambda (x~r) (let ((x (rad-inverse x~r))) (cons (rad (zero "
               "x)) (lambda (y~s) (cons () (zero x))))))";
      case PrimOp::Plus:
        return "(lambda (z~r) (let ((z (rad-inverse z~r))) (cons (rad (plus "
               "z)) (lambda (y~s) (cons () (cons y~s (cons y~s ())))))))";
      case PrimOp::Rad:
        return "(lambda (x~r) (cons (rad x~r) (lambda (y~s) (cons () "
               "(rad-inverse y~s)))))";
      case PrimOp::RadInverse:
        return "(lambda (x~r) (let ((x (rad-inverse x~r))) (cons (rad "
               "(rad-inverse x)) (lambda (y~s) (cons () (rad y~s))))))";
      case PrimOp::Attach:
        return "(lambda (z~r) (let ((z (rad-inverse z~r))) (let ((x1 (car "
               "z))) (let ((x2 (cdr z))) (cons (rad (attach-derivative (cons "
               "x1 x2))) (lambda (y~s) (cons () (cons y~s (cons (rad y~s) "
               "())))))))))";
      default: break;
    }
    throw InternalError("prim_transform_source: unhandled primitive");
  }

  Value build_prim_transform(PrimOp op) {
    Expr raw = to_anf(desugar(parse_one(prim_transform_source(op).c_str(), true)));
    const LamData& lam = raw->lam();

    // Mark the top-level body and attach sensitivity layouts to the
    // generated backpropagator lambdas inside it.
    VarSet tracked;
    tracked.insert(lam.param);
    for (const Binding& b : lam.anf->bindings) tracked.insert(b.target);

    AnfBody body = *lam.anf;
    for (Binding& b : body.bindings) {
      if (b.kind != Binding::Kind::Abs) continue;
      const LamData& inner = b.lam->lam();
      if (inner.param.untagged() || inner.param.has_top(Tag::Reverse)) continue;
      std::vector<Variable> ab;
      for (const Variable& v : inner.fv)
        if (tracked.count(v)) ab.push_back(v);
      b.lam = make_anf_lam(inner.param, *inner.anf, std::nullopt, nullptr,
                           std::move(ab));
    }
    Expr marked = make_anf_lam(lam.param, std::move(body), op);

    std::vector<std::pair<Variable, Value>> entries;
    for (const Variable& v : marked->lam().fv) {
      if (v.literal) continue;
      const Value* e = sigma0_.find(v);
      if (!e)
        throw InternalError("primitive transform needs unknown name " +
                            print_variable(v));
      entries.emplace_back(v, *e);
    }
    return make_closure(Env(std::move(entries)), marked);
  }
};

}  // namespace vlad
