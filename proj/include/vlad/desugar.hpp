#pragma once

#include <string>
#include <vector>

#include "vlad/reader.hpp"
#include "vlad/syntax.hpp"

namespace vlad {

// ---------------------------------------------------------------------------
// Surface -> core expressions
// ---------------------------------------------------------------------------

// Binary calls to these names take their two arguments as one encoded pair.
inline bool pair_call_head(const std::string& name) {
  static const char* heads[] = {"+",  "-", "*",  "/", "atan2", "<",
                                "<=", "=", ">",  ">=", "plus",
                                "attach-derivative"};
  for (const char* h : heads)
    if (name == h) return true;
  return false;
}

class Desugarer {
 public:
  Expr desugar(const Surface& s) {
    switch (s->kind) {
      case SurfaceExpr::Kind::Real:
        return make_var(real_lit_var(s->real));
      case SurfaceExpr::Kind::Symbol:
        return make_var(s->symbol_var);
      case SurfaceExpr::Kind::List:
        return desugar_list(s);
    }
    throw InternalError("desugar: bad surface kind");
  }

 private:
  int fresh_ = 0;

  Variable fresh(const char* stem) {
    return named_var(std::string("%") + stem + std::to_string(++fresh_));
  }

  static bool head_is(const Surface& s, const char* name) {
    return !s->children.empty() &&
           s->children[0]->kind == SurfaceExpr::Kind::Symbol &&
           s->children[0]->symbol == name;
  }

  [[noreturn]] static void form_error(const Surface& s, const std::string& msg) {
    throw ParseError(msg, s->line, s->column);
  }

  Expr desugar_list(const Surface& s) {
    if (s->dotted_tail)
      form_error(s, "dotted pairs are data syntax, not expressions");
    if (s->children.empty()) return make_var(empty_lit_var());
    if (head_is(s, "lambda") || head_is(s, "\xce\xbb")) return desugar_lambda(s);
    if (head_is(s, "let")) return desugar_let(s);
    if (head_is(s, "letrec")) return desugar_letrec(s);
    if (head_is(s, "if")) return desugar_if(s);
    if (head_is(s, "define"))
      form_error(s, "define is only allowed at the top level");

    if (s->children.size() == 3 &&
        s->children[0]->kind == SurfaceExpr::Kind::Symbol &&
        s->children[0]->symbol_var.untagged() &&
        pair_call_head(s->children[0]->symbol)) {
      // (op a b) -> (op ((cons a) b))
      Expr a = desugar(s->children[1]);
      Expr b = desugar(s->children[2]);
      return make_app(desugar(s->children[0]), pair_expr(a, b));
    }

    if (s->children.size() < 2)
      form_error(s, "application needs an operand");
    Expr e = desugar(s->children[0]);
    for (size_t i = 1; i < s->children.size(); ++i)
      e = make_app(e, desugar(s->children[i]));
    return e;
  }

  static Expr pair_expr(Expr a, Expr b) {
    return make_app(make_app(make_var(named_var("cons")), std::move(a)),
                    std::move(b));
  }

  Expr desugar_lambda(const Surface& s) {
    if (s->children.size() != 3)
      form_error(s, "lambda expects (lambda (params...) body)");
    const Surface& params = s->children[1];
    if (params->kind != SurfaceExpr::Kind::List || params->children.empty())
      form_error(s, "lambda expects a non-empty parameter list");
    std::vector<Variable> vars;
    for (const Surface& p : params->children) {
      if (p->kind != SurfaceExpr::Kind::Symbol)
        form_error(s, "lambda parameters must be symbols");
      vars.push_back(p->symbol_var);
    }
    Expr body = desugar(s->children[2]);
    for (size_t i = vars.size(); i-- > 0;) body = make_lam(vars[i], body);
    return body;
  }

  Expr desugar_let(const Surface& s) {
    if (s->children.size() != 3)
      form_error(s, "let expects (let ((name expr)...) body)");
    const Surface& binds = s->children[1];
    if (binds->kind != SurfaceExpr::Kind::List)
      form_error(s, "let expects a binding list");
    Expr body = desugar(s->children[2]);
    for (size_t i = binds->children.size(); i-- > 0;) {
      const Surface& b = binds->children[i];
      if (b->kind != SurfaceExpr::Kind::List || b->children.size() != 2 ||
          b->children[0]->kind != SurfaceExpr::Kind::Symbol)
        form_error(s, "let binding must be (name expr)");
      body = make_app(make_lam(b->children[0]->symbol_var, body),
                      desugar(b->children[1]));
    }
    return body;
  }

  Expr desugar_if(const Surface& s) {
    if (s->children.size() != 4)
      form_error(s, "if expects (if test then else)");
    Expr c = desugar(s->children[1]);
    Variable d1 = fresh("if"), d2 = fresh("if");
    Expr thunk_a = make_lam(d1, desugar(s->children[2]));
    Expr thunk_b = make_lam(d2, desugar(s->children[3]));
    Expr selected = make_app(c, pair_expr(thunk_a, thunk_b));
    return make_app(selected, make_var(empty_lit_var()));
  }

  // An applicative-order fixpoint combinator (the untyped language has no
  // recursion of its own).
  Expr z_combinator() {
    Variable g = named_var("%g"), z = named_var("%z"), v = named_var("%v");
    Expr half = make_lam(
        z, make_app(make_var(g),
                    make_lam(v, make_app(make_app(make_var(z), make_var(z)),
                                         make_var(v)))));
    return make_lam(g, make_app(half, half));
  }

  static Expr sel_car() {
    Variable u = named_var("%u"), w = named_var("%w");
    return make_lam(u, make_lam(w, make_var(u)));
  }
  static Expr sel_cdr() {
    Variable u = named_var("%u"), w = named_var("%w");
    return make_lam(u, make_lam(w, make_var(w)));
  }

  // Extract component i (0-based) out of a right-nested k-tuple reachable by
  // applying `root` to selector closures.
  static Expr extract(Expr root, size_t i, size_t k) {
    Expr e = std::move(root);
    for (size_t j = 0; j < i; ++j) e = make_app(e, sel_cdr());
    if (i + 1 < k) e = make_app(e, sel_car());
    return e;
  }

  Expr desugar_letrec(const Surface& s) {
    if (s->children.size() != 3)
      form_error(s, "letrec expects (letrec ((name expr)...) body)");
    const Surface& binds = s->children[1];
    if (binds->kind != SurfaceExpr::Kind::List)
      form_error(s, "letrec expects a binding list");
    std::vector<Variable> names;
    std::vector<Expr> exprs;
    for (const Surface& b : binds->children) {
      if (b->kind != SurfaceExpr::Kind::List || b->children.size() != 2 ||
          b->children[0]->kind != SurfaceExpr::Kind::Symbol)
        form_error(s, "letrec binding must be (name expr)");
      names.push_back(b->children[0]->symbol_var);
      exprs.push_back(desugar(b->children[1]));
    }
    Expr body = desugar(s->children[2]);
    if (names.empty()) return body;

    if (names.size() == 1) {
      // ((lambda (F) ((lambda (n) body) (F (Z F)))) (lambda (n) e))
      Variable F = fresh("F");
      Expr value = make_app(make_var(F), make_app(z_combinator(), make_var(F)));
      Expr inner = make_app(make_lam(names[0], body), value);
      return make_app(make_lam(F, inner), make_lam(names[0], exprs[0]));
    }

    // Mutual recursion: a single fixpoint over a right-nested tuple. The
    // recursive references are eta-expanded extractions so each use re-enters
    // the fixpoint, and the outer bindings unroll it once to plain values.
    size_t k = names.size();
    Variable self = fresh("self");
    Expr tuple = exprs.back();
    for (size_t i = k - 1; i-- > 0;) tuple = pair_expr(exprs[i], tuple);
    Expr inner = tuple;
    for (size_t i = k; i-- > 0;) inner = make_lam(names[i], inner);
    for (size_t i = 0; i < k; ++i) {
      Variable a = fresh("a");
      Expr wrapper =
          make_lam(a, make_app(extract(make_var(self), i, k), make_var(a)));
      inner = make_app(inner, wrapper);
    }
    Expr F_lam = make_lam(self, inner);

    Variable F = fresh("F"), P = fresh("P");
    Expr nest = body;
    for (size_t i = k; i-- > 0;)
      nest = make_app(make_lam(names[i], nest), extract(make_var(P), i, k));
    Expr with_p =
        make_app(make_lam(P, nest),
                 make_app(z_combinator(), make_var(F)));
    return make_app(make_lam(F, with_p), F_lam);
  }
};

inline Expr desugar(const Surface& s) { return Desugarer{}.desugar(s); }

// The documented file semantics: (define n e) is a chained let over the rest
// of the file; other non-final forms are sequenced.
inline Expr desugar_program(const std::vector<Surface>& forms) {
  if (forms.empty()) return make_var(empty_lit_var());
  Desugarer d;
  int seq = 0;
  // Build from the back.
  Expr rest;
  for (size_t i = forms.size(); i-- > 0;) {
    const Surface& f = forms[i];
    bool is_define = f->kind == SurfaceExpr::Kind::List &&
                     !f->children.empty() &&
                     f->children[0]->kind == SurfaceExpr::Kind::Symbol &&
                     f->children[0]->symbol == "define";
    if (is_define) {
      if (f->children.size() != 3 ||
          f->children[1]->kind != SurfaceExpr::Kind::Symbol)
        throw ParseError("define expects (define name expr)", f->line,
                         f->column);
      Variable n = f->children[1]->symbol_var;
      Expr e = d.desugar(f->children[2]);
      if (!rest) rest = make_var(n);  // a trailing define yields its value
      rest = make_app(make_lam(n, rest), e);
    } else {
      Expr e = d.desugar(f);
      if (!rest)
        rest = e;
      else
        rest = make_app(make_lam(named_var("%seq" + std::to_string(++seq)), rest),
                        e);
    }
  }
  return rest;
}

// ---------------------------------------------------------------------------
// A-normal form conversion
// ---------------------------------------------------------------------------

// Renames free occurrences of `from` to `to` in a pre-ANF expression.
inline Expr rename_free(const Expr& e, const Variable& from, const Variable& to) {
  if (e->is_var()) return e->var() == from ? make_var(to) : e;
  if (e->is_app())
    return make_app(rename_free(e->app().first, from, to),
                    rename_free(e->app().second, from, to));
  const LamData& lam = e->lam();
  if (lam.param == from) return e;
  if (lam.anf) throw InternalError("rename_free: ANF lambda");
  std::vector<Variable> fv = lam.fv;
  if (!std::binary_search(fv.begin(), fv.end(), from, VarLess{})) return e;
  return make_lam(lam.param, rename_free(lam.general, from, to));
}

inline Expr to_anf(const Expr& e);

namespace detail {

struct AnfCtx {
  std::vector<Binding> bindings;
  VarSet bound;
  int counter = 0;

  Variable fresh() {
    Variable v;
    do {
      v = named_var("%" + std::to_string(++counter));
    } while (bound.count(v));
    bound.insert(v);
    return v;
  }
};

inline Variable linearize(AnfCtx& ctx, const Expr& e);

inline void linearize_into(AnfCtx& ctx, const Expr& rhs, const Variable& target) {
  if (rhs->is_var()) {
    ctx.bindings.push_back(
        {target, Binding::Kind::Alias, rhs->var(), {}, nullptr});
  } else if (rhs->is_lam()) {
    ctx.bindings.push_back({target, Binding::Kind::Abs, {}, {}, to_anf(rhs)});
  } else {
    const Expr& f = rhs->app().first;
    const Expr& a = rhs->app().second;
    if (f->is_lam() && !f->lam().anf) {
      // let-redex in binding position
      Variable p = f->lam().param;
      Expr body = f->lam().general;
      if (ctx.bound.count(p)) {
        Variable renamed =
            named_var(p.name + "%" + std::to_string(++ctx.counter));
        renamed.tags = p.tags;
        body = rename_free(body, p, renamed);
        p = renamed;
      }
      linearize_into(ctx, a, p);
      ctx.bound.insert(p);
      linearize_into(ctx, body, target);
    } else {
      Variable vf = linearize(ctx, f);
      Variable va = linearize(ctx, a);
      ctx.bindings.push_back({target, Binding::Kind::Apply, vf, va, nullptr});
    }
  }
  ctx.bound.insert(target);
}

inline Variable linearize(AnfCtx& ctx, const Expr& e) {
  if (e->is_var()) return e->var();
  if (e->is_lam()) {
    Variable t = ctx.fresh();
    ctx.bindings.push_back({t, Binding::Kind::Abs, {}, {}, to_anf(e)});
    return t;
  }
  const Expr& f = e->app().first;
  const Expr& a = e->app().second;
  if (f->is_lam() && !f->lam().anf) {
    Variable p = f->lam().param;
    Expr body = f->lam().general;
    if (ctx.bound.count(p)) {
      Variable renamed = named_var(p.name + "%" + std::to_string(++ctx.counter));
      renamed.tags = p.tags;
      body = rename_free(body, p, renamed);
      p = renamed;
    }
    linearize_into(ctx, a, p);
    ctx.bound.insert(p);
    return linearize(ctx, body);
  }
  Variable vf = linearize(ctx, f);
  Variable va = linearize(ctx, a);
  Variable t = ctx.fresh();
  ctx.bindings.push_back({t, Binding::Kind::Apply, vf, va, nullptr});
  return t;
}

}  // namespace detail

// Converts every lambda body to a binding sequence. Application order is
// preserved: operator before operand, bindings in evaluation order.
inline Expr to_anf(const Expr& e) {
  if (e->is_var()) return e;
  if (e->is_app())
    return make_app(to_anf(e->app().first), to_anf(e->app().second));
  const LamData& lam = e->lam();
  if (lam.anf) return e;
  detail::AnfCtx ctx;
  ctx.bound.insert(lam.param);
  Variable res = detail::linearize(ctx, lam.general);
  if (ctx.bindings.empty() || !(ctx.bindings.back().target == res)) {
    Variable t = ctx.fresh();
    ctx.bindings.push_back({t, Binding::Kind::Alias, res, {}, nullptr});
    res = t;
  }
  return make_anf_lam(lam.param, AnfBody{std::move(ctx.bindings), res});
}

}  // namespace vlad
