#pragma once

#include <map>
#include <string>
#include <vector>

#include "vlad/syntax.hpp"

namespace vlad {

// The reverse-mode source transformation. Transforming a lambda
//
//   \x0. let x1 = e1 in ... let xn = en in xn
//
// yields \x0~r whose body runs the forward bindings and returns the pair
// (xn~r, backprop), where the backpropagator zero-initializes sensitivities
// for the lambda's untransformed free variables and intermediates, replays
// the bindings in reverse accumulating sensitivities, and returns the pair
// (closure-sensitivity list, parameter sensitivity).
class Transformer {
 public:
  Expr transform_lambda(const Expr& lam_expr) {
    if (!lam_expr->is_lam() || !lam_expr->lam().anf)
      throw InternalError("transform_lambda: expects an ANF lambda");
    auto it = cache_.find(lam_expr.get());
    if (it != cache_.end()) return it->second.second;
    Expr out = build(lam_expr);
    cache_.emplace(lam_expr.get(), std::make_pair(lam_expr, out));
    return out;
  }

 private:
  // Keyed by node identity; the input expression is pinned alongside.
  std::map<const ExprNode*, std::pair<Expr, Expr>> cache_;

  struct Emit {
    std::vector<Binding>* out;
    int counter = 0;

    Variable fresh(const char* stem) {
      return named_var(std::string("%") + stem + std::to_string(++counter));
    }
    void alias(Variable target, Variable src) {
      out->push_back({std::move(target), Binding::Kind::Alias, std::move(src),
                      {}, nullptr});
    }
    Variable apply(Variable target, Variable f, Variable a) {
      out->push_back({target, Binding::Kind::Apply, std::move(f), std::move(a),
                      nullptr});
      return target;
    }
    Variable apply_fresh(const char* stem, Variable f, Variable a) {
      return apply(fresh(stem), std::move(f), std::move(a));
    }
    void abs(Variable target, Expr lam) {
      out->push_back(
          {std::move(target), Binding::Kind::Abs, {}, {}, std::move(lam)});
    }
  };

  static Variable helper(const char* name) { return named_var(name); }

  // Current sensitivity binding per source variable. Accumulations bind a
  // fresh name each time so no target in generated code is ever rebound; a
  // rebound sensitivity would alias distinct adjoints when the generated
  // body is itself transformed.
  using SensMap = std::map<Variable, Variable, VarLess>;

  static void accumulate(Emit& em, SensMap& sens, const Variable& v,
                         const Variable& src) {
    Variable c1 = em.apply_fresh("q", helper("cons"), sens.at(v));
    Variable c2 = em.apply_fresh("q", c1, src);
    sens[v] = em.apply_fresh("s", helper("plus"), c2);
  }

  Expr build(const Expr& lam_expr) {
    const LamData& lam = lam_expr->lam();
    const AnfBody& body = *lam.anf;
    if (body.bindings.empty())
      throw InternalError("transform_lambda: empty body");

    const Variable& param = lam.param;
    Variable rparam = rtag(param);
    std::vector<Variable> bree_elems = bree(lam_expr);

    // Forward pass.
    std::vector<Binding> fwd;
    Emit fe{&fwd};
    for (const Binding& b : body.bindings) {
      switch (b.kind) {
        case Binding::Kind::Alias:
          fe.alias(rtag(b.target), rtag(b.u));
          break;
        case Binding::Kind::Apply: {
          Variable p = fe.apply_fresh("a", rtag(b.u), rtag(b.w));
          fe.apply(rtag(b.target), helper("car"), p);
          fe.apply(btag(b.target), helper("cdr"), p);
          break;
        }
        case Binding::Kind::Abs:
          fe.abs(rtag(b.target), transform_lambda(b.lam));
          break;
      }
    }

    // Sensitivity variables zero-initialized by the backpropagator: the
    // untransformed free variables, the parameter, then every intermediate
    // target except the result.
    std::vector<Variable> zero_list;
    VarSet zeroed;
    zeroed.insert(body.result);
    for (const Variable& v : bree_elems)
      if (zeroed.insert(v).second) zero_list.push_back(v);
    if (zeroed.insert(param).second) zero_list.push_back(param);
    for (const Binding& b : body.bindings)
      if (zeroed.insert(b.target).second) zero_list.push_back(b.target);
    zeroed.erase(body.result);

    auto tracked = [&](const Variable& v) { return zeroed.count(v) != 0; };

    // Backpropagator body.
    std::vector<Binding> bwd;
    Emit be{&bwd};
    SensMap sens;
    Variable sens_param = stag(body.result);
    sens[body.result] = sens_param;
    for (const Variable& v : zero_list) {
      Variable raw = be.apply_fresh("z", helper("rad-inverse"), rtag(v));
      be.apply(stag(v), helper("zero"), raw);
      sens[v] = stag(v);
    }
    for (size_t i = body.bindings.size(); i-- > 0;) {
      const Binding& b = body.bindings[i];
      switch (b.kind) {
        case Binding::Kind::Alias:
          if (tracked(b.u)) accumulate(be, sens, b.u, sens.at(b.target));
          break;
        case Binding::Kind::Apply: {
          Variable r =
              be.apply_fresh("r", btag(b.target), sens.at(b.target));
          if (tracked(b.u)) {
            Variable c = be.apply_fresh("c", helper("car"), r);
            accumulate(be, sens, b.u, c);
          }
          if (tracked(b.w)) {
            Variable d = be.apply_fresh("d", helper("cdr"), r);
            accumulate(be, sens, b.w, d);
          }
          break;
        }
        case Binding::Kind::Abs: {
          std::vector<Variable> inner = bree(b.lam);
          bool any = false;
          for (const Variable& v : inner) any = any || tracked(v);
          if (inner.empty() || !any) break;
          int depth = b.lam->lam().param.reverse_depth();
          Variable cur = sens.at(b.target);
          for (int k = 0; k < depth; ++k)
            cur = be.apply_fresh("u", helper("rad-inverse"), cur);
          for (size_t m = 0; m < inner.size(); ++m) {
            if (tracked(inner[m])) {
              Variable h = be.apply_fresh("h", helper("car"), cur);
              for (int k = 0; k < depth; ++k)
                h = be.apply_fresh("g", helper("rad"), h);
              accumulate(be, sens, inner[m], h);
            }
            if (m + 1 < inner.size())
              cur = be.apply_fresh("t", helper("cdr"), cur);
          }
          break;
        }
      }
    }

    // Result pair: (closure-sensitivity list tagged by the parameter,
    // parameter sensitivity).
    int d0 = param.reverse_depth();
    Variable list_var;
    {
      std::vector<Variable> elems;
      for (const Variable& v : bree_elems) {
        Variable s = sens.at(v);
        for (int k = 0; k < d0; ++k)
          s = be.apply_fresh("u", helper("rad-inverse"), s);
        elems.push_back(s);
      }
      Variable cur = empty_lit_var();
      for (size_t m = elems.size(); m-- > 0;) {
        Variable c1 = be.apply_fresh("l", helper("cons"), elems[m]);
        cur = be.apply_fresh("l", c1, cur);
      }
      for (int k = 0; k < d0; ++k) cur = be.apply_fresh("g", helper("rad"), cur);
      list_var = cur;
    }
    Variable p1 = be.apply_fresh("p", helper("cons"), list_var);
    Variable p2 = be.apply_fresh("p", p1, sens.at(param));
    AnfBody bwd_body{std::move(bwd), p2};

    // The backpropagator's own closure-sensitivity layout: its free
    // variables that the enclosing transformed body tracks.
    VarSet tracked_here;
    tracked_here.insert(rparam);
    for (const Binding& b : fwd) tracked_here.insert(b.target);
    for (const Variable& v : bree_elems) tracked_here.insert(rtag(v));
    std::vector<Variable> bp_fv =
        compute_lam_fv(sens_param, nullptr, std::optional<AnfBody>(bwd_body));
    std::vector<Variable> bp_bree;
    for (const Variable& v : bp_fv)
      if (tracked_here.count(v)) bp_bree.push_back(v);

    Expr bp_lam = make_anf_lam(sens_param, std::move(bwd_body), std::nullopt,
                               nullptr, std::move(bp_bree));

    Emit tail{&fwd};
    tail.counter = fe.counter;
    Variable bp_target = named_var("%bprop");
    tail.abs(bp_target, bp_lam);
    Variable c1 = tail.apply_fresh("p", helper("cons"), rtag(body.result));
    Variable c2 = tail.apply_fresh("p", c1, bp_target);

    AnfBody fwd_body{std::move(fwd), c2};
    return make_anf_lam(rparam, std::move(fwd_body), std::nullopt, lam_expr);
  }
};

}  // namespace vlad
