#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "vlad/runtime.hpp"
#include "vlad/stdlib_source.hpp"

namespace vlad::test {

// One interpreter with the stdlib preloaded, plus the helpers the oracles
// use: evaluating sources, applying functions, gradients, and central
// finite differences (the independent check for every derivative value).
struct Session {
  Interp in;
  Env env;

  explicit Session(bool with_stdlib = true, long budget = 20000000) {
    in.step_budget = budget;
    env = in.sigma0();
    if (with_stdlib) env = in.eval_program(env, parse(kStdlibSource)).second;
  }

  Value run(const std::string& src) {
    auto [v, e] = in.eval_program(env, parse(src));
    env = e;
    return v;
  }

  double run_real(const std::string& src) {
    Value v = run(src);
    if (!v->is_real()) throw LangError("expected a real from: " + src);
    return v->real();
  }

  Value fn(const std::string& src) { return run(src); }

  double apply_real(const Value& f, double x) {
    in.reset_steps();
    Value r = in.apply(f, make_real(x));
    if (!r->is_real()) throw LangError("expected a real result");
    return r->real();
  }

  // In-language gradient via the stdlib operator.
  double grad(const Value& f, double x) {
    in.reset_steps();
    const Value* g = env.find(named_var("gradient"));
    if (!g) throw LangError("stdlib gradient missing");
    Value r = in.apply(in.apply(*g, f), make_real(x));
    if (!r->is_real()) throw LangError("gradient not a real");
    return r->real();
  }

  double grad(const std::string& fsrc, double x) { return grad(fn(fsrc), x); }

  // Central finite difference, the derivative oracle.
  double fd(const Value& f, double x, double h = 0.0) {
    if (h == 0.0) h = 1e-6 * std::max(1.0, std::fabs(x));
    return (apply_real(f, x + h) - apply_real(f, x - h)) / (2 * h);
  }

  Value list_of(const std::vector<double>& xs) {
    std::vector<Value> vs;
    for (double x : xs) vs.push_back(make_real(x));
    return in.make_list_value(vs);
  }
};

inline double rel_err(double a, double b) {
  double d = std::fabs(a - b);
  double m = std::max(std::fabs(a), std::fabs(b));
  return m < 1e-12 ? d : d / m;
}

// Reads a printed data value back: numbers, proper lists, dotted pairs.
inline Value value_from_surface(Interp& in, const Surface& s) {
  switch (s->kind) {
    case SurfaceExpr::Kind::Real:
      return make_real(s->real);
    case SurfaceExpr::Kind::Symbol:
      throw LangError("not a data form: " + s->symbol);
    case SurfaceExpr::Kind::List: {
      Value tail = s->dotted_tail ? value_from_surface(in, s->dotted_tail)
                                  : make_empty();
      for (size_t i = s->children.size(); i-- > 0;)
        tail = in.make_pair_value(value_from_surface(in, s->children[i]), tail);
      return tail;
    }
  }
  throw InternalError("value_from_surface");
}

inline Value read_value(Interp& in, const std::string& text) {
  return value_from_surface(in, parse_one(text));
}

// Deterministic generator for random values used by the algebra properties.
struct ValueGen {
  Interp& in;
  std::mt19937 rng;
  explicit ValueGen(Interp& interp, uint32_t seed) : in(interp), rng(seed) {}

  double real() {
    std::uniform_real_distribution<double> d(-8.0, 8.0);
    return d(rng);
  }
  int pick(int n) { return static_cast<int>(rng() % static_cast<uint32_t>(n)); }

  // Differentiable data: reals, empties, pairs.
  Value data(int depth = 3) {
    if (depth == 0 || pick(3) == 0)
      return pick(4) == 0 ? make_empty() : make_real(real());
    return in.make_pair_value(data(depth - 1), data(depth - 1));
  }

  // Values whose reverse-tagging differentiation can actually produce:
  // tagged closures never arise (closures transform instead).
  Value taggable(int depth = 2) {
    if (depth > 0 && pick(3) == 0) return make_tagged(taggable(depth - 1));
    return pick(4) == 0 ? make_empty() : make_real(real());
  }

  // A random value conformant with zero_of(v): gradients of pairs are
  // two-element lists, mirroring the zero constructor.
  Value sens_like(const Value& v) {
    if (v->is_real()) return make_real(real());
    if (v->is_empty()) return make_empty();
    if (v->is_tagged()) return make_tagged(sens_like(v->inner()));
    if (auto p = try_pair(v))
      return in.make_pair_value(
          sens_like(p->car),
          in.make_pair_value(sens_like(p->cdr), make_empty()));
    return in.zero_of(v);
  }

  // Any value form: data, tagged data, primitives, closures, customs.
  Value any(int depth = 3) {
    switch (pick(6)) {
      case 0: return data(depth);
      case 1: return make_tagged(data(depth > 0 ? depth - 1 : 0));
      case 2: return make_prim(kPrimNames[pick(kPrimNames.size())].first);
      case 3: return closure();
      case 4: return custom(depth);
      default: return data(depth);
    }
  }

  Value closure() {
    static const char* lams[] = {
        "(lambda (x) x)",
        "(lambda (x) (* x x))",
        "(lambda (x) (+ x 1))",
        "(lambda (p) (car p))",
        "(lambda (x) (lambda (y) (* x y)))",
    };
    Expr e = to_anf(desugar(parse_one(lams[pick(5)])));
    return in.evaluate(in.sigma0(), e);
  }

  Value custom(int depth) {
    Value primal = closure();
    Value deriv = pick(2) == 0 ? closure() : any(depth > 0 ? depth - 1 : 0);
    return in.apply(make_prim(PrimOp::Attach),
                    in.make_pair_value(primal, deriv));
  }
};

}  // namespace vlad::test
