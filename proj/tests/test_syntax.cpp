#include <random>

#include "catch_amalgamated.hpp"
#include "support.hpp"
#include "vlad/desugar.hpp"
#include "vlad/printer.hpp"

using namespace vlad;

namespace {

Expr parse_core(const std::string& src) { return desugar(parse_one(src)); }
Expr parse_anf(const std::string& src) { return to_anf(parse_core(src)); }

bool no_internal_tags(const Expr& e) {
  auto bad = [](const Variable& v) {
    for (Tag t : v.tags)
      if (t == Tag::Sensitivity || t == Tag::Backpropagator) return true;
    return false;
  };
  if (e->is_var()) return !bad(e->var());
  if (e->is_app())
    return no_internal_tags(e->app().first) && no_internal_tags(e->app().second);
  const LamData& lam = e->lam();
  if (bad(lam.param)) return false;
  if (lam.anf) {
    for (const Binding& b : lam.anf->bindings) {
      if (bad(b.target)) return false;
      switch (b.kind) {
        case Binding::Kind::Alias:
          if (bad(b.u)) return false;
          break;
        case Binding::Kind::Apply:
          if (bad(b.u) || bad(b.w)) return false;
          break;
        case Binding::Kind::Abs:
          if (!no_internal_tags(b.lam)) return false;
          break;
      }
    }
    return !bad(lam.anf->result);
  }
  return no_internal_tags(lam.general);
}

}  // namespace

TEST_CASE("desugar: let becomes an application of a lambda") {
  Expr e = parse_core("(let ((x 3)) x)");
  REQUIRE(e->is_app());
  REQUIRE(e->app().first->is_lam());
  CHECK(e->app().first->lam().param == named_var("x"));
  REQUIRE(e->app().second->is_var());
  CHECK(e->app().second->var().literal);
  CHECK(e->app().second->var().lit_value == 3.0);
  CHECK(print_expr(e) == "((lambda (x) x) 3)");
}

TEST_CASE("desugar: if becomes a thunk-pair selection applied to ()") {
  Expr e = parse_core("(if c a b)");
  // ((c ((cons (lambda (_) a)) (lambda (_) b))) ())
  REQUIRE(e->is_app());
  REQUIRE(e->app().second->is_var());
  CHECK(e->app().second->var().lit_empty);
  const Expr& sel = e->app().first;
  REQUIRE(sel->is_app());
  REQUIRE(sel->app().first->is_var());
  CHECK(sel->app().first->var() == named_var("c"));
  const Expr& pair = sel->app().second;
  REQUIRE(pair->is_app());
  CHECK(pair->app().second->is_lam());
  const Expr& consapp = pair->app().first;
  REQUIRE(consapp->is_app());
  REQUIRE(consapp->app().first->is_var());
  CHECK(consapp->app().first->var() == named_var("cons"));
  CHECK(consapp->app().second->is_lam());
}

TEST_CASE("desugar: lambda identity is unchanged modulo ANF") {
  Expr e = parse_anf("(lambda (x) x)");
  REQUIRE(e->is_lam());
  const LamData& lam = e->lam();
  CHECK(lam.param == named_var("x"));
  REQUIRE(lam.anf.has_value());
  REQUIRE(lam.anf->bindings.size() == 1);
  CHECK(lam.anf->bindings[0].kind == Binding::Kind::Alias);
  CHECK(lam.anf->bindings[0].u == named_var("x"));
  CHECK(lam.anf->result == lam.anf->bindings[0].target);
}

TEST_CASE("desugar: binary primitive calls take an argument pair") {
  CHECK(print_expr(parse_core("(+ a b)")) == "(+ ((cons a) b))");
  CHECK(print_expr(parse_core("(< a b)")) == "(< ((cons a) b))");
  // non-primitive heads curry
  CHECK(print_expr(parse_core("(f a b)")) == "((f a) b)");
}

TEST_CASE("desugar: malformed special forms are syntax errors naming the form") {
  CHECK_THROWS_WITH(parse_core("(let ((x)) x)"),
                    Catch::Matchers::ContainsSubstring("let"));
  CHECK_THROWS_WITH(parse_core("(if a b)"),
                    Catch::Matchers::ContainsSubstring("if"));
  CHECK_THROWS_WITH(parse_core("(lambda x x)"),
                    Catch::Matchers::ContainsSubstring("lambda"));
}

TEST_CASE("to_anf: operator is sequenced before operand") {
  Expr e = parse_anf("(lambda (x) (f (g x)))");
  const AnfBody& b = *e->lam().anf;
  REQUIRE(b.bindings.size() == 2);
  CHECK(b.bindings[0].kind == Binding::Kind::Apply);
  CHECK(b.bindings[0].u == named_var("g"));
  CHECK(b.bindings[0].w == named_var("x"));
  CHECK(b.bindings[1].u == named_var("f"));
  CHECK(b.bindings[1].w == b.bindings[0].target);
  CHECK(b.result == b.bindings[1].target);
}

TEST_CASE("to_anf: nested lambda is a single abstraction binding") {
  Expr e = parse_anf("(lambda (x) (lambda (y) (x y)))");
  const AnfBody& b = *e->lam().anf;
  REQUIRE(b.bindings.size() == 1);
  CHECK(b.bindings[0].kind == Binding::Kind::Abs);
  const LamData& inner = b.bindings[0].lam->lam();
  REQUIRE(inner.anf.has_value());
  CHECK(inner.anf->bindings.size() == 1);
  CHECK(inner.anf->bindings[0].kind == Binding::Kind::Apply);
}

TEST_CASE("to_anf: let chains flatten to binding sequences") {
  Expr e = parse_anf("(lambda (x) (let ((y (sqrt x))) y))");
  const AnfBody& b = *e->lam().anf;
  REQUIRE(b.bindings.size() >= 1);
  CHECK(b.bindings[0].target == named_var("y"));
  CHECK(b.bindings[0].kind == Binding::Kind::Apply);
  CHECK(b.bindings[0].u == named_var("sqrt"));
}

TEST_CASE("to_anf: shadowed let targets are renamed apart") {
  test::Session s;
  CHECK(s.run_real("(let ((x 1)) (let ((x (* x 2))) x))") == 2.0);
  CHECK(s.run_real("(let ((x 1)) (+ (let ((x 5)) x) x))") == 6.0);
}

TEST_CASE("to_anf is idempotent") {
  const char* sources[] = {
      "(lambda (x) x)",
      "(lambda (x) (f (g x)))",
      "(lambda (x) (let ((y (* x x))) (+ y (let ((z y)) z))))",
      "(lambda (f) (lambda (x) (f (f x))))",
      "(lambda (x) (if (< x 0) (neg x) x))",
  };
  for (const char* src : sources) {
    Expr once = to_anf(desugar(parse_one(src)));
    Expr twice = to_anf(once);
    CHECK(expr_equal(once, twice));
  }
}

TEST_CASE("desugar then to_anf never produces internal tags") {
  const char* sources[] = {
      "(lambda (x) (* x x))",
      "(letrec ((f (lambda (n) (if (zero? n) 1 (* n (f (- n 1))))))) (f 5))",
      "(let ((a 1)) (if (< a 2) (+ a 1) a))",
  };
  for (const char* src : sources) CHECK(no_internal_tags(parse_anf(src)));
}

TEST_CASE("free_vars follows the defining equations") {
  CHECK(free_vars(parse_anf("(lambda (x) x)")).empty());
  // (x y): union of both sides
  Expr app = make_app(make_var(named_var("x")), make_var(named_var("y")));
  auto fv = free_vars(app);
  REQUIRE(fv.size() == 2);
  CHECK(fv[0] == named_var("x"));
  CHECK(fv[1] == named_var("y"));
  // primitive names resolved from the top level count as free variables
  auto fv2 = free_vars(parse_anf("(lambda (x) (+ x a))"));
  REQUIRE(fv2.size() == 3);
  CHECK(fv2[0] == named_var("+"));
  CHECK(fv2[1] == named_var("a"));
  CHECK(fv2[2] == named_var("cons"));
}

TEST_CASE("bree equals free_vars for an untagged parameter") {
  Expr lam = parse_anf("(lambda (x) (+ x a))");
  CHECK(bree(lam) == lam->lam().fv);
  CHECK(bree(lam) == free_vars(lam));
}

TEST_CASE("bree of a transformed lambda reverse-tags the origin's list") {
  test::Session s;
  s.run("(define a 2)");
  Value f = s.fn("(lambda (x) (+ x a))");
  Value tf = s.in.j(f);
  auto b = bree(tf->closure().lam);
  auto orig = bree(f->closure().lam);
  REQUIRE(b.size() == orig.size());
  for (size_t i = 0; i < b.size(); ++i) CHECK(b[i] == rtag(orig[i]));
}

TEST_CASE("bree of a transformed primitive body is empty") {
  test::Session s;
  Value texp = s.in.prim_transform(PrimOp::Exp);
  CHECK(bree(texp->closure().lam).empty());
}

TEST_CASE("compare_vars: examples") {
  CHECK(compare_vars(named_var("f"), named_var("p")) < 0);
  Variable x = named_var("x");
  CHECK(compare_vars(x, rtag(x)) < 0);  // shorter stack first on prefix ties
  std::vector<Variable> vs{named_var("p"), named_var("f")};
  std::sort(vs.begin(), vs.end(), VarLess{});
  CHECK(vs[0] == named_var("f"));
  CHECK(vs[1] == named_var("p"));
}

TEST_CASE("compare_vars is a strict total order") {
  std::mt19937 rng(7);
  auto gen = [&]() {
    Variable v;
    if (rng() % 4 == 0) {
      v = rng() % 5 == 0 ? empty_lit_var()
                         : real_lit_var(static_cast<double>(rng() % 7) - 3);
    } else {
      const char* bases[] = {"a", "b", "f", "p", "x", "y"};
      v = named_var(bases[rng() % 6]);
    }
    int n = static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i)
      v.tags.push_back(static_cast<Tag>(rng() % 3));
    return v;
  };
  for (int i = 0; i < 1000; ++i) {
    Variable a = gen(), b = gen(), c = gen();
    int ab = compare_vars(a, b), ba = compare_vars(b, a);
    CHECK(compare_vars(a, a) == 0);
    CHECK(ab == -ba);
    if (ab < 0 && compare_vars(b, c) < 0) CHECK(compare_vars(a, c) < 0);
    if (ab == 0) CHECK(a == b);
  }
}

TEST_CASE("define folds to chained lets over the rest of the file") {
  test::Session s(false);
  auto forms = parse("(define two 2) (define sq (lambda (x) (* x x))) (sq two)");
  Expr folded = to_anf(desugar_program(forms));
  Value v1 = s.in.evaluate(s.in.sigma0(), folded);
  auto [v2, env] = s.in.eval_program(s.in.sigma0(), forms);
  CHECK(v1->real() == 4.0);
  CHECK(v2->real() == 4.0);
}
