#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlad/runtime.hpp"
#include "vlad/stdlib_source.hpp"

namespace {

struct Session {
  vlad::Interp interp;
  vlad::Env env;

  Session(bool with_stdlib, long steps, bool trace) {
    interp.step_budget = steps;
    interp.trace = trace;
    env = interp.sigma0();
    if (with_stdlib) {
      auto forms = vlad::parse(vlad::kStdlibSource);
      env = interp.eval_program(env, forms).second;
    }
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vlad::LangError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_file(const std::string& path, Session& s, bool emit_transformed) {
  auto forms = vlad::parse(slurp(path));
  auto [last, env] = s.interp.eval_program(s.env, forms);
  s.env = env;
  if (emit_transformed) {
    vlad::Value f = last;
    if (f->is_prim()) f = s.interp.prim_transform(f->prim());
    if (f->is_custom()) f = s.interp.j(f);
    if (!f->is_closure())
      throw vlad::LangError(
          "--emit-transformed expects the program to yield a function");
    vlad::Expr lam = f->closure().lam;
    if (!lam->lam().param.has_top(vlad::Tag::Reverse))
      lam = s.interp.j(f)->closure().lam;
    std::cout << vlad::print_expr(lam) << "\n";
  } else {
    std::cout << vlad::print_value(last) << "\n";
  }
  return 0;
}

bool balanced(const std::string& text) {
  int depth = 0;
  bool comment = false;
  for (char c : text) {
    if (comment) {
      if (c == '\n') comment = false;
      continue;
    }
    if (c == ';') comment = true;
    if (c == '(') ++depth;
    if (c == ')') --depth;
  }
  return depth <= 0;
}

int repl(Session& s) {
  std::cout << "vlad repl; :quit exits, :transform <expr> shows reverse code\n";
  std::string line, pending;
  while (true) {
    std::cout << (pending.empty() ? "> " : "  ") << std::flush;
    if (!std::getline(std::cin, line)) break;
    pending += line + "\n";
    if (!balanced(pending)) continue;
    std::string input = pending;
    pending.clear();
    if (input.find_first_not_of(" \t\n") == std::string::npos) continue;
    try {
      size_t start = input.find_first_not_of(" \t\n");
      if (input.compare(start, 5, ":quit") == 0) return 0;
      if (input.compare(start, 10, ":transform") == 0) {
        auto form = vlad::parse_one(input.substr(start + 10));
        s.interp.reset_steps();
        vlad::Value v = s.interp.eval_form(s.env, form);
        if (v->is_prim()) v = s.interp.prim_transform(v->prim());
        if (v->is_custom()) v = s.interp.j(v);
        if (!v->is_closure()) {
          std::cout << "error: :transform expects a function\n";
          continue;
        }
        vlad::Expr lam = v->closure().lam;
        if (!lam->lam().param.has_top(vlad::Tag::Reverse))
          lam = s.interp.j(v)->closure().lam;
        std::cout << vlad::print_expr(lam) << "\n";
        continue;
      }
      auto forms = vlad::parse(input);
      auto [last, env] = s.interp.eval_program(s.env, forms);
      s.env = env;
      std::cout << vlad::print_value(last) << "\n";
    } catch (const vlad::ResourceError& e) {
      std::cout << "resource error: " << e.what() << "\n";
    } catch (const vlad::LangError& e) {
      std::cout << "error: " << e.what() << "\n";
    }
  }
  return 0;
}

struct CheckRow {
  double point, value, grad, fd, abs_err, rel_err;
  std::string status;
  bool pass;
};

int gradcheck(const std::string& path, Session& s, const std::string& fn,
              const std::vector<double>& points, double h_opt, double tol) {
  auto forms = vlad::parse(slurp(path));
  s.env = s.interp.eval_program(s.env, forms).second;

  const vlad::Value* fp = s.env.find(vlad::named_var(fn));
  if (!fp) throw vlad::LangError("unknown function: " + fn);
  vlad::Value f = *fp;
  if (!(f->is_closure() || f->is_prim() || f->is_custom()))
    throw vlad::LangError(fn + " is not a function");
  const vlad::Value* gradv = s.env.find(vlad::named_var("gradient"));
  if (!gradv)
    throw vlad::LangError("gradcheck needs the stdlib gradient operator");

  auto eval_f = [&](double x) -> double {
    s.interp.reset_steps();
    vlad::Value r = s.interp.apply(f, vlad::make_real(x));
    if (!r->is_real()) throw vlad::LangError(fn + " did not return a real");
    return r->real();
  };

  bool all_pass = true;
  std::printf("point value grad fd abs_err rel_err status\n");
  for (double x : points) {
    CheckRow row{};
    row.point = x;
    try {
      row.value = eval_f(x);
      s.interp.reset_steps();
      vlad::Value g = s.interp.apply(
          s.interp.apply(*gradv, f), vlad::make_real(x));
      if (!g->is_real()) throw vlad::LangError("gradient is not a real");
      row.grad = g->real();

      double h = h_opt > 0 ? h_opt : 1e-6 * std::max(1.0, std::fabs(x));
      bool one_sided = false;
      double fplus = eval_f(x + h);
      double fminus;
      try {
        fminus = eval_f(x - h);
      } catch (const vlad::LangError&) {
        fminus = std::nan("");
      }
      if (std::isnan(fminus)) {
        // Domain boundary: forward difference with a much smaller step, since
        // curvature may blow up toward the boundary.
        one_sided = true;
        double h1 = std::max(h * 1e-4, 1e-12);
        row.fd = (eval_f(x + h1) - row.value) / h1;
      } else {
        row.fd = (fplus - fminus) / (2 * h);
      }

      bool gn = std::isnan(row.grad), fn_ = std::isnan(row.fd);
      if (gn && fn_) {
        row.status = "agree-NaN";
        row.pass = true;
      } else if (gn != fn_) {
        row.status = "NaN-mismatch";
        row.pass = false;
      } else {
        row.abs_err = std::fabs(row.grad - row.fd);
        double denom = std::max(std::fabs(row.grad), std::fabs(row.fd));
        row.rel_err = denom < 1e-12 ? row.abs_err : row.abs_err / denom;
        row.pass = row.rel_err <= tol;
        row.status = row.pass ? (one_sided ? "pass-one-sided" : "pass")
                              : "fail";
      }
    } catch (const vlad::LangError& e) {
      row.status = std::string("error: ") + e.what();
      row.pass = false;
    }
    all_pass = all_pass && row.pass;
    std::printf("%g %g %g %g %g %g %s\n", row.point, row.value, row.grad,
                row.fd, row.abs_err, row.rel_err, row.status.c_str());
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlad: lambda calculus with built-in reverse-mode AD and "
               "attachable custom derivatives"};
  app.require_subcommand(1);

  bool no_stdlib = false;
  long steps = 1000000;
  bool trace = false;
  app.add_flag("--no-stdlib", no_stdlib, "do not preload the standard library");
  app.add_option("--steps", steps, "apply-step budget per top-level form");
  app.add_flag("--trace", trace, "log application dispatch to stderr");

  std::string run_path;
  bool emit_transformed = false;
  auto* run_cmd = app.add_subcommand("run", "evaluate a .vl program file");
  run_cmd->add_option("file", run_path, "program file")->required();
  run_cmd->add_flag("--emit-transformed", emit_transformed,
                    "print the reverse transform of the resulting function");

  auto* repl_cmd = app.add_subcommand("repl", "interactive session");

  std::string gc_path, gc_fn;
  std::vector<double> gc_points;
  double gc_h = 0, gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "compare gradients against central differences");
  gc_cmd->set_help_flag("--help", "print help");  // frees --h for the step size
  gc_cmd->add_option("file", gc_path, "program file")->required();
  gc_cmd->add_option("--fn", gc_fn, "function name")->required();
  gc_cmd->add_option("--at", gc_points, "evaluation points")->required();
  gc_cmd->add_option("--h", gc_h, "finite-difference step (default scaled 1e-6)");
  gc_cmd->add_option("--tol", gc_tol, "relative tolerance (default 1e-4)");

  CLI11_PARSE(app, argc, argv);
  if (steps <= 0) {
    std::cerr << "error: --steps must be positive\n";
    return 1;
  }

  try {
    Session s(!no_stdlib, steps, trace);
    if (run_cmd->parsed()) return run_file(run_path, s, emit_transformed);
    if (repl_cmd->parsed()) return repl(s);
    if (gc_cmd->parsed())
      return gradcheck(gc_path, s, gc_fn, gc_points, gc_h, gc_tol);
  } catch (const vlad::ResourceError& e) {
    std::cerr << "resource error: " << e.what() << "\n";
    return 2;
  } catch (const vlad::LangError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
