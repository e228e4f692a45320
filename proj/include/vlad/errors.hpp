#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vlad {

// A language-level failure: unbound variables, applying a non-function,
// conformance mismatches, malformed special forms, and so on. These map to
// exit code 1 in the CLI.
struct LangError : std::runtime_error {
  explicit LangError(std::string msg) : std::runtime_error(std::move(msg)) {}
};

struct ParseError : LangError {
  int line;
  int column;
  ParseError(std::string msg, int line_, int col_)
      : LangError("parse error at " + std::to_string(line_) + ":" +
                  std::to_string(col_) + ": " + msg),
        line(line_),
        column(col_) {}
};

// Shape mismatch in the gradient-accumulation operator. Carries the access
// path from the root of the two operands down to the mismatch so failures
// inside generated backpropagators can be located.
struct ConformanceError : LangError {
  std::vector<std::string> path;  // outermost access last, e.g. {"car","cdr"}
  ConformanceError(std::string what, std::vector<std::string> path_)
      : LangError(render(what, path_)), path(std::move(path_)) {}

  static std::string render(const std::string& what,
                            const std::vector<std::string>& p) {
    std::string msg = "conformance error";
    if (!p.empty()) {
      msg += " at ";
      for (size_t i = p.size(); i-- > 0;) {
        msg += p[i];
        if (i != 0) msg += " of ";
      }
    }
    msg += ": " + what;
    return msg;
  }
};

// Step budget exhausted; exit code 2 in the CLI.
struct ResourceError : std::runtime_error {
  explicit ResourceError(std::string msg)
      : std::runtime_error(std::move(msg)) {}
};

// Violated internal invariant (never user-triggerable).
struct InternalError : std::logic_error {
  explicit InternalError(std::string msg) : std::logic_error(std::move(msg)) {}
};

}  // namespace vlad
