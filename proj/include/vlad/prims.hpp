#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace vlad {

// Host primitives of the language. Boolean primitives return the Church
// selector closures bound to true/false in the top-level environment.
enum class PrimOp {
  // unary real
  Sqrt,
  Exp,
  Log,
  Sin,
  Cos,
  Neg,
  Abs,
  // binary real (argument is an encoded pair)
  Add,
  Sub,
  Mul,
  Div,
  Atan2,
  // unary boolean
  IsZero,
  IsPositive,
  IsNegative,
  IsNull,
  IsReal,
  IsPair,
  // binary boolean (argument is an encoded pair)
  Lt,
  Le,
  EqNum,
  Gt,
  Ge,
  // AD primitives
  Zero,
  Plus,
  Rad,
  RadInverse,
  Attach,
};

inline constexpr std::array<std::pair<PrimOp, std::string_view>, 28> kPrimNames{{
    {PrimOp::Sqrt, "sqrt"},
    {PrimOp::Exp, "exp"},
    {PrimOp::Log, "log"},
    {PrimOp::Sin, "sin"},
    {PrimOp::Cos, "cos"},
    {PrimOp::Neg, "neg"},
    {PrimOp::Abs, "abs"},
    {PrimOp::Add, "+"},
    {PrimOp::Sub, "-"},
    {PrimOp::Mul, "*"},
    {PrimOp::Div, "/"},
    {PrimOp::Atan2, "atan2"},
    {PrimOp::IsZero, "zero?"},
    {PrimOp::IsPositive, "positive?"},
    {PrimOp::IsNegative, "negative?"},
    {PrimOp::IsNull, "null?"},
    {PrimOp::IsReal, "real?"},
    {PrimOp::IsPair, "pair?"},
    {PrimOp::Lt, "<"},
    {PrimOp::Le, "<="},
    {PrimOp::EqNum, "="},
    {PrimOp::Gt, ">"},
    {PrimOp::Ge, ">="},
    {PrimOp::Zero, "zero"},
    {PrimOp::Plus, "plus"},
    {PrimOp::Rad, "rad"},
    {PrimOp::RadInverse, "rad-inverse"},
    {PrimOp::Attach, "attach-derivative"},
}};

inline std::string_view prim_name(PrimOp op) {
  for (auto& [p, n] : kPrimNames)
    if (p == op) return n;
  return "?";
}

inline std::optional<PrimOp> prim_by_name(std::string_view name) {
  for (auto& [p, n] : kPrimNames)
    if (n == name) return p;
  return std::nullopt;
}

inline bool is_unary_real(PrimOp op) {
  return op >= PrimOp::Sqrt && op <= PrimOp::Abs;
}
inline bool is_binary_real(PrimOp op) {
  return op >= PrimOp::Add && op <= PrimOp::Atan2;
}
inline bool is_unary_bool(PrimOp op) {
  return op >= PrimOp::IsZero && op <= PrimOp::IsPair;
}
inline bool is_binary_bool(PrimOp op) {
  return op >= PrimOp::Lt && op <= PrimOp::Ge;
}

// Primitives whose A-rule destructures an encoded pair argument.
inline bool prim_takes_pair(PrimOp op) {
  return is_binary_real(op) || is_binary_bool(op) || op == PrimOp::Plus ||
         op == PrimOp::Attach;
}

}  // namespace vlad
