#pragma once

// Small arithmetic expression language used to define metric entries and
// boundary data.  Supports variables, numeric constants, + - * /, pow with a
// constant exponent, exp, sin, cos.  Expressions are immutable trees that can
// be differentiated symbolically and compiled to a flat instruction tape for
// fast repeated evaluation.

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmlab {

struct ExprError : std::runtime_error {
  ExprError(const std::string& what, std::size_t position)
      : std::runtime_error(what), pos(position) {}
  std::size_t pos;  // byte offset into the source string
};

enum class ExprOp { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Exp, Sin, Cos };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op = ExprOp::Const;
  double value = 0.0;    // Const: the constant; Pow: the exponent
  int var = -1;          // Var: variable slot
  ExprPtr a, b;          // operands
};

// Value-semantics handle around the shared tree.
class Expr {
 public:
  Expr() : node_(constant_node(0.0)) {}
  explicit Expr(ExprPtr n) : node_(std::move(n)) {}

  static Expr constant(double c);
  static Expr variable(int slot);

  const ExprNode& node() const { return *node_; }
  ExprPtr ptr() const { return node_; }

  bool is_constant() const { return node_->op == ExprOp::Const; }
  double constant_value() const { return node_->value; }

  double eval(const double* vars) const;
  double eval(const std::vector<double>& vars) const { return eval(vars.data()); }

  // d/d(var slot), with algebraic simplification applied.
  Expr derivative(int slot) const;

  std::string to_string(const std::vector<std::string>& names) const;

  friend Expr operator+(const Expr& x, const Expr& y);
  friend Expr operator-(const Expr& x, const Expr& y);
  friend Expr operator*(const Expr& x, const Expr& y);
  friend Expr operator/(const Expr& x, const Expr& y);
  friend Expr operator-(const Expr& x);

 private:
  static ExprPtr constant_node(double c);
  ExprPtr node_;
};

Expr expr_pow(const Expr& base, double exponent);
Expr expr_exp(const Expr& x);
Expr expr_sin(const Expr& x);
Expr expr_cos(const Expr& x);

// Parses `src` over the given variable names.  Throws ExprError with the
// offending position on malformed input or unknown identifiers.
Expr parse_expr(const std::string& src, const std::vector<std::string>& var_names);

// Flat postfix program for fast evaluation.  Compilation is deterministic;
// evaluation is pure (same inputs give bitwise-identical outputs).
class ExprProgram {
 public:
  ExprProgram() = default;
  explicit ExprProgram(const Expr& e);

  double eval(const double* vars) const;
  double eval(const std::vector<double>& vars) const { return eval(vars.data()); }

 private:
  struct Instr {
    ExprOp op;
    int a = -1, b = -1;   // source registers
    double imm = 0.0;     // Const value / Pow exponent
    int var = -1;         // Var slot
  };
  std::vector<Instr> code_;
  int nregs_ = 0;
};

}  // namespace hmlab
