#include "hmlab/expr.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

namespace hmlab {

namespace {

ExprPtr make_node(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

ExprPtr make_const(double c) {
  ExprNode n;
  n.op = ExprOp::Const;
  n.value = c;
  return make_node(std::move(n));
}

ExprPtr make_unary(ExprOp op, ExprPtr a) {
  ExprNode n;
  n.op = op;
  n.a = std::move(a);
  return make_node(std::move(n));
}

ExprPtr make_binary(ExprOp op, ExprPtr a, ExprPtr b) {
  ExprNode n;
  n.op = op;
  n.a = std::move(a);
  n.b = std::move(b);
  return make_node(std::move(n));
}

bool is_const(const ExprPtr& e, double v) {
  return e->op == ExprOp::Const && e->value == v;
}

// Builds nodes with local algebraic simplification: constant folding and the
// usual identities (x+0, x*1, x*0, ...).  Keeps derivative trees small.
ExprPtr simp_add(ExprPtr a, ExprPtr b);
ExprPtr simp_sub(ExprPtr a, ExprPtr b);
ExprPtr simp_mul(ExprPtr a, ExprPtr b);
ExprPtr simp_div(ExprPtr a, ExprPtr b);
ExprPtr simp_neg(ExprPtr a);
ExprPtr simp_pow(ExprPtr a, double k);

ExprPtr simp_add(ExprPtr a, ExprPtr b) {
  if (a->op == ExprOp::Const && b->op == ExprOp::Const) return make_const(a->value + b->value);
  if (is_const(a, 0.0)) return b;
  if (is_const(b, 0.0)) return a;
  return make_binary(ExprOp::Add, std::move(a), std::move(b));
}

ExprPtr simp_sub(ExprPtr a, ExprPtr b) {
  if (a->op == ExprOp::Const && b->op == ExprOp::Const) return make_const(a->value - b->value);
  if (is_const(b, 0.0)) return a;
  if (is_const(a, 0.0)) return simp_neg(std::move(b));
  return make_binary(ExprOp::Sub, std::move(a), std::move(b));
}

ExprPtr simp_mul(ExprPtr a, ExprPtr b) {
  if (a->op == ExprOp::Const && b->op == ExprOp::Const) return make_const(a->value * b->value);
  if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return simp_neg(std::move(b));
  if (is_const(b, -1.0)) return simp_neg(std::move(a));
  return make_binary(ExprOp::Mul, std::move(a), std::move(b));
}

ExprPtr simp_div(ExprPtr a, ExprPtr b) {
  if (a->op == ExprOp::Const && b->op == ExprOp::Const && b->value != 0.0)
    return make_const(a->value / b->value);
  if (is_const(a, 0.0)) return make_const(0.0);
  if (is_const(b, 1.0)) return a;
  return make_binary(ExprOp::Div, std::move(a), std::move(b));
}

ExprPtr simp_neg(ExprPtr a) {
  if (a->op == ExprOp::Const) return make_const(-a->value);
  if (a->op == ExprOp::Neg) return a->a;
  return make_unary(ExprOp::Neg, std::move(a));
}

ExprPtr simp_pow(ExprPtr a, double k) {
  if (k == 0.0) return make_const(1.0);
  if (k == 1.0) return a;
  if (a->op == ExprOp::Const) return make_const(std::pow(a->value, k));
  ExprNode n;
  n.op = ExprOp::Pow;
  n.value = k;
  n.a = std::move(a);
  return make_node(std::move(n));
}

ExprPtr simp_unary(ExprOp op, ExprPtr a) {
  if (a->op == ExprOp::Const) {
    switch (op) {
      case ExprOp::Exp: return make_const(std::exp(a->value));
      case ExprOp::Sin: return make_const(std::sin(a->value));
      case ExprOp::Cos: return make_const(std::cos(a->value));
      default: break;
    }
  }
  return make_unary(op, std::move(a));
}

ExprPtr diff(const ExprPtr& e, int slot) {
  switch (e->op) {
    case ExprOp::Const:
      return make_const(0.0);
    case ExprOp::Var:
      return make_const(e->var == slot ? 1.0 : 0.0);
    case ExprOp::Add:
      return simp_add(diff(e->a, slot), diff(e->b, slot));
    case ExprOp::Sub:
      return simp_sub(diff(e->a, slot), diff(e->b, slot));
    case ExprOp::Mul:
      return simp_add(simp_mul(diff(e->a, slot), e->b), simp_mul(e->a, diff(e->b, slot)));
    case ExprOp::Div:
      // (a/b)' = a'/b - a b'/b^2
      return simp_sub(simp_div(diff(e->a, slot), e->b),
                      simp_div(simp_mul(e->a, diff(e->b, slot)), simp_pow(e->b, 2.0)));
    case ExprOp::Neg:
      return simp_neg(diff(e->a, slot));
    case ExprOp::Pow:
      // constant exponent k: (a^k)' = k a^(k-1) a'
      return simp_mul(make_const(e->value),
                      simp_mul(simp_pow(e->a, e->value - 1.0), diff(e->a, slot)));
    case ExprOp::Exp:
      return simp_mul(simp_unary(ExprOp::Exp, e->a), diff(e->a, slot));
    case ExprOp::Sin:
      return simp_mul(simp_unary(ExprOp::Cos, e->a), diff(e->a, slot));
    case ExprOp::Cos:
      return simp_neg(simp_mul(simp_unary(ExprOp::Sin, e->a), diff(e->a, slot)));
  }
  return make_const(0.0);
}

double eval_node(const ExprNode& n, const double* vars) {
  switch (n.op) {
    case ExprOp::Const: return n.value;
    case ExprOp::Var:   return vars[n.var];
    case ExprOp::Add:   return eval_node(*n.a, vars) + eval_node(*n.b, vars);
    case ExprOp::Sub:   return eval_node(*n.a, vars) - eval_node(*n.b, vars);
    case ExprOp::Mul:   return eval_node(*n.a, vars) * eval_node(*n.b, vars);
    case ExprOp::Div:   return eval_node(*n.a, vars) / eval_node(*n.b, vars);
    case ExprOp::Neg:   return -eval_node(*n.a, vars);
    case ExprOp::Pow:   return std::pow(eval_node(*n.a, vars), n.value);
    case ExprOp::Exp:   return std::exp(eval_node(*n.a, vars));
    case ExprOp::Sin:   return std::sin(eval_node(*n.a, vars));
    case ExprOp::Cos:   return std::cos(eval_node(*n.a, vars));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Recursive-descent parser
// ---------------------------------------------------------------------------

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& names)
      : src_(src), names_(names) {}

  ExprPtr run() {
    ExprPtr e = expression();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ExprError(msg, pos_); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  ExprPtr expression() {
    ExprPtr e = term();
    for (;;) {
      if (accept('+')) e = simp_add(e, term());
      else if (accept('-')) e = simp_sub(e, term());
      else return e;
    }
  }

  ExprPtr term() {
    ExprPtr e = unary();
    for (;;) {
      if (accept('*')) e = simp_mul(e, unary());
      else if (accept('/')) e = simp_div(e, unary());
      else return e;
    }
  }

  ExprPtr unary() {
    if (accept('-')) return simp_neg(unary());
    if (accept('+')) return unary();
    return power();
  }

  ExprPtr power() {
    ExprPtr base = atom();
    if (accept('^')) {
      skip_ws();
      std::size_t at = pos_;
      ExprPtr e = unary();  // right-associative
      if (e->op != ExprOp::Const) {
        pos_ = at;
        fail("exponent must be a constant");
      }
      return simp_pow(base, e->value);
    }
    return base;
  }

  ExprPtr atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      ExprPtr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character");
  }

  ExprPtr number() {
    std::size_t start = pos_;
    std::size_t consumed = 0;
    double v = 0.0;
    try {
      v = std::stod(src_.substr(start), &consumed);
    } catch (const std::exception&) {
      fail("malformed number");
    }
    pos_ = start + consumed;
    return make_const(v);
  }

  ExprPtr identifier() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string name = src_.substr(start, pos_ - start);

    if (peek() == '(') {
      // function call
      expect('(');
      if (name == "pow") {
        ExprPtr base = expression();
        expect(',');
        skip_ws();
        std::size_t at = pos_;
        ExprPtr e = expression();
        if (e->op != ExprOp::Const) {
          pos_ = at;
          fail("pow exponent must be a constant");
        }
        expect(')');
        return simp_pow(base, e->value);
      }
      ExprPtr arg = expression();
      expect(')');
      if (name == "exp") return simp_unary(ExprOp::Exp, arg);
      if (name == "sin") return simp_unary(ExprOp::Sin, arg);
      if (name == "cos") return simp_unary(ExprOp::Cos, arg);
      pos_ = start;
      fail("unknown function '" + name + "'");
    }

    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) {
        ExprNode n;
        n.op = ExprOp::Var;
        n.var = static_cast<int>(i);
        return make_node(std::move(n));
      }
    }
    pos_ = start;
    fail("unknown identifier '" + name + "'");
  }

  const std::string& src_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

void print_node(const ExprNode& n, const std::vector<std::string>& names, std::ostringstream& out) {
  auto paren = [&](const ExprPtr& e) {
    out << '(';
    print_node(*e, names, out);
    out << ')';
  };
  switch (n.op) {
    case ExprOp::Const: out << n.value; break;
    case ExprOp::Var:
      if (n.var >= 0 && n.var < static_cast<int>(names.size())) out << names[n.var];
      else out << "v" << n.var;
      break;
    case ExprOp::Add: paren(n.a); out << " + "; paren(n.b); break;
    case ExprOp::Sub: paren(n.a); out << " - "; paren(n.b); break;
    case ExprOp::Mul: paren(n.a); out << " * "; paren(n.b); break;
    case ExprOp::Div: paren(n.a); out << " / "; paren(n.b); break;
    case ExprOp::Neg: out << "-"; paren(n.a); break;
    case ExprOp::Pow: out << "pow("; print_node(*n.a, names, out); out << ", " << n.value << ')'; break;
    case ExprOp::Exp: out << "exp("; print_node(*n.a, names, out); out << ')'; break;
    case ExprOp::Sin: out << "sin("; print_node(*n.a, names, out); out << ')'; break;
    case ExprOp::Cos: out << "cos("; print_node(*n.a, names, out); out << ')'; break;
  }
}

}  // namespace

ExprPtr Expr::constant_node(double c) { return make_const(c); }

Expr Expr::constant(double c) { return Expr(make_const(c)); }

Expr Expr::variable(int slot) {
  ExprNode n;
  n.op = ExprOp::Var;
  n.var = slot;
  return Expr(make_node(std::move(n)));
}

double Expr::eval(const double* vars) const { return eval_node(*node_, vars); }

Expr Expr::derivative(int slot) const { return Expr(diff(node_, slot)); }

std::string Expr::to_string(const std::vector<std::string>& names) const {
  std::ostringstream out;
  print_node(*node_, names, out);
  return out.str();
}

Expr operator+(const Expr& x, const Expr& y) { return Expr(simp_add(x.node_, y.node_)); }
Expr operator-(const Expr& x, const Expr& y) { return Expr(simp_sub(x.node_, y.node_)); }
Expr operator*(const Expr& x, const Expr& y) { return Expr(simp_mul(x.node_, y.node_)); }
Expr operator/(const Expr& x, const Expr& y) { return Expr(simp_div(x.node_, y.node_)); }
Expr operator-(const Expr& x) { return Expr(simp_neg(x.ptr())); }

Expr expr_pow(const Expr& base, double exponent) { return Expr(simp_pow(base.ptr(), exponent)); }
Expr expr_exp(const Expr& x) { return Expr(simp_unary(ExprOp::Exp, x.ptr())); }
Expr expr_sin(const Expr& x) { return Expr(simp_unary(ExprOp::Sin, x.ptr())); }
Expr expr_cos(const Expr& x) { return Expr(simp_unary(ExprOp::Cos, x.ptr())); }

Expr parse_expr(const std::string& src, const std::vector<std::string>& var_names) {
  Parser p(src, var_names);
  return Expr(p.run());
}

// ---------------------------------------------------------------------------
// Tape compilation
// ---------------------------------------------------------------------------

ExprProgram::ExprProgram(const Expr& e) {
  // Post-order emission; common subtrees (shared nodes) are emitted once.
  std::map<const ExprNode*, int> seen;
  auto emit = [&](auto&& self, const ExprNode& n) -> int {
    auto it = seen.find(&n);
    if (it != seen.end()) return it->second;
    Instr ins;
    ins.op = n.op;
    switch (n.op) {
      case ExprOp::Const: ins.imm = n.value; break;
      case ExprOp::Var:   ins.var = n.var; break;
      case ExprOp::Neg:
      case ExprOp::Exp:
      case ExprOp::Sin:
      case ExprOp::Cos:
        ins.a = self(self, *n.a);
        break;
      case ExprOp::Pow:
        ins.a = self(self, *n.a);
        ins.imm = n.value;
        break;
      default:
        ins.a = self(self, *n.a);
        ins.b = self(self, *n.b);
        break;
    }
    int reg = static_cast<int>(code_.size());
    code_.push_back(ins);
    seen.emplace(&n, reg);
    return reg;
  };
  emit(emit, e.node());
  nregs_ = static_cast<int>(code_.size());
}

double ExprProgram::eval(const double* vars) const {
  double small[64];
  std::vector<double> big;
  double* r = small;
  if (nregs_ > 64) {
    big.resize(nregs_);
    r = big.data();
  }
  for (int i = 0; i < nregs_; ++i) {
    const Instr& ins = code_[i];
    switch (ins.op) {
      case ExprOp::Const: r[i] = ins.imm; break;
      case ExprOp::Var:   r[i] = vars[ins.var]; break;
      case ExprOp::Add:   r[i] = r[ins.a] + r[ins.b]; break;
      case ExprOp::Sub:   r[i] = r[ins.a] - r[ins.b]; break;
      case ExprOp::Mul:   r[i] = r[ins.a] * r[ins.b]; break;
      case ExprOp::Div:   r[i] = r[ins.a] / r[ins.b]; break;
      case ExprOp::Neg:   r[i] = -r[ins.a]; break;
      case ExprOp::Pow:   r[i] = std::pow(r[ins.a], ins.imm); break;
      case ExprOp::Exp:   r[i] = std::exp(r[ins.a]); break;
      case ExprOp::Sin:   r[i] = std::sin(r[ins.a]); break;
      case ExprOp::Cos:   r[i] = std::cos(r[ins.a]); break;
    }
  }
  return nregs_ > 0 ? r[nregs_ - 1] : 0.0;
}

}  // namespace hmlab
