#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "hmlab/expr.hpp"

using namespace hmlab;

static const std::vector<std::string> kXY = {"x", "y"};

TEST_CASE("parser handles arithmetic, precedence, and functions") {
  Expr e = parse_expr("1 + 2*x - y/4 + pow(x, 2) + exp(0) * sin(0)", kXY);
  CHECK(e.eval({2.0, 8.0}) == doctest::Approx(1 + 4 - 2 + 4 + 0).epsilon(1e-15));

  Expr f = parse_expr("x^2*y + cos(x*y)", kXY);
  double x = 0.7, y = -1.3;
  CHECK(f.eval({x, y}) == doctest::Approx(x * x * y + std::cos(x * y)).epsilon(1e-15));

  Expr g = parse_expr("-x^2", kXY);  // unary minus binds looser than the power
  CHECK(g.eval({3.0, 0.0}) == doctest::Approx(-9.0));
}

TEST_CASE("syntax errors carry the offending position") {
  auto expect_error_at = [](const std::string& src, std::size_t pos) {
    try {
      parse_expr(src, kXY);
      FAIL_CHECK("expected ExprError for: " << src);
    } catch (const ExprError& err) {
      CHECK(err.pos == pos);
    }
  };
  expect_error_at("x + ", 4);        // dangling operator
  expect_error_at("x + z", 4);       // unknown identifier
  expect_error_at("x + (y", 6);      // unbalanced parenthesis
  expect_error_at("x ^ y", 4);       // non-constant exponent
  expect_error_at("foo(x)", 0);      // unknown function
}

TEST_CASE("unknown identifier mentions the name") {
  try {
    parse_expr("2*alpha", kXY);
    FAIL_CHECK("expected ExprError");
  } catch (const ExprError& err) {
    CHECK(std::string(err.what()).find("alpha") != std::string::npos);
  }
}

TEST_CASE("symbolic derivatives match finite differences") {
  Expr f = parse_expr("exp(2*x) * sin(y) + x^3 * y - cos(x)/(1 + y^2)", kXY);
  Expr fx = f.derivative(0);
  Expr fy = f.derivative(1);
  double x = 0.4, y = -0.6, h = 1e-6;
  double fdx = (f.eval({x + h, y}) - f.eval({x - h, y})) / (2 * h);
  double fdy = (f.eval({x, y + h}) - f.eval({x, y - h})) / (2 * h);
  CHECK(fx.eval({x, y}) == doctest::Approx(fdx).epsilon(1e-8));
  CHECK(fy.eval({x, y}) == doctest::Approx(fdy).epsilon(1e-8));
}

TEST_CASE("derivative of a constant-folded expression is zero") {
  Expr f = parse_expr("3*4 + exp(1)", kXY);
  CHECK(f.is_constant());
  CHECK(f.derivative(0).is_constant());
  CHECK(f.derivative(0).constant_value() == 0.0);
}

TEST_CASE("compiled tape agrees with tree evaluation bitwise") {
  Expr f = parse_expr("exp(x*y) + pow(x, 3) - sin(y)*cos(x) + y/(x + 2)", kXY);
  ExprProgram prog(f);
  for (double x : {0.0, 0.3, -1.7, 2.5})
    for (double y : {0.1, -0.9, 4.0}) {
      double a = f.eval({x, y});
      double b = prog.eval({x, y});
      CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
}

TEST_CASE("evaluation is pure: repeated runs are bitwise identical") {
  Expr f = parse_expr("exp(2*x) - y*sin(x + y^3)", kXY);
  ExprProgram prog(f);
  double first = prog.eval({0.123456, -0.654321});
  for (int k = 0; k < 10; ++k) {
    double again = prog.eval({0.123456, -0.654321});
    CHECK(std::memcmp(&first, &again, sizeof(double)) == 0);
  }
}

TEST_CASE("expression algebra builds simplified trees") {
  Expr x = Expr::variable(0);
  Expr zero = Expr::constant(0.0);
  Expr one = Expr::constant(1.0);
  CHECK((x + zero).eval({5.0}) == 5.0);
  CHECK((x * one).eval({5.0}) == 5.0);
  CHECK((x * zero).is_constant());
  CHECK(expr_pow(x, 0.0).is_constant());
  CHECK(expr_pow(x, 1.0).eval({4.0}) == 4.0);
}
