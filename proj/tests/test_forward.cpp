#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "hmlab/forward.hpp"
#include "support.hpp"

using namespace hmlab;

namespace {

BoundaryData trace2(const GridDomain& g, const std::string& e1, const std::string& e2) {
  BoundaryData f(g.num_boundary(), 2);
  f.values.col(0) = boundary_from_expr(g, parse_expr(e1, {"x", "y"}));
  f.values.col(1) = boundary_from_expr(g, parse_expr(e2, {"x", "y"}));
  return f;
}

// Curved target with nonvanishing Christoffel symbols at the base point.
std::shared_ptr<const TargetMetric> curved_target() {
  return std::make_shared<TargetMetric>(
      target_conformal(2, "0.3*y1 - 0.2*y2 + 0.25*(y1^2 + y2^2)", 10.0));
}

ForwardProblem curved_problem(std::shared_ptr<const GridDomain> grid, double amplitude) {
  BoundaryData f = trace2(*grid, "x*(1-x)*y", "0.5*sin(x + y) - 0.3*x");
  f.values *= amplitude;
  return make_problem(std::move(grid), domain_euclidean(), curved_target(),
                      Eigen::Vector2d::Zero(), 2.0, f);
}

}  // namespace

TEST_CASE("flat target: the solve is the componentwise harmonic extension") {
  auto grid = std::make_shared<GridDomain>(20);
  auto h = std::make_shared<TargetMetric>(target_euclidean(2));
  BoundaryData f = trace2(*grid, "0.5*(x^2 - y^2)", "0.4*x*y");
  Eigen::Vector2d q(0.3, -0.2);
  ForwardProblem p = make_problem(grid, domain_euclidean(), h, q, 2.0, f);

  SolveResult res = solve(p);
  CHECK(res.report.converged);
  CHECK(res.report.final_residual <= 1e-10);

  VectorField ext = harmonic_extension(p, f);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd expect = ext.comp[c].array() + q[c];
    CHECK((res.u.comp[c] - expect).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("small-amplitude solves match the linear term to second order") {
  auto grid = std::make_shared<GridDomain>(24);
  ForwardProblem p0 = curved_problem(grid, 1.0);
  VectorField vhat = harmonic_extension(p0, p0.boundary);

  std::vector<double> errs;
  for (double a : {1e-1, 1e-2, 1e-3}) {
    BoundaryData fa = p0.boundary;
    fa.values *= a;
    SolveResult res = solve(with_boundary(p0, fa));
    double e = 0.0;
    for (int c = 0; c < 2; ++c)
      e = std::max(e, (res.u.comp[c] - p0.q[c] * Eigen::VectorXd::Ones(grid->num_nodes()) -
                       a * vhat.comp[c])
                          .lpNorm<Eigen::Infinity>());
    errs.push_back(e);
  }
  double ord1 = std::log10(errs[0] / errs[1]);
  double ord2 = std::log10(errs[1] / errs[2]);
  CHECK(ord1 > 1.7);
  CHECK(ord1 < 2.3);
  CHECK(ord2 > 1.7);
  CHECK(ord2 < 2.3);
}

TEST_CASE("newton iteration has a quadratic tail") {
  auto grid = std::make_shared<GridDomain>(16);
  ForwardProblem p = curved_problem(grid, 0.55);
  SolveControls c;
  c.continuation_steps = 1;  // no ramp: watch the full basin approach
  SolveResult res = solve(p, c);
  CHECK(res.report.converged);

  const auto& hist = res.report.residual_history;
  REQUIRE(hist.size() >= 3);
  bool saw_tail = false;
  for (std::size_t k = 0; k + 1 < hist.size(); ++k) {
    if (hist[k] < 1e-2 && hist[k] > 1e-9) {
      CHECK(hist[k + 1] <= std::max(100.0 * hist[k] * hist[k], 1e-12));
      saw_tail = true;
    }
  }
  CHECK(saw_tail);
}

TEST_CASE("jacobian_apply matches a centered difference of the residual") {
  auto grid = std::make_shared<GridDomain>(16);
  ForwardProblem p = curved_problem(grid, 0.3);
  VectorField u = solve(p).u;

  VectorField w(2, grid->num_nodes());
  for (int id = 0; id < grid->num_nodes(); ++id) {
    double x = grid->x_of(grid->node_i(id)), y = grid->y_of(grid->node_j(id));
    double bump = 16.0 * x * (1 - x) * y * (1 - y);
    w.comp[0][id] = bump * std::sin(3 * x);
    w.comp[1][id] = bump * (x - 0.5 * y * y);
  }

  VectorField jw = jacobian_apply(p, u, w);

  double eps = 1e-5;
  VectorField up = u, um = u;
  for (int c = 0; c < 2; ++c) {
    up.comp[c] += eps * w.comp[c];
    um.comp[c] -= eps * w.comp[c];
  }
  VectorField rp = residual(p, up), rm = residual(p, um);
  double err = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < grid->num_interior(); ++k) {
      int id = grid->interior_node(k);
      double fd = (rp.comp[c][id] - rm.comp[c][id]) / (2 * eps);
      err = std::max(err, std::abs(jw.comp[c][id] - fd));
    }
  CHECK(err < 2e-6);
}

TEST_CASE("dirichlet energy: exact flat value and exact quadratic scaling") {
  auto grid = std::make_shared<GridDomain>(32);
  auto h = std::make_shared<TargetMetric>(target_euclidean(2));
  BoundaryData f = trace2(*grid, "x", "0");
  Eigen::Vector2d q(0.2, -0.1);
  ForwardProblem p = make_problem(grid, domain_euclidean(), h, q, 2.5, f);

  VectorField u = solve(p).u;
  CHECK(dirichlet_energy(p, u) == doctest::Approx(0.5).epsilon(1e-12));

  BoundaryData f2 = f;
  f2.values *= 2.0;
  ForwardProblem p2 = with_boundary(p, f2);
  VectorField u2 = solve(p2).u;
  CHECK(dirichlet_energy(p2, u2) == doctest::Approx(2.0).epsilon(1e-11));
}

TEST_CASE("even target metric gives odd solution map") {
  // h = exp(2 phi) id with phi even about q = 0 makes Gamma odd, so u(-f) = -u(f).
  auto grid = std::make_shared<GridDomain>(16);
  auto h = std::make_shared<TargetMetric>(target_conformal(2, "0.25*(y1^2 + y2^2)", 10.0));
  BoundaryData f = trace2(*grid, "0.4*x*(1-x)", "0.4*sin(2*x)*y");
  ForwardProblem p = make_problem(grid, domain_euclidean(), h, Eigen::Vector2d::Zero(), 1.5, f);

  VectorField up = solve(p).u;
  BoundaryData fneg = f;
  fneg.values *= -1.0;
  VectorField un = solve(with_boundary(p, fneg)).u;
  for (int c = 0; c < 2; ++c)
    CHECK((up.comp[c] + un.comp[c]).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("continuation bookkeeping follows the boundary amplitude") {
  auto grid = std::make_shared<GridDomain>(12);
  ForwardProblem big = curved_problem(grid, 0.5);
  CHECK(solve(big).report.continuation_steps_used == 4);

  ForwardProblem small = curved_problem(grid, 5e-3);
  CHECK(solve(small).report.continuation_steps_used == 1);
}

TEST_CASE("range guard rejects states that approach the validity sphere") {
  auto grid = std::make_shared<GridDomain>(12);
  auto h = std::make_shared<TargetMetric>(target_conformal(2, "0.1*y1", 1.0));
  BoundaryData f(grid->num_boundary(), 2);
  for (int b = 0; b < grid->num_boundary(); ++b) f.values(b, 0) = 0.95;
  ForwardProblem p = make_problem(grid, domain_euclidean(), h, Eigen::Vector2d::Zero(), 0.95, f);
  CHECK_THROWS_AS(solve(p), SolverError);
}

TEST_CASE("admissibility checks reject bad problems up front") {
  auto grid = std::make_shared<GridDomain>(8);
  auto h = std::make_shared<TargetMetric>(target_conformal(2, "0.1*y1", 1.0));

  // ball radius beyond the target validity radius
  CHECK_THROWS_AS(make_problem(grid, domain_euclidean(), h, Eigen::Vector2d::Zero(), 1.5,
                               BoundaryData(grid->num_boundary(), 2)),
                  std::invalid_argument);

  // base point dimension mismatch
  CHECK_THROWS_AS(make_problem(grid, domain_euclidean(), h, Eigen::Vector3d::Zero(), 0.5,
                               BoundaryData(grid->num_boundary(), 2)),
                  std::invalid_argument);

  // metric loses positivity inside the requested ball
  auto bad = std::make_shared<TargetMetric>(
      target_from_expressions(2, {{"1 - 3*y1", "0"}, {"", "1"}}, 2.0));
  CHECK_THROWS_AS(make_problem(grid, domain_euclidean(), bad, Eigen::Vector2d::Zero(), 0.6,
                               BoundaryData(grid->num_boundary(), 2)),
                  std::invalid_argument);

  ForwardProblem p = make_problem(grid, domain_euclidean(), h, Eigen::Vector2d::Zero(), 0.5,
                                  BoundaryData(grid->num_boundary(), 2));

  // boundary data escaping the admissible ball
  BoundaryData too_big(grid->num_boundary(), 2);
  too_big.values.setConstant(0.6);
  CHECK_THROWS_AS(with_boundary(p, too_big), std::invalid_argument);

  // wrong shape and non-finite entries
  CHECK_THROWS_AS(with_boundary(p, BoundaryData(grid->num_boundary() - 1, 2)),
                  std::invalid_argument);
  BoundaryData nan_data(grid->num_boundary(), 2);
  nan_data.values(3, 1) = std::nan("");
  CHECK_THROWS_AS(with_boundary(p, nan_data), std::invalid_argument);
}
