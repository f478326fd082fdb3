#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "hmlab/dnmap.hpp"
#include "hmlab/linearize.hpp"
#include "support.hpp"

using namespace hmlab;

namespace {

SolveControls tight() {
  SolveControls c;
  c.tolerance = 1e-12;
  c.max_newton_iterations = 50;
  return c;
}

struct Lab {
  std::shared_ptr<GridDomain> grid;
  ForwardProblem problem;
  std::vector<BoundaryData> slots;
};

Lab make_lab(int n_cells, int nslots) {
  auto grid = std::make_shared<GridDomain>(n_cells);
  MetricField g = ConformalTestCase::bump(domain_euclidean(), 0.4).scaled();
  auto h = std::make_shared<TargetMetric>(
      target_conformal(2, "0.4*y1 + 0.3*y2 + 0.25*y1^2 - 0.2*y1*y2", 10.0));
  Eigen::Vector2d q(0.05, -0.1);

  std::vector<BoundaryData> slots;
  BoundaryData f1(grid->num_boundary(), 2);
  f1.values.col(0) = 0.3 * boundary_bump(*grid, Edge::Bottom, 0.5, 0.3);
  slots.push_back(f1);
  BoundaryData f2(grid->num_boundary(), 2);
  f2.values.col(1) = boundary_from_expr(*grid, parse_expr("0.3*sin(2*x + y)", {"x", "y"}));
  slots.push_back(f2);
  BoundaryData f3(grid->num_boundary(), 2);
  f3.values.col(0) = boundary_from_expr(*grid, parse_expr("0.25*(x - y)", {"x", "y"}));
  f3.values.col(1) = boundary_from_expr(*grid, parse_expr("0.2*x*y", {"x", "y"}));
  slots.push_back(f3);
  slots.resize(nslots, BoundaryData(grid->num_boundary(), 2));

  ForwardProblem p = make_problem(grid, g, h, q, 2.0, BoundaryData(grid->num_boundary(), 2));
  return {grid, std::move(p), std::move(slots)};
}

double sup_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("flat DN measurement of a harmonic trace is analytic") {
  auto grid = std::make_shared<GridDomain>(16);
  auto h = std::make_shared<TargetMetric>(target_euclidean(2));
  ForwardProblem p = make_problem(grid, domain_euclidean(), h, Eigen::Vector2d::Zero(), 3.0,
                                  BoundaryData(grid->num_boundary(), 2));
  BoundaryData f(grid->num_boundary(), 2);
  f.values.col(0) = boundary_from_expr(*grid, parse_expr("x^2 - y^2", {"x", "y"}));

  BoundaryData lam = dn_evaluate(p, f);
  for (int b = 0; b < grid->num_boundary(); ++b) {
    int id = grid->boundary_node(b);
    double x = grid->x_of(grid->node_i(id)), y = grid->y_of(grid->node_j(id));
    double want = 0.0;
    switch (grid->boundary_edge(b)) {
      case Edge::Bottom: want = 2.0 * y; break;   // -d_y(x^2 - y^2) at y = 0
      case Edge::Top:    want = -2.0 * y; break;
      case Edge::Right:  want = 2.0 * x; break;
      case Edge::Left:   want = -2.0 * x; break;
    }
    CHECK(lam.values(b, 0) == doctest::Approx(want).epsilon(1e-11));
    CHECK(std::abs(lam.values(b, 1)) < 1e-11);
  }
}

TEST_CASE("first DN derivative matches the conormal of the first-order field") {
  Lab lab = make_lab(12, 1);
  LinearizationStack st(lab.problem, lab.slots);
  DnOracle oracle(lab.problem, tight());

  DnDerivativeResult res = dn_mixed_derivative(oracle, lab.slots, 1e-3);
  CHECK(oracle.calls() == 4);
  CHECK(res.evaluations == 4);
  CHECK(sup_diff(res.value.values, st.conormal(0b1).values) < 1e-6);
}

TEST_CASE("second DN derivative: accuracy, error estimate, call accounting") {
  Lab lab = make_lab(12, 2);
  LinearizationStack st(lab.problem, lab.slots);
  DnOracle oracle(lab.problem, tight());

  DnDerivativeResult res = dn_mixed_derivative(oracle, lab.slots, 1e-2);
  CHECK(oracle.calls() == 8);
  BoundaryData want = st.conormal(0b11);
  double actual = sup_diff(res.value.values, want.values);
  CHECK(actual < 5e-6);
  // the estimate bounds the unextrapolated stencil, so it must cover the
  // extrapolated error as well
  CHECK(actual <= res.error_estimate + 1e-7);

  DnDerivativeResult raw = dn_mixed_derivative(oracle, lab.slots, 1e-2, false);
  CHECK(raw.evaluations == 4);
  CHECK(sup_diff(raw.value.values, want.values) < 5e-4);
}

TEST_CASE("third DN derivative matches the conormal of the third-order field") {
  Lab lab = make_lab(10, 3);
  LinearizationStack st(lab.problem, lab.slots);
  DnOracle oracle(lab.problem, tight());

  DnDerivativeResult res = dn_mixed_derivative(oracle, lab.slots, 2e-2);
  CHECK(oracle.calls() == 16);
  BoundaryData want = st.conormal(0b111);
  double scale = want.values.cwiseAbs().maxCoeff();
  CHECK(scale > 1e-6);
  CHECK(sup_diff(res.value.values, want.values) <= 0.02 * scale + 2e-5);
}

TEST_CASE("adaptive refinement descends the step ladder") {
  Lab lab = make_lab(10, 2);
  LinearizationStack st(lab.problem, lab.slots);
  DnOracle oracle(lab.problem, tight());

  const double big = 0.4;
  DnDerivativeResult res = dn_mixed_derivative(oracle, lab.slots, big, true, 3);
  CHECK(res.evaluations >= 12);          // at least one extra halving
  CHECK(res.delta <= big / 4 + 1e-12);
  CHECK(res.evaluations == oracle.calls());
  CHECK(sup_diff(res.value.values, st.conormal(0b11).values) < 1e-3);
}

TEST_CASE("energy variation: pairing and centered difference agree to grid accuracy") {
  std::vector<double> defects;
  for (int n : {12, 24}) {
    Lab lab = make_lab(n, 2);
    BoundaryData f = lab.slots[0];
    f.values += lab.slots[1].values;  // generic non-probe data
    BoundaryData phi(lab.grid->num_boundary(), 2);
    phi.values.col(0) =
        boundary_from_expr(*lab.grid, parse_expr("0.5*cos(3*x) + y", {"x", "y"}));
    phi.values.col(1) = boundary_from_expr(*lab.grid, parse_expr("x*(1 - y)", {"x", "y"}));

    double pair = energy_variation_pairing(lab.problem, f, phi, tight());
    EnergyOracle energy(lab.problem, tight());
    double fd = energy_variation_difference(energy, f, phi, 1e-3);
    CHECK(energy.calls() == 2);
    defects.push_back(std::abs(pair - fd) / std::max(1.0, std::abs(pair)));
  }
  CHECK(defects[1] < 3e-2);
  CHECK(defects[1] < defects[0]);  // shrinks under refinement
}

TEST_CASE("DN from energy: the pairing route inverts the reduction exactly") {
  Lab lab = make_lab(12, 2);
  BoundaryData f = lab.slots[0];
  f.values += lab.slots[1].values;

  BoundaryData direct = dn_evaluate(lab.problem, f, tight());
  BoundaryData rec = dn_from_energy(lab.problem, f, VariationRoute::BoundaryPairing, 1e-4, tight());
  CHECK(sup_diff(rec.values, direct.values) < 1e-12);
}

TEST_CASE("DN from energy: honest centered differences recover the flat DN map") {
  // Flat target, harmonic-polynomial data: the energy's boundary gradient is
  // the exact discrete flux, so per-node energy probes reproduce the DN
  // measurement to solver/step noise (corner rows come from edge
  // extrapolation because a corner probe stimulates both edges at once).
  auto grid = std::make_shared<GridDomain>(12);
  ForwardProblem p = make_problem(grid, domain_euclidean(),
                                  std::make_shared<TargetMetric>(target_euclidean(2)),
                                  Eigen::Vector2d(0.0, 0.0), 4.0,
                                  BoundaryData(grid->num_boundary(), 2));
  BoundaryData f(grid->num_boundary(), 2);
  f.values.col(0) = boundary_from_expr(*grid, parse_expr("x^2 - y^2 + 0.5*x", {"x", "y"}));
  f.values.col(1) = boundary_from_expr(*grid, parse_expr("0.4*x*y", {"x", "y"}));

  BoundaryData direct = dn_evaluate(p, f, tight());
  BoundaryData rec = dn_from_energy(p, f, VariationRoute::CenteredDifference, 1e-5, tight());
  CHECK(sup_diff(rec.values, direct.values) < 1e-6);
}

TEST_CASE("energy variation: both routes are near-exact on the flat linear example") {
  auto grid = std::make_shared<GridDomain>(16);
  ForwardProblem p = make_problem(grid, domain_euclidean(),
                                  std::make_shared<TargetMetric>(target_euclidean(2)),
                                  Eigen::Vector2d(0.2, -0.1), 4.0,
                                  BoundaryData(grid->num_boundary(), 2));
  BoundaryData f(grid->num_boundary(), 2);
  f.values.col(0) = boundary_from_expr(*grid, parse_expr("x", {"x", "y"}));
  BoundaryData phi = f;

  // the energy is exactly quadratic along this ray, so the centered
  // difference is step-independent and both routes integrate exactly
  for (double t : {1e-2, 1e-3}) {
    VariationPair v = energy_first_variation(p, f, phi, t, tight());
    CHECK(std::abs(v.pairing - 1.0) < 1e-10);
    CHECK(std::abs(v.centered_difference - 1.0) < 1e-9);
  }
}
