#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hmlab/grid.hpp"
#include "support.hpp"

using namespace hmlab;

namespace {

ScalarField sample(const GridDomain& grid, const std::function<double(double, double)>& f) {
  ScalarField out(grid.num_nodes());
  for (int id = 0; id < grid.num_nodes(); ++id)
    out.v[id] = f(grid.x_of(grid.node_i(id)), grid.y_of(grid.node_j(id)));
  return out;
}

double interior_max_abs(const GridDomain& grid, const ScalarField& f) {
  double m = 0.0;
  for (int k = 0; k < grid.num_interior(); ++k)
    m = std::max(m, std::abs(f.v[grid.interior_node(k)]));
  return m;
}

}  // namespace

TEST_CASE("grid bookkeeping: counts, tags, corner assignment") {
  auto grid = std::make_shared<GridDomain>(8);
  CHECK(grid->num_nodes() == 81);
  CHECK(grid->num_interior() == 49);
  CHECK(grid->num_boundary() == 32);

  // corners belong to their horizontal edge
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(0, 0))) == Edge::Bottom);
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(8, 0))) == Edge::Bottom);
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(0, 8))) == Edge::Top);
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(8, 8))) == Edge::Top);
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(8, 4))) == Edge::Right);
  CHECK(grid->boundary_edge(grid->boundary_id(grid->node(0, 4))) == Edge::Left);

  // enumerations are inverse to each other
  for (int b = 0; b < grid->num_boundary(); ++b)
    CHECK(grid->boundary_id(grid->boundary_node(b)) == b);
  for (int k = 0; k < grid->num_interior(); ++k)
    CHECK(grid->interior_id(grid->interior_node(k)) == k);
}

TEST_CASE("flat Laplacian annihilates harmonic polynomials to machine precision") {
  auto grid = std::make_shared<GridDomain>(16);
  LaplaceBeltramiOp op(grid, domain_euclidean());
  ScalarField u = sample(*grid, [](double x, double y) { return x * x - y * y; });
  CHECK(interior_max_abs(*grid, op.apply(u)) < 1e-12);

  ScalarField v = sample(*grid, [](double x, double y) { return x * y; });
  CHECK(interior_max_abs(*grid, op.apply(v)) < 1e-12);
}

TEST_CASE("constant-coefficient operator is exact on affine functions") {
  auto grid = std::make_shared<GridDomain>(12);
  LaplaceBeltramiOp op(grid, domain_constant(2.0, 0.5, 1.5));
  ScalarField u = sample(*grid, [](double x, double y) { return 3.0 * x - 2.0 * y + 1.0; });
  CHECK(interior_max_abs(*grid, op.apply(u)) < 1e-12);
}

TEST_CASE("conformal-metric operator converges at second order") {
  // For g = c * id in two dimensions, Delta_g u = c^{-1} Delta u.
  auto factor = [](double x, double y) { return 1.0 + 0.5 * 16.0 * x * (1 - x) * y * (1 - y); };
  auto u_fn = [](double x, double y) { return std::sin(2.0 * x + y) + x * x * y; };
  auto lap_u = [](double x, double y) { return -5.0 * std::sin(2.0 * x + y) + 2.0 * y; };

  ConformalTestCase cc = ConformalTestCase::bump(domain_euclidean(), 0.5);
  std::vector<double> errs;
  for (int n : {16, 32, 64}) {
    auto grid = std::make_shared<GridDomain>(n);
    LaplaceBeltramiOp op(grid, cc.scaled());
    ScalarField u = sample(*grid, u_fn);
    ScalarField got = op.apply(u);
    double err = 0.0;
    for (int k = 0; k < grid->num_interior(); ++k) {
      int id = grid->interior_node(k);
      double x = grid->x_of(grid->node_i(id)), y = grid->y_of(grid->node_j(id));
      err = std::max(err, std::abs(got.v[id] - lap_u(x, y) / factor(x, y)));
    }
    errs.push_back(err);
  }
  CHECK(testsupport::observed_order(errs[0], errs[1]) > 1.9);
  CHECK(testsupport::observed_order(errs[1], errs[2]) > 1.9);
}

TEST_CASE("dirichlet solve reproduces discrete harmonic functions") {
  auto grid = std::make_shared<GridDomain>(20);
  LaplaceBeltramiOp op(grid, domain_euclidean());
  ScalarField exact = sample(*grid, [](double x, double y) { return x * x - y * y + 0.5 * x; });
  Eigen::VectorXd bc(grid->num_boundary());
  for (int b = 0; b < grid->num_boundary(); ++b) bc[b] = exact.v[grid->boundary_node(b)];
  ScalarField u = op.harmonic_extension(bc);
  CHECK((u.v - exact.v).lpNorm<Eigen::Infinity>() < 1e-11);
}

TEST_CASE("gradient is exact on quadratics and second order on smooth fields") {
  auto grid = std::make_shared<GridDomain>(10);
  ScalarField u = sample(*grid, [](double x, double y) { return x * x + 3.0 * x * y - y * y; });
  auto g = gradient(*grid, u);
  for (int id = 0; id < grid->num_nodes(); ++id) {
    double x = grid->x_of(grid->node_i(id)), y = grid->y_of(grid->node_j(id));
    CHECK(g[0].v[id] == doctest::Approx(2.0 * x + 3.0 * y).epsilon(1e-12));
    CHECK(g[1].v[id] == doctest::Approx(3.0 * x - 2.0 * y).epsilon(1e-12));
  }

  std::vector<double> errs;
  for (int n : {16, 32}) {
    GridDomain gd(n);
    ScalarField s = sample(gd, [](double x, double y) { return std::sin(3.0 * x) * std::cos(y); });
    auto gs = gradient(gd, s);
    double err = 0.0;
    for (int id = 0; id < gd.num_nodes(); ++id) {
      double x = gd.x_of(gd.node_i(id)), y = gd.y_of(gd.node_j(id));
      err = std::max(err, std::abs(gs[0].v[id] - 3.0 * std::cos(3.0 * x) * std::cos(y)));
      err = std::max(err, std::abs(gs[1].v[id] + std::sin(3.0 * x) * std::sin(y)));
    }
    errs.push_back(err);
  }
  CHECK(testsupport::observed_order(errs[0], errs[1]) > 1.9);
}

TEST_CASE("conormal derivative on the flat and anisotropic square") {
  auto grid = std::make_shared<GridDomain>(12);
  VectorField u(1, grid->num_nodes());
  u.comp[0] = sample(*grid, [](double x, double) { return x; }).v;

  BoundaryData flat = normal_derivative(*grid, domain_euclidean(), u);
  MetricField aniso = domain_constant(4.0, 0.0, 1.0);
  BoundaryData scaled = normal_derivative(*grid, aniso, u);
  for (int b = 0; b < grid->num_boundary(); ++b) {
    switch (grid->boundary_edge(b)) {
      case Edge::Right:
        CHECK(flat.values(b, 0) == doctest::Approx(1.0).epsilon(1e-12));
        // conormal of g = diag(4,1): g^{-1} nu / |nu|_{g^{-1}} = (1/2, 0)
        CHECK(scaled.values(b, 0) == doctest::Approx(0.5).epsilon(1e-12));
        break;
      case Edge::Left:
        CHECK(flat.values(b, 0) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(scaled.values(b, 0) == doctest::Approx(-0.5).epsilon(1e-12));
        break;
      default:
        CHECK(std::abs(flat.values(b, 0)) < 1e-12);
        break;
    }
  }
}

TEST_CASE("volume quadrature: flat, anisotropic, and conformal weights") {
  auto grid = std::make_shared<GridDomain>(64);
  ScalarField one = sample(*grid, [](double, double) { return 1.0; });
  CHECK(integrate_volume(*grid, domain_euclidean(), one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(integrate_volume(*grid, domain_constant(4.0, 0.0, 1.0), one) ==
        doctest::Approx(2.0).epsilon(1e-14));

  // int (1 + 16a x(1-x) y(1-y)) dx dy = 1 + 16a/36
  double a = 0.5;
  ConformalTestCase cc = ConformalTestCase::bump(domain_euclidean(), a);
  double exact = 1.0 + 16.0 * a / 36.0;
  double coarse = std::abs(integrate_volume(GridDomain(32), cc.scaled(), sample(GridDomain(32), [](double, double) { return 1.0; })) - exact);
  double fine = std::abs(integrate_volume(GridDomain(64), cc.scaled(), sample(GridDomain(64), [](double, double) { return 1.0; })) - exact);
  CHECK(testsupport::observed_order(coarse, fine) > 1.9);
}

TEST_CASE("boundary quadrature integrates the trace of x to 2 on the flat square") {
  auto grid = std::make_shared<GridDomain>(24);
  Eigen::VectorXd f = boundary_from_expr(*grid, parse_expr("x", {"x", "y"}));
  // bottom 1/2 + top 1/2 + left 0 + right 1
  CHECK(integrate_boundary(*grid, domain_euclidean(), f) == doctest::Approx(2.0).epsilon(1e-13));

  // metric-weighted line element: sqrt(g11) on horizontal, sqrt(g22) on vertical
  MetricField aniso = domain_constant(4.0, 0.0, 1.0);
  Eigen::VectorXd one = Eigen::VectorXd::Ones(grid->num_boundary());
  CHECK(integrate_boundary(*grid, aniso, one) == doctest::Approx(2.0 * 2.0 + 2.0).epsilon(1e-13));
}

TEST_CASE("boundary weights sum to the perimeter and corners carry both edges") {
  auto grid = std::make_shared<GridDomain>(10);
  Eigen::VectorXd w = boundary_weights(*grid, domain_euclidean());
  CHECK(w.sum() == doctest::Approx(4.0).epsilon(1e-14));
  double h = grid->spacing();
  CHECK(w[grid->boundary_id(grid->node(0, 0))] == doctest::Approx(h));       // half of each edge
  CHECK(w[grid->boundary_id(grid->node(5, 0))] == doctest::Approx(h));
}

TEST_CASE("discrete Green identity: pairing defect shrinks at second order") {
  // | int b Delta_g a dV + int g(grad a, grad b) dV | for b vanishing on the
  // boundary; the constant is reported for reference.
  ConformalTestCase cc = ConformalTestCase::bump(domain_euclidean(), 0.3);
  std::vector<double> defects;
  for (int n : {16, 32, 64}) {
    auto grid = std::make_shared<GridDomain>(n);
    LaplaceBeltramiOp op(grid, cc.scaled());
    ScalarField a = sample(*grid, [](double x, double y) { return std::sin(2 * x) * (y + 0.3 * y * y); });
    ScalarField b = sample(*grid, [](double x, double y) { return x * (1 - x) * y * (1 - y); });
    ScalarField lap_a = op.apply(a);

    ScalarField prod(grid->num_nodes());
    for (int k = 0; k < grid->num_interior(); ++k) {
      int id = grid->interior_node(k);
      prod.v[id] = b.v[id] * lap_a.v[id];
    }
    double lhs = integrate_volume(*grid, cc.scaled(), prod);

    auto ga = gradient(*grid, a);
    auto gb = gradient(*grid, b);
    ScalarField dot(grid->num_nodes());
    for (int id = 0; id < grid->num_nodes(); ++id) {
      int i = grid->node_i(id), j = grid->node_j(id);
      Eigen::Matrix2d gi = op.inverse_metric_at(i, j);
      Eigen::Vector2d va(ga[0].v[id], ga[1].v[id]), vb(gb[0].v[id], gb[1].v[id]);
      dot.v[id] = va.dot(gi * vb);
    }
    double rhs = integrate_volume(*grid, cc.scaled(), dot);
    defects.push_back(std::abs(lhs + rhs));
  }
  MESSAGE("Green identity defect at n=16,32,64: " << defects[0] << " " << defects[1] << " "
                                                  << defects[2]);
  CHECK(testsupport::observed_order(defects[0], defects[2]) / 2.0 > 0.9);  // over two doublings
}

TEST_CASE("bump boundary functions are supported on a single edge") {
  auto grid = std::make_shared<GridDomain>(16);
  Eigen::VectorXd f = boundary_bump(*grid, Edge::Left, 0.5, 0.25);
  double peak = 0.0;
  for (int b = 0; b < grid->num_boundary(); ++b) {
    if (grid->boundary_edge(b) != Edge::Left) CHECK(f[b] == 0.0);
    peak = std::max(peak, f[b]);
  }
  CHECK(peak == doctest::Approx(1.0));  // center sample hits s = 0
  // corners always stay at zero
  CHECK(f[grid->boundary_id(grid->node(0, 0))] == 0.0);
  CHECK(f[grid->boundary_id(grid->node(0, 16))] == 0.0);
}
