#include "hmlab/forward.hpp"

#include <cmath>

#include <Eigen/SparseLU>

namespace hmlab {

namespace {

// Central-difference gradients of every component at interior nodes,
// interior-indexed: out[c][k] = (d_x u^c, d_y u^c) at interior node k.
std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> interior_gradients(
    const GridDomain& grid, const VectorField& u) {
  const double inv2h = 1.0 / (2.0 * grid.spacing());
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 2>> out(
      u.dim(), Eigen::Matrix<double, Eigen::Dynamic, 2>(grid.num_interior(), 2));
  for (int c = 0; c < u.dim(); ++c) {
    const Eigen::VectorXd& v = u.comp[c];
    for (int k = 0; k < grid.num_interior(); ++k) {
      int id = grid.interior_node(k);
      int i = grid.node_i(id), j = grid.node_j(id);
      out[c](k, 0) = (v[grid.node(i + 1, j)] - v[grid.node(i - 1, j)]) * inv2h;
      out[c](k, 1) = (v[grid.node(i, j + 1)] - v[grid.node(i, j - 1)]) * inv2h;
    }
  }
  return out;
}

Eigen::VectorXd state_at(const VectorField& u, int node) {
  Eigen::VectorXd y(u.dim());
  for (int c = 0; c < u.dim(); ++c) y[c] = u.comp[c][node];
  return y;
}

double interior_max_abs(const GridDomain& grid, const VectorField& r) {
  double m = 0.0;
  for (int c = 0; c < r.dim(); ++c)
    for (int k = 0; k < grid.num_interior(); ++k)
      m = std::max(m, std::abs(r.comp[c][grid.interior_node(k)]));
  return m;
}

}  // namespace

ForwardProblem make_problem(std::shared_ptr<const GridDomain> grid, MetricField g,
                            std::shared_ptr<const TargetMetric> h, Eigen::VectorXd q,
                            double ball_radius, BoundaryData f) {
  ForwardProblem p;
  p.grid = grid;
  p.g = std::make_shared<const MetricField>(std::move(g));
  p.h = std::move(h);
  p.q = std::move(q);
  p.ball_radius = ball_radius;
  if (p.q.size() != p.h->dim())
    throw std::invalid_argument("make_problem: q dimension does not match target metric");
  if (ball_radius <= 0.0 || ball_radius > p.h->validity_radius())
    throw std::invalid_argument("make_problem: ball radius outside target validity radius");
  double min_ev = min_eigenvalue_on_ball(*p.h, p.q, ball_radius);
  if (!(min_ev > 0.0))
    throw std::invalid_argument("make_problem: target metric not positive definite on B_r(q)");
  p.op = std::make_shared<const LaplaceBeltramiOp>(grid, *p.g);
  p.boundary = BoundaryData(grid->num_boundary(), p.h->dim());
  ForwardProblem out = with_boundary(p, std::move(f));
  return out;
}

ForwardProblem with_boundary(const ForwardProblem& base, BoundaryData f) {
  ForwardProblem p = base;
  if (f.values.rows() != base.grid->num_boundary() || f.dim() != base.target_dim())
    throw std::invalid_argument("with_boundary: boundary data has the wrong shape");
  for (int b = 0; b < f.values.rows(); ++b)
    if (f.values.row(b).norm() > base.ball_radius)
      throw std::invalid_argument("with_boundary: boundary data leaves the admissible ball");
  if (!f.values.allFinite())
    throw std::invalid_argument("with_boundary: boundary data is not finite");
  p.boundary = std::move(f);
  return p;
}

VectorField residual(const ForwardProblem& p, const VectorField& u) {
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  VectorField r(n, grid.num_nodes());
  for (int c = 0; c < n; ++c) r.comp[c] = p.op->apply(ScalarField(u.comp[c])).v;

  auto du = interior_gradients(grid, u);
  for (int k = 0; k < grid.num_interior(); ++k) {
    int id = grid.interior_node(k);
    int i = grid.node_i(id), j = grid.node_j(id);
    Eigen::Matrix2d gi = p.op->inverse_metric_at(i, j);
    Tensor3 gamma = p.h->christoffel(state_at(u, id));
    // M_{jk} = g^{ab} d_a u^j d_b u^k
    Eigen::MatrixXd m(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Eigen::Vector2d da(du[a](k, 0), du[a](k, 1));
        Eigen::Vector2d db(du[b](k, 0), du[b](k, 1));
        m(a, b) = da.dot(gi * db);
      }
    for (int c = 0; c < n; ++c) {
      double q = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) q += gamma(c, a, b) * m(a, b);
      r.comp[c][id] += q;
    }
  }
  return r;
}

VectorField jacobian_apply(const ForwardProblem& p, const VectorField& u, const VectorField& w) {
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  VectorField r(n, grid.num_nodes());
  for (int c = 0; c < n; ++c) r.comp[c] = p.op->apply(ScalarField(w.comp[c])).v;

  auto du = interior_gradients(grid, u);
  auto dw = interior_gradients(grid, w);
  for (int k = 0; k < grid.num_interior(); ++k) {
    int id = grid.interior_node(k);
    int i = grid.node_i(id), j = grid.node_j(id);
    Eigen::Matrix2d gi = p.op->inverse_metric_at(i, j);
    Eigen::VectorXd y = state_at(u, id);
    Tensor3 gamma = p.h->christoffel(y);
    std::vector<Tensor3> dgamma = p.h->christoffel_first_derivative(y);

    Eigen::MatrixXd m(n, n), mw(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Eigen::Vector2d da(du[a](k, 0), du[a](k, 1));
        Eigen::Vector2d db(du[b](k, 0), du[b](k, 1));
        Eigen::Vector2d wa(dw[a](k, 0), dw[a](k, 1));
        m(a, b) = da.dot(gi * db);
        mw(a, b) = wa.dot(gi * db);
      }
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          for (int l = 0; l < n; ++l) acc += dgamma[l](c, a, b) * w.comp[l][id] * m(a, b);
          acc += 2.0 * gamma(c, a, b) * mw(a, b);
        }
      r.comp[c][id] += acc;
    }
  }
  return r;
}

namespace {

// Lower-order Newton coupling terms (everything except the block-diagonal
// Laplace-Beltrami part), assembled over interior unknowns with
// component-major layout: unknown = c * num_interior + k.
Eigen::SparseMatrix<double> assemble_coupling(const ForwardProblem& p, const VectorField& u) {
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  const int ni = grid.num_interior();
  const double inv2h = 1.0 / (2.0 * grid.spacing());
  auto du = interior_gradients(grid, u);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(ni) * n * n * 5);
  for (int k = 0; k < ni; ++k) {
    int id = grid.interior_node(k);
    int i = grid.node_i(id), j = grid.node_j(id);
    Eigen::Matrix2d gi = p.op->inverse_metric_at(i, j);
    Eigen::VectorXd y = state_at(u, id);
    Tensor3 gamma = p.h->christoffel(y);
    std::vector<Tensor3> dgamma = p.h->christoffel_first_derivative(y);

    Eigen::MatrixXd m(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Eigen::Vector2d da(du[a](k, 0), du[a](k, 1));
        Eigen::Vector2d db(du[b](k, 0), du[b](k, 1));
        m(a, b) = da.dot(gi * db);
      }

    for (int c = 0; c < n; ++c) {
      // zero-order: d_l Gamma^c_{ab}(u) w^l M_{ab}
      for (int l = 0; l < n; ++l) {
        double val = 0.0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) val += dgamma[l](c, a, b) * m(a, b);
        if (val != 0.0) trip.emplace_back(c * ni + k, l * ni + k, val);
      }
      // first-order: 2 Gamma^c_{ab}(u) g^{a'b'} d_{a'} w^a d_{b'} u^b with
      // central differences on w
      for (int a = 0; a < n; ++a) {
        Eigen::Vector2d gd = Eigen::Vector2d::Zero();  // coefficient of (d_x w^a, d_y w^a)
        for (int b = 0; b < n; ++b) {
          Eigen::Vector2d db(du[b](k, 0), du[b](k, 1));
          gd += 2.0 * gamma(c, a, b) * (gi * db);
        }
        const int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        const double sgn[4] = {1.0, -1.0, 1.0, -1.0};
        const int axis[4] = {0, 0, 1, 1};
        for (int t = 0; t < 4; ++t) {
          int nb = grid.node(i + off[t][0], j + off[t][1]);
          int nk = grid.interior_id(nb);
          if (nk < 0) continue;  // Dirichlet increment vanishes on the boundary
          double val = gd[axis[t]] * sgn[t] * inv2h;
          if (val != 0.0) trip.emplace_back(c * ni + k, a * ni + nk, val);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> e(n * ni, n * ni);
  e.setFromTriplets(trip.begin(), trip.end());
  return e;
}

Eigen::VectorXd gather_interior(const GridDomain& grid, const VectorField& f) {
  const int ni = grid.num_interior();
  Eigen::VectorXd out(f.dim() * ni);
  for (int c = 0; c < f.dim(); ++c)
    for (int k = 0; k < ni; ++k) out[c * ni + k] = f.comp[c][grid.interior_node(k)];
  return out;
}

// J x with J = blockdiag(A_II) + E
Eigen::VectorXd coupled_apply(const LaplaceBeltramiOp& op, const Eigen::SparseMatrix<double>& e,
                              int ncomp, const Eigen::VectorXd& x) {
  const int ni = op.interior_matrix().rows();
  Eigen::VectorXd y = e * x;
  for (int c = 0; c < ncomp; ++c)
    y.segment(c * ni, ni) += op.interior_matrix() * x.segment(c * ni, ni);
  return y;
}

// Defect-correction solve of J x = b preconditioned by the block-diagonal
// base factorization.  Returns false if the iteration stalls.
bool defect_solve(const LaplaceBeltramiOp& op, const Eigen::SparseMatrix<double>& e, int ncomp,
                  const Eigen::VectorXd& b, Eigen::VectorXd& x) {
  const int ni = op.interior_matrix().rows();
  x = Eigen::VectorXd::Zero(b.size());
  double bnorm = b.lpNorm<Eigen::Infinity>();
  if (bnorm == 0.0) return true;
  double tol = std::max(1e-14, 1e-13 * bnorm);
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd r = b - coupled_apply(op, e, ncomp, x);
    double rn = r.lpNorm<Eigen::Infinity>();
    if (rn <= tol) return true;
    if (rn >= 0.9 * last && it > 4) return false;  // stalling: contraction too weak
    last = rn;
    for (int c = 0; c < ncomp; ++c)
      x.segment(c * ni, ni) += op.solve_interior(r.segment(c * ni, ni));
  }
  return false;
}

bool direct_solve(const LaplaceBeltramiOp& op, const Eigen::SparseMatrix<double>& e, int ncomp,
                  const Eigen::VectorXd& b, Eigen::VectorXd& x) {
  const int ni = op.interior_matrix().rows();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(e.nonZeros() + ncomp * op.interior_matrix().nonZeros());
  for (int c = 0; c < ncomp; ++c)
    for (int col = 0; col < ni; ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(op.interior_matrix(), col); it; ++it)
        trip.emplace_back(c * ni + it.row(), c * ni + col, it.value());
  for (int col = 0; col < e.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(e, col); it; ++it)
      trip.emplace_back(it.row(), it.col(), it.value());
  Eigen::SparseMatrix<double> jmat(ncomp * ni, ncomp * ni);
  jmat.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(jmat);
  if (lu.info() != Eigen::Success) return false;
  x = lu.solve(b);
  return lu.info() == Eigen::Success;
}

}  // namespace

VectorField harmonic_extension(const ForwardProblem& p, const BoundaryData& f) {
  VectorField v(f.dim(), p.grid->num_nodes());
  for (int c = 0; c < f.dim(); ++c) v.comp[c] = p.op->harmonic_extension(f.values.col(c)).v;
  return v;
}

SolveResult solve(const ForwardProblem& p, const SolveControls& controls) {
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  const int ni = grid.num_interior();

  double amp = 0.0;
  for (int b = 0; b < p.boundary.values.rows(); ++b)
    amp = std::max(amp, p.boundary.values.row(b).norm());

  const bool small_data = amp <= controls.precond_amplitude;
  const int steps = small_data ? 1 : std::max(1, controls.continuation_steps);

  VectorField v1 = harmonic_extension(p, p.boundary);
  VectorField u(n, grid.num_nodes());
  for (int c = 0; c < n; ++c) u.comp[c].setConstant(p.q[c]);

  NewtonReport report;
  report.continuation_steps_used = steps;
  const double guard = controls.range_guard * p.h->validity_radius();
  // every state the metric is evaluated at must stay well inside the target
  // validity ball -- including warm starts and prescribed boundary values
  auto check_range = [&](const VectorField& state, double rn) {
    for (int id = 0; id < grid.num_nodes(); ++id) {
      double d2 = 0.0;
      for (int c = 0; c < n; ++c) d2 += (state.comp[c][id] - p.q[c]) * (state.comp[c][id] - p.q[c]);
      if (std::sqrt(d2) > guard) {
        report.final_residual = rn;
        throw SolverError("iterate left the admissible range of the target metric", report);
      }
    }
  };

  double s_prev = 0.0;
  for (int stage = 1; stage <= steps; ++stage) {
    double s = static_cast<double>(stage) / steps;
    // warm start: previous solution plus the harmonic increment
    for (int c = 0; c < n; ++c) {
      // v1 extends the offset f, so the increment is purely the offset part
      for (int k = 0; k < ni; ++k) {
        int id = grid.interior_node(k);
        u.comp[c][id] += (s - s_prev) * v1.comp[c][id];
      }
      for (int b = 0; b < grid.num_boundary(); ++b)
        u.comp[c][grid.boundary_node(b)] = p.q[c] + s * p.boundary.values(b, c);
    }
    s_prev = s;
    check_range(u, 0.0);

    bool last_stage = stage == steps;
    if (last_stage) report.residual_history.clear();
    for (int it = 0;; ++it) {
      VectorField r = residual(p, u);
      double rn = interior_max_abs(grid, r);
      if (last_stage) report.residual_history.push_back(rn);
      if (rn <= controls.tolerance) break;
      if (it >= controls.max_newton_iterations || !std::isfinite(rn)) {
        report.final_residual = rn;
        throw SolverError("Newton did not converge", report);
      }

      Eigen::SparseMatrix<double> e = assemble_coupling(p, u);
      Eigen::VectorXd b = -gather_interior(grid, r);
      Eigen::VectorXd delta;
      bool ok = small_data ? defect_solve(*p.op, e, n, b, delta) : false;
      if (!ok) ok = direct_solve(*p.op, e, n, b, delta);
      if (!ok) {
        report.final_residual = rn;
        throw SolverError("Newton linear solve failed", report);
      }

      for (int c = 0; c < n; ++c)
        for (int k = 0; k < ni; ++k) u.comp[c][grid.interior_node(k)] += delta[c * ni + k];
      ++report.total_iterations;
      check_range(u, rn);
    }
  }

  VectorField rfin = residual(p, u);
  report.final_residual = interior_max_abs(grid, rfin);
  report.converged = report.final_residual <= controls.tolerance;
  return {std::move(u), std::move(report)};
}

double dirichlet_energy(const ForwardProblem& p, const VectorField& u) {
  const GridDomain& grid = *p.grid;
  const int nc = grid.n_cells();
  const double h = grid.spacing();
  const int n = p.target_dim();

  // Half-node face quadrature sharing the operator's flux coefficients
  // W^{ab} = sqrt(det g) g^{ab}, so that for diagonal g and flat h the
  // interior gradient of this energy is exactly the solver's residual (times
  // the volume weight) and its boundary gradient is the exact discrete flux.
  auto W = [&](int i, int j, int a, int b) {
    return p.op->sqrt_det_at(i, j) * p.op->inverse_metric_at(i, j)(a, b);
  };
  Eigen::VectorXd ym(n);
  auto face_term = [&](int left, int right, double coeff) {
    for (int c = 0; c < n; ++c) ym[c] = 0.5 * (u.comp[c][left] + u.comp[c][right]);
    Eigen::MatrixXd hm = p.h->eval(ym);
    double acc = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        acc += hm(a, b) * (u.comp[a][right] - u.comp[a][left]) *
               (u.comp[b][right] - u.comp[b][left]);
    return 0.5 * coeff * acc;
  };

  double energy = 0.0;
  bool mixed = false;
  for (int j = 0; j <= nc; ++j) {
    double wy = (j == 0 || j == nc) ? 0.5 : 1.0;
    for (int i = 0; i <= nc; ++i) {
      if (std::abs(W(i, j, 0, 1)) > 1e-14) mixed = true;
      if (i < nc)
        energy += face_term(grid.node(i, j), grid.node(i + 1, j),
                            wy * 0.5 * (W(i, j, 0, 0) + W(i + 1, j, 0, 0)));
      if (j < nc)
        energy += face_term(grid.node(i, j), grid.node(i, j + 1),
                            ((i == 0 || i == nc) ? 0.5 : 1.0) *
                                0.5 * (W(i, j, 1, 1) + W(i, j + 1, 1, 1)));
    }
  }

  // Off-diagonal g couples the two gradient directions; those terms have no
  // single-face expression, so they are added by node quadrature.
  if (mixed) {
    std::vector<std::array<ScalarField, 2>> gr;
    gr.reserve(n);
    for (int c = 0; c < n; ++c) gr.push_back(gradient(grid, ScalarField(u.comp[c])));
    for (int id = 0; id < grid.num_nodes(); ++id) {
      int i = grid.node_i(id), j = grid.node_j(id);
      double tw = h * h * ((i == 0 || i == nc) ? 0.5 : 1.0) * ((j == 0 || j == nc) ? 0.5 : 1.0);
      Eigen::MatrixXd hm = p.h->eval(state_at(u, id));
      double acc = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) acc += hm(a, b) * gr[a][0].v[id] * gr[b][1].v[id];
      energy += tw * W(i, j, 0, 1) * acc;
    }
  }
  return energy;
}

}  // namespace hmlab
