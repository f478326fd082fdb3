#include "hmlab/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace hmlab {

GridDomain::GridDomain(int n_cells) : n_(n_cells), h_(1.0 / n_cells) {
  if (n_cells < 3) throw std::invalid_argument("GridDomain: need at least 3 cells");
  int m = n_ + 1;
  interior_id_.assign(m * m, -1);
  boundary_id_.assign(m * m, -1);

  for (int j = 1; j < n_; ++j)
    for (int i = 1; i < n_; ++i) {
      interior_id_[node(i, j)] = static_cast<int>(interior_nodes_.size());
      interior_nodes_.push_back(node(i, j));
    }

  auto push_boundary = [&](int i, int j, Edge e) {
    boundary_id_[node(i, j)] = static_cast<int>(boundary_nodes_.size());
    boundary_nodes_.push_back(node(i, j));
    boundary_edges_.push_back(e);
  };
  for (int i = 0; i <= n_; ++i) push_boundary(i, 0, Edge::Bottom);
  for (int j = 1; j < n_; ++j) push_boundary(n_, j, Edge::Right);
  for (int i = 0; i <= n_; ++i) push_boundary(i, n_, Edge::Top);
  for (int j = 1; j < n_; ++j) push_boundary(0, j, Edge::Left);
}

Eigen::Vector2d GridDomain::outward_normal(int bid) const {
  switch (boundary_edges_[bid]) {
    case Edge::Bottom: return {0.0, -1.0};
    case Edge::Right:  return {1.0, 0.0};
    case Edge::Top:    return {0.0, 1.0};
    case Edge::Left:   return {-1.0, 0.0};
  }
  return {0.0, 0.0};
}

// ---------------------------------------------------------------------------
// LaplaceBeltramiOp
// ---------------------------------------------------------------------------

namespace {

struct FluxWeights {
  // W^{ab} = |g|^{1/2} g^{ab} sampled at nodes, then averaged to half nodes.
  Eigen::MatrixXd wxx, wxy, wyy, inv_sqrt_det;
};

FluxWeights node_weights(const GridDomain& grid, const MetricField& g) {
  int m = grid.nodes_per_side();
  FluxWeights w;
  w.wxx.resize(m, m);
  w.wxy.resize(m, m);
  w.wyy.resize(m, m);
  w.inv_sqrt_det.resize(m, m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      double x = grid.x_of(i), y = grid.y_of(j);
      Eigen::Matrix2d gv = g.eval(x, y);
      double det = gv(0, 0) * gv(1, 1) - gv(0, 1) * gv(1, 0);
      if (!(det > 0.0) || !(gv(0, 0) > 0.0))
        throw std::runtime_error("domain metric is not positive definite at a grid node");
      double sd = std::sqrt(det);
      w.wxx(i, j) = sd * gv(1, 1) / det;
      w.wyy(i, j) = sd * gv(0, 0) / det;
      w.wxy(i, j) = -sd * gv(0, 1) / det;
      w.inv_sqrt_det(i, j) = 1.0 / sd;
    }
  return w;
}

}  // namespace

LaplaceBeltramiOp::LaplaceBeltramiOp(std::shared_ptr<const GridDomain> grid_ptr,
                                     const MetricField& g, int iterative_threshold)
    : grid_(std::move(grid_ptr)) {
  const GridDomain& grid = *grid_;
  const int n = grid.n_cells();
  const double h = grid.spacing();
  FluxWeights w = node_weights(grid, g);
  wxx_ = w.wxx;
  wxy_ = w.wxy;
  wyy_ = w.wyy;
  inv_sqrt_det_ = w.inv_sqrt_det;

  // Row for interior (i,j): (Fx_{i+1/2} - Fx_{i-1/2} + Fy_{j+1/2} - Fy_{j-1/2}) / h
  // with Fx_{i+1/2} = Wxx (u_{i+1,j} - u_{ij})/h + Wxy cross-average, etc.
  std::vector<Eigen::Triplet<double>> ti, tb;
  auto add = [&](int row, int ci, int cj, double val) {
    int cnode = grid.node(ci, cj);
    int iid = grid.interior_id(cnode);
    if (iid >= 0)
      ti.emplace_back(row, iid, val);
    else
      tb.emplace_back(row, grid.boundary_id(cnode), val);
  };

  const double inv_h2 = 1.0 / (h * h);
  for (int j = 1; j < n; ++j)
    for (int i = 1; i < n; ++i) {
      int row = grid.interior_id(grid.node(i, j));
      double scale = w.inv_sqrt_det(i, j);

      double wxx_e = 0.5 * (w.wxx(i, j) + w.wxx(i + 1, j));
      double wxx_w = 0.5 * (w.wxx(i - 1, j) + w.wxx(i, j));
      double wyy_n = 0.5 * (w.wyy(i, j) + w.wyy(i, j + 1));
      double wyy_s = 0.5 * (w.wyy(i, j - 1) + w.wyy(i, j));
      double wxy_e = 0.5 * (w.wxy(i, j) + w.wxy(i + 1, j));
      double wxy_w = 0.5 * (w.wxy(i - 1, j) + w.wxy(i, j));
      double wxy_n = 0.5 * (w.wxy(i, j) + w.wxy(i, j + 1));
      double wxy_s = 0.5 * (w.wxy(i, j - 1) + w.wxy(i, j));

      // principal (axis) terms
      add(row, i + 1, j, scale * inv_h2 * wxx_e);
      add(row, i - 1, j, scale * inv_h2 * wxx_w);
      add(row, i, j + 1, scale * inv_h2 * wyy_n);
      add(row, i, j - 1, scale * inv_h2 * wyy_s);
      add(row, i, j, -scale * inv_h2 * (wxx_e + wxx_w + wyy_n + wyy_s));

      // cross terms: d_y u averaged over the two nodes of an x-face
      const double c = scale * inv_h2 / 4.0;
      // east face, +; west face, -
      add(row, i, j + 1, c * wxy_e);
      add(row, i, j - 1, -c * wxy_e);
      add(row, i + 1, j + 1, c * wxy_e);
      add(row, i + 1, j - 1, -c * wxy_e);
      add(row, i, j + 1, -c * wxy_w);
      add(row, i, j - 1, c * wxy_w);
      add(row, i - 1, j + 1, -c * wxy_w);
      add(row, i - 1, j - 1, c * wxy_w);
      // north face, +; south face, -
      add(row, i + 1, j, c * wxy_n);
      add(row, i - 1, j, -c * wxy_n);
      add(row, i + 1, j + 1, c * wxy_n);
      add(row, i - 1, j + 1, -c * wxy_n);
      add(row, i + 1, j, -c * wxy_s);
      add(row, i - 1, j, c * wxy_s);
      add(row, i + 1, j - 1, -c * wxy_s);
      add(row, i - 1, j - 1, c * wxy_s);
    }

  a_ii_.resize(grid.num_interior(), grid.num_interior());
  a_ii_.setFromTriplets(ti.begin(), ti.end());
  a_ib_.resize(grid.num_interior(), grid.num_boundary());
  a_ib_.setFromTriplets(tb.begin(), tb.end());

  iterative_ = n >= iterative_threshold;
  if (iterative_) {
    krylov_.setTolerance(1e-12);
    krylov_.preconditioner().setDroptol(1e-6);
    krylov_.preconditioner().setFillfactor(20);
    krylov_.compute(a_ii_);
    if (krylov_.info() != Eigen::Success)
      throw std::runtime_error("Laplace-Beltrami iterative setup failed");
  } else {
    lu_.compute(a_ii_);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("Laplace-Beltrami factorization failed");
  }
}

Eigen::Matrix2d LaplaceBeltramiOp::inverse_metric_at(int i, int j) const {
  double isd = inv_sqrt_det_(i, j);
  Eigen::Matrix2d ginv;
  ginv(0, 0) = wxx_(i, j) * isd;
  ginv(1, 1) = wyy_(i, j) * isd;
  ginv(0, 1) = ginv(1, 0) = wxy_(i, j) * isd;
  return ginv;
}

ScalarField LaplaceBeltramiOp::apply(const ScalarField& u) const {
  const GridDomain& grid = *grid_;
  Eigen::VectorXd ui(grid.num_interior()), ub(grid.num_boundary());
  for (int k = 0; k < grid.num_interior(); ++k) ui[k] = u.v[grid.interior_node(k)];
  for (int k = 0; k < grid.num_boundary(); ++k) ub[k] = u.v[grid.boundary_node(k)];
  Eigen::VectorXd r = a_ii_ * ui + a_ib_ * ub;
  ScalarField out(grid.num_nodes());
  for (int k = 0; k < grid.num_interior(); ++k) out.v[grid.interior_node(k)] = r[k];
  return out;
}

Eigen::VectorXd LaplaceBeltramiOp::solve_interior(const Eigen::VectorXd& rhs) const {
  if (iterative_) {
    Eigen::VectorXd x = krylov_.solve(rhs);
    if (krylov_.info() != Eigen::Success)
      throw std::runtime_error("Laplace-Beltrami iterative solve did not converge");
    return x;
  }
  return lu_.solve(rhs);
}

ScalarField LaplaceBeltramiOp::solve_dirichlet(const Eigen::VectorXd& bc,
                                               const Eigen::VectorXd& rhs_interior) const {
  const GridDomain& grid = *grid_;
  Eigen::VectorXd rhs = -(a_ib_ * bc);
  if (rhs_interior.size() > 0) rhs += rhs_interior;
  Eigen::VectorXd ui = solve_interior(rhs);
  ScalarField out(grid.num_nodes());
  for (int k = 0; k < grid.num_interior(); ++k) out.v[grid.interior_node(k)] = ui[k];
  for (int k = 0; k < grid.num_boundary(); ++k) out.v[grid.boundary_node(k)] = bc[k];
  return out;
}

// ---------------------------------------------------------------------------
// Derivatives
// ---------------------------------------------------------------------------

std::array<ScalarField, 2> gradient(const GridDomain& grid, const ScalarField& u) {
  const int n = grid.n_cells();
  const double h = grid.spacing();
  std::array<ScalarField, 2> out{ScalarField(grid.num_nodes()), ScalarField(grid.num_nodes())};

  auto d1 = [&](int i, int j, int axis) {
    auto val = [&](int di, int dj) { return u.v[grid.node(i + di, j + dj)]; };
    int idx = axis == 0 ? i : j;
    int si = axis == 0 ? 1 : 0, sj = axis == 0 ? 0 : 1;
    if (idx == 0)
      return (-3.0 * val(0, 0) + 4.0 * val(si, sj) - val(2 * si, 2 * sj)) / (2.0 * h);
    if (idx == n)
      return (3.0 * val(0, 0) - 4.0 * val(-si, -sj) + val(-2 * si, -2 * sj)) / (2.0 * h);
    return (val(si, sj) - val(-si, -sj)) / (2.0 * h);
  };

  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      int id = grid.node(i, j);
      out[0].v[id] = d1(i, j, 0);
      out[1].v[id] = d1(i, j, 1);
    }
  return out;
}

BoundaryData normal_derivative(const GridDomain& grid, const MetricField& g,
                               const VectorField& u) {
  BoundaryData out(grid.num_boundary(), u.dim());
  std::vector<std::array<ScalarField, 2>> grads;
  grads.reserve(u.dim());
  for (int c = 0; c < u.dim(); ++c) grads.push_back(gradient(grid, ScalarField(u.comp[c])));

  for (int b = 0; b < grid.num_boundary(); ++b) {
    int id = grid.boundary_node(b);
    int i = grid.node_i(id), j = grid.node_j(id);
    Eigen::Matrix2d ginv = g.inverse(grid.x_of(i), grid.y_of(j));
    Eigen::Vector2d nu = grid.outward_normal(b);
    Eigen::Vector2d conormal = ginv * nu;
    double norm = std::sqrt(nu.dot(conormal));
    conormal /= norm;
    for (int c = 0; c < u.dim(); ++c)
      out.values(b, c) = conormal[0] * grads[c][0].v[id] + conormal[1] * grads[c][1].v[id];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

double integrate_volume(const GridDomain& grid, const MetricField& g, const ScalarField& f) {
  const int n = grid.n_cells();
  const double h = grid.spacing();
  double sum = 0.0;
  for (int j = 0; j <= n; ++j) {
    double wj = (j == 0 || j == n) ? 0.5 : 1.0;
    for (int i = 0; i <= n; ++i) {
      double wi = (i == 0 || i == n) ? 0.5 : 1.0;
      sum += wi * wj * f.v[grid.node(i, j)] * g.sqrt_det(grid.x_of(i), grid.y_of(j));
    }
  }
  return sum * h * h;
}

Eigen::VectorXd boundary_weights(const GridDomain& grid, const MetricField& g) {
  const int n = grid.n_cells();
  const double h = grid.spacing();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(grid.num_boundary());
  // horizontal edges: tangent e_x, line element sqrt(g11) dx
  for (int j : {0, n})
    for (int i = 0; i <= n; ++i) {
      double wt = (i == 0 || i == n) ? 0.5 : 1.0;
      w[grid.boundary_id(grid.node(i, j))] +=
          wt * h * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(0, 0));
    }
  // vertical edges: tangent e_y, line element sqrt(g22) dy
  for (int i : {0, n})
    for (int j = 0; j <= n; ++j) {
      double wt = (j == 0 || j == n) ? 0.5 : 1.0;
      w[grid.boundary_id(grid.node(i, j))] +=
          wt * h * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(1, 1));
    }
  return w;
}

double integrate_boundary(const GridDomain& grid, const MetricField& g, const Eigen::VectorXd& f) {
  return boundary_weights(grid, g).dot(f);
}

double pair_boundary_flux(const GridDomain& grid, const MetricField& g, const BoundaryData& a,
                          const std::function<Eigen::MatrixXd(int)>& weight,
                          const BoundaryData& flux) {
  const int n = grid.n_cells();
  const double h = grid.spacing();
  // Stored corner rows carry the horizontal edge's conormal; the vertical
  // edges' end values are recovered by quadratic extrapolation along the edge
  // (needs three interior samples, so tiny grids fall back to the stored row).
  auto flux_row = [&](Edge edge, int i, int j) -> Eigen::RowVectorXd {
    int bid = grid.boundary_id(grid.node(i, j));
    if (grid.boundary_edge(bid) == edge || n < 4) return flux.values.row(bid);
    int dj = (j == 0) ? 1 : -1;
    auto row = [&](int k) { return flux.values.row(grid.boundary_id(grid.node(i, j + dj * k))); };
    return 3.0 * row(1) - 3.0 * row(2) + row(3);
  };
  auto term = [&](int bid, const Eigen::RowVectorXd& fx) -> double {
    if (!weight) return a.values.row(bid).dot(fx);
    return (a.values.row(bid) * weight(bid)).dot(fx);
  };
  double total = 0.0;
  for (int j : {0, n}) {
    Edge e = (j == 0) ? Edge::Bottom : Edge::Top;
    for (int i = 0; i <= n; ++i) {
      double wt = (i == 0 || i == n) ? 0.5 : 1.0;
      double ds = wt * h * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(0, 0));
      total += ds * term(grid.boundary_id(grid.node(i, j)), flux_row(e, i, j));
    }
  }
  for (int i : {0, n}) {
    Edge e = (i == 0) ? Edge::Left : Edge::Right;
    for (int j = 0; j <= n; ++j) {
      double wt = (j == 0 || j == n) ? 0.5 : 1.0;
      double ds = wt * h * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(1, 1));
      total += ds * term(grid.boundary_id(grid.node(i, j)), flux_row(e, i, j));
    }
  }
  return total;
}

Eigen::VectorXd boundary_from_expr(const GridDomain& grid, const Expr& e) {
  ExprProgram prog(e);
  Eigen::VectorXd out(grid.num_boundary());
  for (int b = 0; b < grid.num_boundary(); ++b) {
    int id = grid.boundary_node(b);
    double vars[2] = {grid.x_of(grid.node_i(id)), grid.y_of(grid.node_j(id))};
    out[b] = prog.eval(vars);
  }
  return out;
}

Eigen::VectorXd boundary_bump(const GridDomain& grid, Edge edge, double center, double width) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.num_boundary());
  for (int b = 0; b < grid.num_boundary(); ++b) {
    int id = grid.boundary_node(b);
    int i = grid.node_i(id), j = grid.node_j(id);
    int n = grid.n_cells();
    bool on_edge = (edge == Edge::Bottom && j == 0) || (edge == Edge::Top && j == n) ||
                   (edge == Edge::Left && i == 0) || (edge == Edge::Right && i == n);
    if (!on_edge) continue;
    double t = (edge == Edge::Bottom || edge == Edge::Top) ? grid.x_of(i) : grid.y_of(j);
    double s = (t - center) / width;
    if (std::abs(s) >= 1.0) continue;
    out[b] = std::exp(1.0 - 1.0 / (1.0 - s * s));
  }
  return out;
}

}  // namespace hmlab
