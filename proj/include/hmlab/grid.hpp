#pragma once

// Uniform tensor grid on [0,1]^2: node/boundary bookkeeping, divergence-form
// Laplace-Beltrami assembly with half-node flux averaging, second-order
// gradients (one-sided at the boundary), outward conormal derivatives, and
// trapezoid quadrature weighted by the domain metric.

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "hmlab/geometry.hpp"

namespace hmlab {

enum class Edge { Bottom = 0, Right = 1, Top = 2, Left = 3 };

class GridDomain {
 public:
  explicit GridDomain(int n_cells);

  int n_cells() const { return n_; }
  int nodes_per_side() const { return n_ + 1; }
  int num_nodes() const { return (n_ + 1) * (n_ + 1); }
  int num_interior() const { return (n_ - 1) * (n_ - 1); }
  int num_boundary() const { return 4 * n_; }
  double spacing() const { return h_; }

  int node(int i, int j) const { return j * (n_ + 1) + i; }
  int node_i(int id) const { return id % (n_ + 1); }
  int node_j(int id) const { return id / (n_ + 1); }
  double x_of(int i) const { return i * h_; }
  double y_of(int j) const { return j * h_; }

  bool is_boundary(int i, int j) const { return i == 0 || j == 0 || i == n_ || j == n_; }

  // Interior nodes in row-major order; -1 for boundary nodes.
  int interior_id(int node) const { return interior_id_[node]; }
  int interior_node(int iid) const { return interior_nodes_[iid]; }

  // Boundary nodes enumerated bottom, right, top, left; corners belong to
  // their horizontal edge (bottom or top).  -1 for interior nodes.
  int boundary_id(int node) const { return boundary_id_[node]; }
  int boundary_node(int bid) const { return boundary_nodes_[bid]; }
  Edge boundary_edge(int bid) const { return boundary_edges_[bid]; }

  // Outward unit Euclidean normal of the edge a boundary node is assigned to.
  Eigen::Vector2d outward_normal(int bid) const;

 private:
  int n_;
  double h_;
  std::vector<int> interior_id_, interior_nodes_;
  std::vector<int> boundary_id_, boundary_nodes_;
  std::vector<Edge> boundary_edges_;
};

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

struct ScalarField {
  Eigen::VectorXd v;

  ScalarField() = default;
  explicit ScalarField(int num_nodes) : v(Eigen::VectorXd::Zero(num_nodes)) {}
  explicit ScalarField(Eigen::VectorXd values) : v(std::move(values)) {}
  bool all_finite() const { return v.allFinite(); }
};

struct VectorField {
  std::vector<Eigen::VectorXd> comp;

  VectorField() = default;
  VectorField(int dim, int num_nodes) : comp(dim, Eigen::VectorXd::Zero(num_nodes)) {}
  int dim() const { return static_cast<int>(comp.size()); }
  bool all_finite() const {
    for (const auto& c : comp)
      if (!c.allFinite()) return false;
    return true;
  }
};

// Values on boundary nodes (rows follow the boundary enumeration).
struct BoundaryData {
  Eigen::MatrixXd values;  // num_boundary x dim

  BoundaryData() = default;
  BoundaryData(int num_boundary, int dim) : values(Eigen::MatrixXd::Zero(num_boundary, dim)) {}
  int dim() const { return static_cast<int>(values.cols()); }
  double max_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

// ---------------------------------------------------------------------------
// Laplace-Beltrami operator
// ---------------------------------------------------------------------------

// Discrete Delta_g u = |g|^{-1/2} d_a(|g|^{1/2} g^{ab} d_b u) on interior
// nodes.  Fluxes live on half nodes; |g|^{1/2} g^{ab} is averaged from the
// two adjacent nodes.  Exact on affine functions for constant g.  The
// interior block is factorized once (sparse LU, iterative fallback for large
// grids) and reused for every Dirichlet solve against this geometry.
class LaplaceBeltramiOp {
 public:
  LaplaceBeltramiOp(std::shared_ptr<const GridDomain> grid, const MetricField& g,
                    int iterative_threshold = 192);

  const GridDomain& grid() const { return *grid_; }

  // Operator action at interior nodes (boundary entries of the result are 0).
  ScalarField apply(const ScalarField& u) const;

  // Solves Delta_g u = rhs on the interior with u = bc on the boundary.
  // `rhs_interior` may be empty (harmonic extension).  `bc` is indexed by
  // boundary id.
  ScalarField solve_dirichlet(const Eigen::VectorXd& bc, const Eigen::VectorXd& rhs_interior) const;

  ScalarField harmonic_extension(const Eigen::VectorXd& bc) const {
    return solve_dirichlet(bc, Eigen::VectorXd());
  }

  // Interior-block solve of the scalar operator (preconditioner duty for the
  // coupled Newton systems).  Input and output are interior-indexed.
  Eigen::VectorXd solve_interior(const Eigen::VectorXd& rhs) const;

  const Eigen::SparseMatrix<double>& interior_matrix() const { return a_ii_; }
  const Eigen::SparseMatrix<double>& boundary_matrix() const { return a_ib_; }
  bool used_iterative() const { return iterative_; }

  // Metric samples at nodes, cached at assembly (used by residual and
  // integrand evaluation on the same geometry).
  Eigen::Matrix2d inverse_metric_at(int i, int j) const;
  double sqrt_det_at(int i, int j) const { return 1.0 / inv_sqrt_det_(i, j); }

 private:
  std::shared_ptr<const GridDomain> grid_;
  Eigen::MatrixXd wxx_, wxy_, wyy_, inv_sqrt_det_;
  Eigen::SparseMatrix<double> a_ii_, a_ib_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  bool iterative_ = false;
  Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> krylov_;
};

// ---------------------------------------------------------------------------
// Derivatives and quadrature
// ---------------------------------------------------------------------------

// Second-order gradient: central differences at interior nodes, one-sided
// three-point stencils on the boundary.  out[0] = d_x u, out[1] = d_y u.
std::array<ScalarField, 2> gradient(const GridDomain& grid, const ScalarField& u);

// Outward g-unit conormal derivative of every component of u on the
// boundary: (g^{ab} nu_b / |nu|_{g^{-1}}) d_a u, with nu the Euclidean
// outward normal of the node's assigned edge.
BoundaryData normal_derivative(const GridDomain& grid, const MetricField& g, const VectorField& u);

// Trapezoid quadrature of f against the metric volume element dV_g.
double integrate_volume(const GridDomain& grid, const MetricField& g, const ScalarField& f);

// Quadrature weights of the boundary line element dS_g per boundary node
// (corners carry the half-weights of both adjacent edges).
Eigen::VectorXd boundary_weights(const GridDomain& grid, const MetricField& g);

// Trapezoid quadrature of a boundary scalar against dS_g.
double integrate_boundary(const GridDomain& grid, const MetricField& g, const Eigen::VectorXd& f);

// Composite trapezoid of <a_b, W_b flux_b> dS_g accumulated edge by edge.
// `flux` holds normal-derivative-type data, which is genuinely two-valued at
// corners: the stored corner row matches the corner's assigned horizontal
// edge, so the end contributions of the vertical edges replace it with a
// quadratic extrapolation of flux along that edge (the trace side `a` is
// continuous and uses stored rows everywhere).  `weight` maps a boundary id
// to a dim x dim matrix; pass {} for the identity pairing.
double pair_boundary_flux(const GridDomain& grid, const MetricField& g, const BoundaryData& a,
                          const std::function<Eigen::MatrixXd(int)>& weight,
                          const BoundaryData& flux);

// Boundary trace of an expression in (x, y), and a smooth bump supported on
// the interior of one edge: exp(1 - 1/(1 - s^2)) with s = (t - center)/width.
Eigen::VectorXd boundary_from_expr(const GridDomain& grid, const Expr& e);
Eigen::VectorXd boundary_bump(const GridDomain& grid, Edge edge, double center, double width);

}  // namespace hmlab
