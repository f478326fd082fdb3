#pragma once

// Domain and target metric machinery: expression-backed metric fields, exact
// derivative jets of the target metric, Christoffel symbols with derivative
// jets computed through truncated Taylor-series arithmetic, and the
// metric-compatibility recursion that rebuilds metric derivatives from a
// Christoffel jet.

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmlab/expr.hpp"
#include "hmlab/multiindex.hpp"

namespace hmlab {

// ---------------------------------------------------------------------------
// Small dense tensors
// ---------------------------------------------------------------------------

// Rank-3 tensor T^i_{jk} over n target coordinates, symmetric in (j,k) for
// Christoffel data.
struct Tensor3 {
  int n = 0;
  std::vector<double> v;

  Tensor3() = default;
  explicit Tensor3(int dim) : n(dim), v(static_cast<std::size_t>(dim) * dim * dim, 0.0) {}

  double& operator()(int i, int j, int k) { return v[(static_cast<std::size_t>(i) * n + j) * n + k]; }
  double operator()(int i, int j, int k) const { return v[(static_cast<std::size_t>(i) * n + j) * n + k]; }

  double max_abs() const;
};

// Derivative jet of the Christoffel symbols at a point: partial derivatives
// indexed by multi-index id of an attached MultiIndexSet.
struct GammaJet {
  int n = 0;
  int order = 0;
  MultiIndexSet indices;            // multi-indices with |A| <= order
  std::vector<Tensor3> derivative;  // one tensor per multi-index id

  const Tensor3& at(const MultiIndex& a) const { return derivative[indices.id(a)]; }
  Tensor3& at(const MultiIndex& a) { return derivative[indices.id(a)]; }
};

// Derivative jet of the target metric at a point.
struct MetricJet {
  int n = 0;
  int order = 0;
  MultiIndexSet indices;
  std::vector<Eigen::MatrixXd> derivative;

  const Eigen::MatrixXd& at(const MultiIndex& a) const { return derivative[indices.id(a)]; }
};

// ---------------------------------------------------------------------------
// Domain metric g on [0,1]^2
// ---------------------------------------------------------------------------

class MetricField {
 public:
  MetricField() = default;
  // entries in (x, y); g12 = g21
  MetricField(Expr g11, Expr g12, Expr g22, std::string provenance);

  Eigen::Matrix2d eval(double x, double y) const;
  Eigen::Matrix2d inverse(double x, double y) const;
  double det(double x, double y) const;
  double sqrt_det(double x, double y) const;

  const std::string& provenance() const { return provenance_; }
  const Expr& entry(int a, int b) const;

 private:
  Expr g11_, g12_, g22_;
  ExprProgram p11_, p12_, p22_;
  std::string provenance_;
};

MetricField domain_euclidean();
MetricField domain_constant(double g11, double g12, double g22);
// entries parsed over variables {x, y}
MetricField domain_from_expressions(const std::string& g11, const std::string& g12,
                                    const std::string& g22);

// A conformal rescaling c(x,y) * g with c = 1 on the boundary of the square,
// used to probe the two-dimensional conformal invariance of boundary data.
class ConformalTestCase {
 public:
  ConformalTestCase(MetricField base, Expr factor);
  // c = 1 + amplitude * 16 x(1-x) y(1-y) on the flat square
  static ConformalTestCase bump(MetricField base, double amplitude);

  const MetricField& base() const { return base_; }
  const MetricField& scaled() const { return scaled_; }
  double factor(double x, double y) const { return factor_prog_.eval(std::vector<double>{x, y}); }

  // max |c - 1| over boundary samples
  double boundary_unity_defect(int samples = 257) const;

 private:
  MetricField base_;
  MetricField scaled_;
  Expr factor_;
  ExprProgram factor_prog_;
};

// ---------------------------------------------------------------------------
// Target metric h on a ball in R^n, n in {2, 3}
// ---------------------------------------------------------------------------

class TargetMetric {
 public:
  // Entries are expressions over variables {y1, ..., yn}; derivative tapes up
  // to max_jet_order are compiled at construction, so instances are immutable
  // and safe to share across threads afterwards.
  TargetMetric(int n, std::vector<std::vector<Expr>> entries, double validity_radius,
               int max_jet_order, std::string provenance);

  int dim() const { return n_; }
  int max_jet_order() const { return max_jet_order_; }
  double validity_radius() const { return radius_; }
  const std::string& provenance() const { return provenance_; }

  Eigen::MatrixXd eval(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd inverse(const Eigen::VectorXd& y) const;

  // d_A h_{ij}(y) for |A| <= max_jet_order
  double entry_derivative(int i, int j, const MultiIndex& a, const Eigen::VectorXd& y) const;

  // Christoffel symbols of h at y: 1/2 h^{il} (d_j h_{lk} + d_k h_{lj} - d_l h_{jk}).
  Tensor3 christoffel(const Eigen::VectorXd& y) const;

  // First derivatives d_m Gamma^i_{jk}(y), direct formula (fast path used by
  // Jacobian assembly).  out[m] = tensor of derivatives along y^m.
  std::vector<Tensor3> christoffel_first_derivative(const Eigen::VectorXd& y) const;

  // Full derivative jet d_A Gamma^i_{jk}(y) for |A| <= order, computed with
  // truncated Taylor-series arithmetic (series inverse of h, then series
  // products).  Requires order + 1 <= max_jet_order.
  GammaJet christoffel_jet(const Eigen::VectorXd& y, int order) const;

 private:
  int entry_slot(int i, int j) const;  // symmetric storage
  int n_ = 0;
  int max_jet_order_ = 0;
  double radius_ = 0.0;
  std::string provenance_;
  std::vector<Expr> entries_;  // upper triangle, row-major
  MultiIndexSet tape_indices_;
  std::vector<std::vector<ExprProgram>> tapes_;  // [entry slot][multi-index id]
};

TargetMetric target_euclidean(int n);
// h = exp(2 phi) * identity, phi an expression over {y1..yn}
TargetMetric target_conformal(int n, const std::string& phi, double validity_radius = 1e30,
                              int max_jet_order = 6);
// h = identity + amplitude * P with P a symmetric expression matrix
TargetMetric target_polynomial_perturbation(int n, double amplitude,
                                            const std::vector<std::vector<std::string>>& entries,
                                            double validity_radius, int max_jet_order = 6);
TargetMetric target_from_expressions(int n, const std::vector<std::vector<std::string>>& entries,
                                     double validity_radius, int max_jet_order = 6);

// Variable names {y1..yn} used by target metric expressions.
std::vector<std::string> target_variable_names(int n);

// Smallest eigenvalue of h over a sample of the closed ball B_r(q); positive
// return value certifies positive definiteness on the sample.
double min_eigenvalue_on_ball(const TargetMetric& h, const Eigen::VectorXd& q, double r,
                              int radial_samples = 4, int angular_samples = 26);

// ---------------------------------------------------------------------------
// Metric jet from a Christoffel jet
// ---------------------------------------------------------------------------

// Rebuilds derivatives of h at a point from h(q) and the Christoffel jet via
// the metric-compatibility identity d_l h_{ij} = h_{rj} Gamma^r_{il} +
// h_{is} Gamma^s_{lj}, iterated order by order.  A jet of order K yields
// metric derivatives through order K + 1.  Results are symmetric in (i, j);
// symmetry in the differentiation multi-index is structural (storage is by
// multi-index).
MetricJet metric_jet_from_christoffel_jet(const Eigen::MatrixXd& h_at_q, const GammaJet& jet);

// Same recursion run on absolute values: propagates per-entry error bounds
// of the Christoffel jet (and optional h(q) error) to the metric jet.
MetricJet metric_jet_error_from_christoffel_jet(const Eigen::MatrixXd& h_at_q,
                                                const GammaJet& jet, const GammaJet& jet_error);

}  // namespace hmlab
