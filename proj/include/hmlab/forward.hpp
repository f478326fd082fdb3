#pragma once

// Nonlinear forward problem: the harmonic-map system
//   Delta_g u^i + g^{ab} Gamma^i_{jk}(u) d_a u^j d_b u^k = 0
// with Dirichlet data q + f on the boundary of the square, solved by damped
// Newton with amplitude continuation.  Small-amplitude solves reuse the
// factorization of the linearization at the constant map as a preconditioner.

#include <memory>
#include <stdexcept>
#include <vector>

#include "hmlab/grid.hpp"

namespace hmlab {

struct SolveControls {
  double tolerance = 1e-10;        // max-norm of the interior residual
  int max_newton_iterations = 30;
  int continuation_steps = 4;      // amplitude ramp q + (m/M) f
  double precond_amplitude = 1e-2; // below this, defect-correction linear solves
  double range_guard = 0.9;        // admissible fraction of the target validity radius
};

struct NewtonReport {
  bool converged = false;
  int continuation_steps_used = 0;
  int total_iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;  // final continuation stage
};

struct SolverError : std::runtime_error {
  SolverError(const std::string& what, NewtonReport r)
      : std::runtime_error(what), report(std::move(r)) {}
  NewtonReport report;
};

struct ForwardProblem {
  std::shared_ptr<const GridDomain> grid;
  std::shared_ptr<const MetricField> g;
  std::shared_ptr<const TargetMetric> h;
  std::shared_ptr<const LaplaceBeltramiOp> op;  // scalar operator for this (grid, g)
  Eigen::VectorXd q;        // base point in the target
  double ball_radius = 0.0; // admissible boundary-data radius r
  BoundaryData boundary;    // offset f from q, so the trace is q + f

  int target_dim() const { return static_cast<int>(q.size()); }
};

// Builds the shared geometry once and checks the admissibility invariants
// (positive definite h on B_r(q), boundary data inside the ball).
ForwardProblem make_problem(std::shared_ptr<const GridDomain> grid, MetricField g,
                            std::shared_ptr<const TargetMetric> h, Eigen::VectorXd q,
                            double ball_radius, BoundaryData f);

// Replaces the boundary offset, reusing the assembled geometry.
ForwardProblem with_boundary(const ForwardProblem& base, BoundaryData f);

// Interior residual of the harmonic-map system at state u (boundary rows 0).
VectorField residual(const ForwardProblem& p, const VectorField& u);

// Directional derivative of the residual at u in direction w (w = 0 on the
// boundary): Delta_g w^i + g^{ab} [ d_l Gamma^i_{jk}(u) w^l d_a u^j d_b u^k
// + 2 Gamma^i_{jk}(u) d_a w^j d_b u^k ].
VectorField jacobian_apply(const ForwardProblem& p, const VectorField& u, const VectorField& w);

struct SolveResult {
  VectorField u;
  NewtonReport report;
};

// Newton with amplitude continuation; throws SolverError on failure.
SolveResult solve(const ForwardProblem& p, const SolveControls& controls = {});

// Dirichlet energy 1/2 int g^{ab} h_{ij}(u) d_a u^i d_b u^j dV_g of a state.
double dirichlet_energy(const ForwardProblem& p, const VectorField& u);

// Componentwise harmonic extension of boundary data (the first linearization
// building block, also used for Newton warm starts).
VectorField harmonic_extension(const ForwardProblem& p, const BoundaryData& f);

}  // namespace hmlab
