#pragma once

// Boundary measurements: the Dirichlet-to-Neumann map of the harmonic-map
// system, its mixed derivatives along probe directions (centered stencils
// with Richardson refinement), the boundary energy functional, and the
// recovery of DN data from energy variations alone.

#include <vector>

#include "hmlab/forward.hpp"

namespace hmlab {

// DN measurement of one solve: outward conormal derivative of the solution
// with trace q + f.
BoundaryData dn_evaluate(const ForwardProblem& p, const BoundaryData& f,
                         const SolveControls& controls = {});

// Forward-solve boundary oracle with a call counter.  Reconstruction sees
// boundary data only, and its probe budget is measured in oracle calls.
class DnOracle {
 public:
  explicit DnOracle(ForwardProblem base, SolveControls controls = {});

  BoundaryData operator()(const BoundaryData& f) const;

  int calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }
  const ForwardProblem& problem() const { return base_; }
  const SolveControls& controls() const { return controls_; }

 private:
  ForwardProblem base_;
  SolveControls controls_;
  mutable int calls_ = 0;
};

struct DnDerivativeResult {
  BoundaryData value;
  double error_estimate = 0.0;  // sup-norm error estimate from step halving
  double delta = 0.0;           // step of the finest stencil used
  int evaluations = 0;          // oracle calls spent by this derivative
};

// Mixed partial derivative of the DN map along the probe slots at the base
// point: the centered 2^N-point stencil at step delta.  With `refine` a
// second stencil at delta / 2 upgrades the value by one Richardson step and
// supplies the error estimate (the estimate bounds the plain delta/2 stencil,
// so it is conservative for the extrapolated value).  Up to `adapt_steps`
// extra halvings are spent while consecutive stencil differences fail to
// shrink by the expected factor of four.
DnDerivativeResult dn_mixed_derivative(const DnOracle& oracle,
                                       const std::vector<BoundaryData>& slots, double delta,
                                       bool refine = true, int adapt_steps = 0);

// Dirichlet energy of the solution with trace q + f.
double energy_evaluate(const ForwardProblem& p, const BoundaryData& f,
                       const SolveControls& controls = {});

// Energy oracle with a call counter (boundary-data in, one number out).
class EnergyOracle {
 public:
  explicit EnergyOracle(ForwardProblem base, SolveControls controls = {});

  double operator()(const BoundaryData& f) const;

  int calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }
  const ForwardProblem& problem() const { return base_; }

 private:
  ForwardProblem base_;
  SolveControls controls_;
  mutable int calls_ = 0;
};

// First variation of the energy at boundary data f in direction phi, computed
// by pairing the DN measurement against phi on the boundary:
//   dE(f)[phi] = int phi^i h_{ij}(q + f) dn(f)^j dS.
double energy_variation_pairing(const ForwardProblem& p, const BoundaryData& f,
                                const BoundaryData& phi, const SolveControls& controls = {});

// Same variation from a centered difference of the energy itself (two oracle
// calls); carries the O(t^2) step error and the discrete-integration defect.
double energy_variation_difference(const EnergyOracle& energy, const BoundaryData& f,
                                   const BoundaryData& phi, double t);

// Both routes to the same first variation: the boundary pairing and the
// centered t-difference of the energy (agree to O(t^2) + O(h^2)).
struct VariationPair {
  double pairing = 0.0;
  double centered_difference = 0.0;
};

VariationPair energy_first_variation(const ForwardProblem& p, const BoundaryData& f,
                                     const BoundaryData& phi, double t = 1e-3,
                                     const SolveControls& controls = {});

enum class VariationRoute { BoundaryPairing, CenteredDifference };

// Recovers the DN measurement of f from energy variations alone: test the
// first variation with per-node indicator directions, divide by the boundary
// quadrature weight, and invert h at the known boundary trace.  The pairing
// route checks that this inversion algebra is exact; the difference route
// replaces the variations by honest centered differences of the energy at
// step t (2 * num_boundary * dim oracle calls).  A corner probe perturbs both
// adjacent edges at once, so the difference route rebuilds corner rows by
// extrapolation along the corner's assigned edge.
BoundaryData dn_from_energy(const ForwardProblem& p, const BoundaryData& f,
                            VariationRoute route = VariationRoute::BoundaryPairing,
                            double t = 1e-4, const SolveControls& controls = {});

}  // namespace hmlab
