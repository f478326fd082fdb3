#pragma once

// Integral identities linking derivatives of the DN map (boundary side) to
// volume pairings of linearization fields against the connection jet at the
// base point, plus the Alessandrini-type difference identities that compare
// two targets sharing part of that jet.  Each verification produces one
// IdentityReport; the boundary and volume sides are computed by disjoint
// code paths (measured DN stencils vs. interaction-source quadrature), so a
// small residual is evidence, not tautology.

#include <string>
#include <vector>

#include "hmlab/dnmap.hpp"
#include "hmlab/linearize.hpp"

namespace hmlab {

// Relative residuals are |lhs - rhs| / max(|lhs|, |rhs|, floor); the floor
// keeps degenerate 0 = 0 instances from dividing by zero.
inline constexpr double kIdentityFloor = 1e-14;

struct IdentityReport {
  std::string id;                  // "second", "third", "nth:N", "alessandrini:K"
  double lhs = 0.0;                // boundary side (DN-derivative pairing)
  double rhs = 0.0;                // volume side (linearization-field pairing)
  double abs_residual = 0.0;       // |lhs - rhs|
  double rel_residual = 0.0;       // abs_residual / max(|lhs|, |rhs|, floor)
  int grid_n = 0;                  // cells per side
  double delta = 0.0;              // finest DN stencil step used
  double dn_error_estimate = 0.0;  // Richardson error estimate of the boundary side
  int oracle_calls = 0;            // forward solves spent on the boundary side
  double jet_gap = 0.0;            // alessandrini only: top-order connection mismatch
  std::vector<std::string> slots;  // slot labels, probe direction last
};

// Second-order identity.  slots = {mu, nu, theta}: the boundary side pairs the
// probe trace f_theta with the mixed second derivative of the DN map along
// (mu, nu) under the h(q)-weighted boundary measure,
//   lhs = int_dM f_theta^l h_{li}(q) d^2_{mu nu} Lambda^i dS,
// and the volume side pairs the probe extension with the second interaction
// source,
//   rhs = -2 int_M v_theta^l h_{li}(q) Gamma^i_{jk}(q) g^{ab} d_a v_mu^j d_b v_nu^k dV.
// The base problem's own boundary offset is ignored: the identity lives at
// the constant base map q.
IdentityReport verify_second_identity(const ForwardProblem& p,
                                      const std::vector<BoundaryData>& slots, double delta = 1e-3,
                                      const SolveControls& controls = {},
                                      std::vector<std::string> labels = {});

// Third-order identity.  slots = {mu, nu, theta, phi} with probe phi:
//   lhs = int_dM f_phi^m h_{mi}(q) d^3_{mu nu theta} Lambda^i dS,
//   rhs = -2 int_M v_phi^m h_{mi}(q) g^{ab} sum_cyc [ d_l Gamma^i_{jk}(q) v_mu^l
//             d_a v_nu^j d_b v_theta^k + Gamma^i_{jk}(q) d_a v_{mu nu}^j d_b v_theta^k ] dV,
// the cyclic sum running over the three cyclic permutations of (mu, nu,
// theta).  The volume side is assembled from this explicit formula rather
// than the general interaction source, so it doubles as a convention check
// against verify_nth_identity(3, ...).
IdentityReport verify_third_identity(const ForwardProblem& p,
                                     const std::vector<BoundaryData>& slots, double delta = 1e-3,
                                     const SolveControls& controls = {},
                                     std::vector<std::string> labels = {});

// Order-N identity, 2 <= N <= 4.  slots = N derivative directions followed by
// one probe slot (N + 1 total):
//   lhs = int_dM f_probe^m h_{mi}(q) d^N Lambda^i dS,
//   rhs = -int_M v_probe^m h_{mi}(q) F_N^i dV,
// with F_N the interaction source of the order-N linearized equation.  N = 2
// routes through the same computation as verify_second_identity.
IdentityReport verify_nth_identity(int order, const ForwardProblem& p,
                                   const std::vector<BoundaryData>& slots, double delta = 1e-3,
                                   const SolveControls& controls = {},
                                   std::vector<std::string> labels = {});

// Alessandrini-type difference identity of the given order K >= 1 between two
// problems that share the domain metric, base point, and connection jet of
// the target through order K - 2 (checked numerically; violation throws).
// slots = K + 1 derivative directions followed by one probe slot.  Boundary
// side: the probe paired with the difference of the order-(K+1) DN
// derivatives of the two problems.  Volume side: the probe extension paired
// with the difference of the order-(K+1) interaction sources, which isolates
// the order-(K-1) connection mismatch.  K = 1 compares Gamma(q) against
// second DN derivatives, K = 2 compares dGamma(q) against third derivatives.
IdentityReport verify_alessandrini(int order, const ForwardProblem& p, const ForwardProblem& p_hat,
                                   const std::vector<BoundaryData>& slots, double delta = 1e-3,
                                   const SolveControls& controls = {},
                                   std::vector<std::string> labels = {});

// Shared boundary-data functionals (also used by reconstruction).
//
// The one-sided conormal stencil carries a defect (h^2/3) d_s^3 v; splitting
// d_s^3 v through the field equation leaves a tangential part d_t^2 of the
// measured flux itself, removed here by discrete second differences along
// each edge (corner rows untouched).
BoundaryData tangential_defect_correction(const GridDomain& grid, const BoundaryData& flux);

// Boundary pairing int_dM probe^l hq_{li} flux^i dS_g with composite Simpson
// edge weights (falls back to the trapezoid pairing for odd n); corner values
// of vertical-edge integrands are re-extrapolated from interior rows.
double pair_boundary_flux_simpson(const GridDomain& grid, const MetricField& g,
                                  const BoundaryData& probe, const Eigen::MatrixXd& hq,
                                  const BoundaryData& flux);

// Serialization.  CSV columns (one row per report, header included):
//   id,grid_n,delta,lhs,rhs,abs_residual,rel_residual,dn_error_estimate,
//   oracle_calls,jet_gap,slots
// with slot labels joined by ';'.  JSON is an array of objects under the same
// keys plus "schema": "identity-report/1".
std::string reports_to_csv(const std::vector<IdentityReport>& reports);
std::string reports_to_json(const std::vector<IdentityReport>& reports);

}  // namespace hmlab
