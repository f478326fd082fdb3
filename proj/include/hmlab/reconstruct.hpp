#pragma once

// Recovery of the target connection jet at the base point from boundary
// measurements alone.  Probe denominators come from Green's identity on the
// measured first linearization; the Christoffel symbols come from second
// DN derivatives along scaled probe slots paired against constant probes;
// their first derivatives from third derivatives with one constant slot,
// where every lower-order interaction term vanishes structurally; second
// derivatives (experimental) from fourth derivatives with two constant
// slots plus known-term subtraction.  The metric jet is then assembled
// through the metric-compatibility recursion with propagated error bounds.
//
// Information model: these routines touch only DN oracle outputs, boundary
// quadrature with g restricted to the boundary, and h at the base point.
// The sole exception is the known-term subtraction of recover_higher, which
// solves auxiliary fields of the already-recovered jet on the known domain.

#include <string>
#include <vector>

#include "hmlab/dnmap.hpp"
#include "hmlab/identities.hpp"

namespace hmlab {

// Scalar boundary probe profile with provenance.  Probes must be
// non-constant; amplitude is carried separately by ReconstructOptions.
struct BoundaryProbe {
  Eigen::VectorXd values;  // one scalar per boundary node
  std::string name;
};

BoundaryProbe probe_coordinate(const GridDomain& grid);  // trace of x
BoundaryProbe probe_saddle(const GridDomain& grid);      // trace of x^2 - y^2

struct ReconstructOptions {
  double delta = 1e-3;                 // finite-difference step on the DN map
  double amplitude = 1.0;              // slot amplitude C (cancels analytically)
  double degenerate_threshold = 1e-8;  // minimal admissible probe denominator
  // Re-runs each recovery on the restricted half-resolution boundary grid:
  // the reported tensor becomes the Richardson combination of the two
  // passes, and their gap enters the error estimate, which the stencil
  // estimates alone cannot see.  Doubles the oracle-call count.
  bool two_grid_error = true;
};

// Dirichlet energy of the probe's harmonic extension, measured from the
// boundary alone: D = int_dM a (dLambda[a e_j0])^j0 dS_g, which equals
// int_M |dv|^2 dV_g by Green's identity.  The slot and the pairing both use
// amplitude * a, so D scales with amplitude^2 like the numerators it
// normalizes.  Throws std::runtime_error when D <= degenerate_threshold.
double probe_denominator(const DnOracle& oracle, const BoundaryProbe& a, int j0,
                         const ReconstructOptions& opt = {});

// Connection jet recovered from boundary data with per-entry error
// estimates (stencil Richardson estimates propagated through the linear
// solve, plus the denominator's own relative error).
struct ChristoffelJet {
  GammaJet jet;     // recovered d_A Gamma^i_{jk}(q), |A| <= order
  GammaJet error;   // same layout, absolute per-entry estimates
  int oracle_calls = 0;
  std::vector<std::string> warnings;
  std::string probe;
  double delta = 0.0;
  double amplitude = 0.0;
};

// Gamma^i_{jk}(q) from second derivatives of the DN map along slots
// C a e_j0, C a e_k0, paired against the h(q)-weighted constant probes:
//   h(q) m = -2 D h(q) Gamma_{j0 k0},  m^i = int_dM d^2 Lambda^i dS_g,
// solved per index pair j0 <= k0 and symmetrized.  h(q) must be invertible.
ChristoffelJet recover_christoffel(const DnOracle& oracle, const Eigen::MatrixXd& h_q,
                                   const BoundaryProbe& a, const ReconstructOptions& opt = {});

// Extends the jet by d_l Gamma^i_{jk}(q) from third derivatives along
// slots {C e_l (constant), a e_j0, a e_k0}: the constant slot's field has
// zero gradient, which kills every Gamma(q) term of the third-order source
// and the mixed second-order fields, leaving
//   h(q) m = -2 C D h(q) dGamma_l,  m^i = int_dM d^3 Lambda^i dS_g.
// Emits a noise-floor warning when the stencil estimate exceeds 25% of the
// recovered value.  The input jet must hold order 0.
void recover_christoffel_derivative(const DnOracle& oracle, const Eigen::MatrixXd& h_q,
                                    const BoundaryProbe& a, ChristoffelJet& out,
                                    const ReconstructOptions& opt = {});

// Experimental: d^K Gamma(q) for K == 2 from fourth derivatives along
// {C e_l0, C e_l1, a e_j0, a e_k0}.  Lower-order contributions are
// subtracted by running the linearization hierarchy on the jet recovered so
// far (known-term subtraction; the subtraction vanishes identically for
// this slot design because every field with a constant slot is constant or
// zero, but it is evaluated anyway and guarded).  Throws when the
// subtracted known terms exceed 10x the remaining signal.  The input jet
// must hold orders 0 .. K-1.
void recover_higher(const DnOracle& oracle, const Eigen::MatrixXd& h_q, const BoundaryProbe& a,
                    int order, ChristoffelJet& out, const ReconstructOptions& opt = {});

// Metric derivatives at q assembled from h(q) and the recovered jet via the
// metric-compatibility recursion, with error bounds propagated through the
// same recursion.  A jet of order K yields derivatives through order K + 1.
struct ReconstructionResult {
  ChristoffelJet christoffel;
  MetricJet metric;
  MetricJet metric_error;
  double runtime_seconds = 0.0;
};

ReconstructionResult assemble_metric_jet(const Eigen::MatrixXd& h_q, const ChristoffelJet& jet);

// Ground-truth comparison rows, one per independent tensor entry.
struct ComparisonRow {
  std::string name;        // e.g. "Gamma^0_{01}", "d_1 Gamma^0_{00}", "d_{01} h_{12}"
  double recovered = 0.0;
  double truth = 0.0;
  double abs_error = 0.0;  // |recovered - truth|
  double estimate = 0.0;   // propagated error estimate
};

std::vector<ComparisonRow> compare_christoffel(const ChristoffelJet& recovered,
                                               const TargetMetric& h, const Eigen::VectorXd& q);
std::vector<ComparisonRow> compare_metric_jet(const ReconstructionResult& result,
                                              const TargetMetric& h, const Eigen::VectorXd& q);

// Serialization: JSON object with full provenance ("schema":
// "reconstruction/1", probe, delta, amplitude, oracle calls, warnings,
// tensors); CSV comparison table with columns name,recovered,truth,
// abs_error,estimate.
std::string reconstruction_to_json(const ReconstructionResult& result);
std::string comparison_to_csv(const std::vector<ComparisonRow>& rows);

}  // namespace hmlab
