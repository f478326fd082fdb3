#pragma once

// Multilinear derivatives of the solution map at the constant base state:
// for probe boundary data f_1..f_N and the solution u(e) with trace
// q + sum_mu e_mu f_mu, the fields v_T = d^{|T|} u / prod_{mu in T} d e_mu
// at e = 0 solve a triangular hierarchy of Poisson problems
//   Delta_g v_T + F_T = 0,    v_T|_boundary = f_mu if T = {mu}, else 0,
// whose interaction source F_T couples the connection jet of the target at q
// with products of lower-order fields.  Only the connection jet enters, so
// the same hierarchy runs on recovered jets during reconstruction.

#include <climits>
#include <cstdint>
#include <vector>

#include "hmlab/forward.hpp"

namespace hmlab {

// Per component, the two spatial partials.
using FieldGradients = std::vector<std::array<ScalarField, 2>>;

class LinearizationStack {
 public:
  // Hierarchy driven by an explicit connection jet at the base point.  The
  // jet order must cover the sources (|slots| - 2) and any deeper
  // connection_derivative queries made later.
  LinearizationStack(std::shared_ptr<const GridDomain> grid,
                     std::shared_ptr<const LaplaceBeltramiOp> op,
                     std::shared_ptr<const MetricField> g, GammaJet jet,
                     std::vector<BoundaryData> slots);

  // Convenience: jet evaluated from the problem's target metric at its base
  // point (order defaults to what the sources need).
  LinearizationStack(const ForwardProblem& p, std::vector<BoundaryData> slots,
                     int jet_order = -1);

  int num_slots() const { return static_cast<int>(slots_.size()); }
  int target_dim() const { return jet_.n; }
  std::uint32_t full_mask() const { return (1u << slots_.size()) - 1u; }
  const GammaJet& jet() const { return jet_; }
  const GridDomain& grid() const { return *grid_; }
  const MetricField& domain_metric() const { return *g_; }
  const BoundaryData& slot(int mu) const { return slots_[mu]; }

  // v_T for a nonempty subset mask of slots.
  const VectorField& field(std::uint32_t mask) const;
  const FieldGradients& gradients(std::uint32_t mask) const;

  // Outward conormal derivative of v_T on the boundary: the boundary
  // signature of this derivative order.
  BoundaryData conormal(std::uint32_t mask) const;

  // Derivative of the connection coefficients along the probe parameters in
  // `mask`, evaluated at a node: the sum over set partitions of `mask` of
  // connection jets contracted with lower-order fields.  Partitions with more
  // than max_depth blocks are dropped (used when the deepest jet entry is the
  // unknown being solved for).  mask == 0 gives the connection at the base
  // point itself.
  Tensor3 connection_derivative(std::uint32_t mask, int node, int max_depth = INT_MAX) const;

  // Interaction source F_T of the order-|T| equation (zero on singletons):
  //   F_T^i = sum_{S + P + Q = T, P,Q nonempty}
  //           connection_derivative(S)^i_jk g^{ab} d_a v_P^j d_b v_Q^k.
  // max_depth is forwarded to connection_derivative.
  VectorField interaction(std::uint32_t mask, int max_depth = INT_MAX) const;

 private:
  void build();

  std::shared_ptr<const GridDomain> grid_;
  std::shared_ptr<const LaplaceBeltramiOp> op_;
  std::shared_ptr<const MetricField> g_;
  GammaJet jet_;
  std::vector<BoundaryData> slots_;
  std::vector<VectorField> fields_;      // indexed by mask; [0] unused
  std::vector<FieldGradients> grads_;    // indexed by mask; [0] unused
};

}  // namespace hmlab
