#include "hmlab/linearize.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <stdexcept>

namespace hmlab {

namespace {

std::vector<int> bits_of(std::uint32_t mask) {
  std::vector<int> out;
  for (int b = 0; mask; ++b, mask >>= 1)
    if (mask & 1u) out.push_back(b);
  return out;
}

}  // namespace

LinearizationStack::LinearizationStack(std::shared_ptr<const GridDomain> grid,
                                       std::shared_ptr<const LaplaceBeltramiOp> op,
                                       std::shared_ptr<const MetricField> g, GammaJet jet,
                                       std::vector<BoundaryData> slots)
    : grid_(std::move(grid)),
      op_(std::move(op)),
      g_(std::move(g)),
      jet_(std::move(jet)),
      slots_(std::move(slots)) {
  build();
}

LinearizationStack::LinearizationStack(const ForwardProblem& p, std::vector<BoundaryData> slots,
                                       int jet_order)
    : grid_(p.grid),
      op_(p.op),
      g_(p.g),
      // member order puts jet_ before slots_, so `slots` is still intact here
      jet_(p.h->christoffel_jet(
          p.q, jet_order >= 0 ? jet_order : std::max(0, static_cast<int>(slots.size()) - 2))),
      slots_(std::move(slots)) {
  build();
}

void LinearizationStack::build() {
  const int N = num_slots();
  const int n = jet_.n;
  if (N < 1 || N > 12) throw std::invalid_argument("LinearizationStack: need 1..12 probe slots");
  for (const auto& f : slots_)
    if (f.values.rows() != grid_->num_boundary() || f.values.cols() != n ||
        !f.values.allFinite())
      throw std::invalid_argument("LinearizationStack: slot shape mismatch");

  const std::uint32_t full = full_mask();
  fields_.assign(full + 1, VectorField());
  grads_.assign(full + 1, FieldGradients());

  std::vector<std::uint32_t> masks(full);
  std::iota(masks.begin(), masks.end(), 1u);
  std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    return std::popcount(a) < std::popcount(b);
  });

  const Eigen::VectorXd zero_bc = Eigen::VectorXd::Zero(grid_->num_boundary());
  for (std::uint32_t mask : masks) {
    VectorField v(n, grid_->num_nodes());
    if (std::popcount(mask) == 1) {
      int mu = std::countr_zero(mask);
      for (int c = 0; c < n; ++c)
        v.comp[c] = op_->harmonic_extension(slots_[mu].values.col(c)).v;
    } else {
      VectorField f = interaction(mask);
      Eigen::VectorXd rhs(grid_->num_interior());
      for (int c = 0; c < n; ++c) {
        for (int k = 0; k < grid_->num_interior(); ++k)
          rhs[k] = -f.comp[c][grid_->interior_node(k)];
        v.comp[c] = op_->solve_dirichlet(zero_bc, rhs).v;
      }
    }
    FieldGradients gr;
    gr.reserve(n);
    for (int c = 0; c < n; ++c) gr.push_back(gradient(*grid_, ScalarField(v.comp[c])));
    grads_[mask] = std::move(gr);
    fields_[mask] = std::move(v);
  }
}

const VectorField& LinearizationStack::field(std::uint32_t mask) const {
  if (mask == 0 || mask > full_mask())
    throw std::invalid_argument("LinearizationStack::field: mask out of range");
  return fields_[mask];
}

const FieldGradients& LinearizationStack::gradients(std::uint32_t mask) const {
  if (mask == 0 || mask > full_mask())
    throw std::invalid_argument("LinearizationStack::gradients: mask out of range");
  return grads_[mask];
}

BoundaryData LinearizationStack::conormal(std::uint32_t mask) const {
  return normal_derivative(*grid_, *g_, field(mask));
}

Tensor3 LinearizationStack::connection_derivative(std::uint32_t mask, int node,
                                                  int max_depth) const {
  const int n = jet_.n;
  if (mask == 0) {
    // zero blocks: the connection at the base point itself
    if (max_depth < 0) return Tensor3(n);
    return jet_.derivative[0];
  }

  const std::vector<int> elems = bits_of(mask);
  const int k = static_cast<int>(elems.size());
  Tensor3 out(n);
  for (const auto& part : set_partitions(k)) {
    const int p = static_cast<int>(part.size());
    if (p > max_depth) continue;
    if (p > jet_.order)
      throw std::invalid_argument("LinearizationStack: connection jet too shallow for query");

    // field values of each block at this node
    std::vector<double> blockv(static_cast<std::size_t>(p) * n);
    for (int b = 0; b < p; ++b) {
      std::uint32_t bm = 0;
      for (int e : part[b]) bm |= 1u << elems[e];
      const VectorField& vb = field(bm);
      for (int m = 0; m < n; ++m) blockv[static_cast<std::size_t>(b) * n + m] = vb.comp[m][node];
    }

    // contract the order-p jet with the block values: sum over direction
    // sequences (m_1..m_p), odometer enumeration
    std::vector<int> seq(p, 0);
    for (;;) {
      double w = 1.0;
      MultiIndex a;
      for (int b = 0; b < p; ++b) {
        w *= blockv[static_cast<std::size_t>(b) * n + seq[b]];
        a[seq[b]] += 1;
      }
      const Tensor3& dg = jet_.at(a);
      for (std::size_t t = 0; t < out.v.size(); ++t) out.v[t] += w * dg.v[t];
      int b = 0;
      while (b < p && ++seq[b] == n) {
        seq[b] = 0;
        ++b;
      }
      if (b == p) break;
    }
  }
  return out;
}

VectorField LinearizationStack::interaction(std::uint32_t mask, int max_depth) const {
  const int n = jet_.n;
  VectorField f(n, grid_->num_nodes());
  if (std::popcount(mask) < 2) return f;

  for (std::uint32_t s : submasks(mask, true, false)) {
    // at least two remaining slots must split between the two gradient factors
    const std::uint32_t r = mask & ~s;
    if (std::popcount(r) < 2) continue;
    const auto pairs = submasks(r, false, false);

    // all nodes, not just interior: volume pairings against the interaction
    // need its values on the boundary rows of the trapezoid rule as well
    for (int id = 0; id < grid_->num_nodes(); ++id) {
      const int gi_i = grid_->node_i(id), gi_j = grid_->node_j(id);
      const Eigen::Matrix2d gi = op_->inverse_metric_at(gi_i, gi_j);

      Tensor3 dg = connection_derivative(s, id, max_depth);

      // pair matrix M^{jk} = sum_{P+Q=R} g^{ab} d_a v_P^j d_b v_Q^k
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
      for (std::uint32_t pm : pairs) {
        const std::uint32_t qm = r & ~pm;
        const FieldGradients& gp = gradients(pm);
        const FieldGradients& gq = gradients(qm);
        for (int j = 0; j < n; ++j) {
          const double pj0 = gp[j][0].v[id], pj1 = gp[j][1].v[id];
          for (int k = 0; k < n; ++k) {
            const double qk0 = gq[k][0].v[id], qk1 = gq[k][1].v[id];
            m(j, k) += pj0 * (gi(0, 0) * qk0 + gi(0, 1) * qk1) +
                       pj1 * (gi(1, 0) * qk0 + gi(1, 1) * qk1);
          }
        }
      }

      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) acc += dg(i, j, k) * m(j, k);
        f.comp[i][id] += acc;
      }
    }
  }
  return f;
}

}  // namespace hmlab
