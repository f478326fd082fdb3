#include "hmlab/identities.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hmlab {

namespace {

std::vector<std::string> resolve_labels(std::vector<std::string> labels, int count) {
  if (labels.empty()) {
    for (int i = 0; i + 1 < count; ++i) labels.push_back("e" + std::to_string(i));
    labels.push_back("probe");
  }
  if (static_cast<int>(labels.size()) != count)
    throw std::invalid_argument("identity labels: need one label per slot");
  return labels;
}

// Harmonic extension of a probe trace, component by component.
VectorField extend_probe(const ForwardProblem& p, const BoundaryData& probe) {
  const int n = p.target_dim();
  VectorField out(n, p.grid->num_nodes());
  for (int c = 0; c < n; ++c) out.comp[c] = p.op->harmonic_extension(probe.values.col(c)).v;
  return out;
}

// Pointwise pairing v^l h_{li} w^i as a scalar field over all nodes.
ScalarField pairing_density(const GridDomain& grid, const Eigen::MatrixXd& hq,
                            const VectorField& v, const VectorField& w) {
  const int n = static_cast<int>(hq.rows());
  ScalarField s;
  s.v = Eigen::VectorXd::Zero(grid.num_nodes());
  for (int id = 0; id < grid.num_nodes(); ++id) {
    double acc = 0.0;
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i) acc += v.comp[l][id] * hq(l, i) * w.comp[i][id];
    s.v[id] = acc;
  }
  return s;
}

struct BoundarySide {
  double value = 0.0;
  double delta = 0.0;
  double error_estimate = 0.0;
  int evaluations = 0;
};

// Composite Simpson quadrature over the tensor grid; the volume integrands
// here are smooth fields sampled at every node, so the sharper rule costs
// nothing and keeps the volume side from polluting the residual.  Odd cell
// counts fall back to the trapezoid rule.
double integrate_volume_simpson(const GridDomain& grid, const MetricField& g,
                                const ScalarField& f) {
  const int n = grid.n_cells();
  if (n % 2 != 0) return integrate_volume(grid, g, f);
  const double h = grid.spacing();
  auto w1 = [n](int k) { return (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0); };
  double sum = 0.0;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      sum += w1(i) * w1(j) * f.v[grid.node(i, j)] * g.sqrt_det(grid.x_of(i), grid.y_of(j));
  return sum * h * h / 9.0;
}

}  // namespace

// Tangential defect correction of a measured flux, edge by edge.  The leading
// error of the one-sided conormal stencil, (h^2/3) d_s^3 v, splits through
// the field equation into a tangential part, +(h^2/3) d_t^2(flux),
// recoverable from the measured rows alone, and a source part that stays at
// O(h^2) with a smaller constant.  Subtracting one third of the discrete
// tangential second difference cancels the recoverable part without touching
// any volume information, keeping the boundary side a pure boundary-data
// functional.
BoundaryData tangential_defect_correction(const GridDomain& grid, const BoundaryData& flux) {
  BoundaryData out = flux;
  const int n = grid.n_cells();
  if (n < 4) return out;
  // Corner rows stay untouched: there the one-sided stencil samples only the
  // adjacent zero edge, so it is already exact.  Horizontal edges own their
  // corner rows; vertical edges do not (those rows hold the horizontal
  // conormal), so their end differences replace the corner sample by cubic
  // extrapolation from the edge interior, matching the boundary pairing.
  auto correct_edge = [&](auto node_of, bool owns_corners) {
    auto row = [&](int k) -> Eigen::RowVectorXd {
      if (owns_corners || (k > 0 && k < n))
        return flux.values.row(grid.boundary_id(node_of(k)));
      const int base = (k == 0) ? 1 : n - 1, d = (k == 0) ? 1 : -1;
      auto r = [&](int m) { return flux.values.row(grid.boundary_id(node_of(base + d * m))); };
      return 3.0 * r(0) - 3.0 * r(1) + r(2);
    };
    for (int k = 1; k < n; ++k)
      out.values.row(grid.boundary_id(node_of(k))) -=
          (row(k - 1) - 2.0 * row(k) + row(k + 1)) / 3.0;
  };
  correct_edge([&](int k) { return grid.node(k, 0); }, true);
  correct_edge([&](int k) { return grid.node(k, n); }, true);
  correct_edge([&](int k) { return grid.node(0, k); }, false);
  correct_edge([&](int k) { return grid.node(n, k); }, false);
  return out;
}

namespace {

// Tangential derivative of per-row boundary values along their edge.
// Traces hold plain values at corners, so central differences work up to the
// edge ends; flux rows at corners store the horizontal conormal only, so
// derivatives of fluxes fall back to one-sided stencils next to corners.
// Corner rows of the result stay zero.
BoundaryData edge_tangential_derivative(const GridDomain& grid, const BoundaryData& a, int order,
                                        bool flux_rows) {
  const int nc = grid.n_cells(), n = a.dim();
  const double h = grid.spacing();
  BoundaryData out(grid.num_boundary(), n);
  auto fill_edge = [&](auto node_of) {
    auto row = [&](int k) { return a.values.row(grid.boundary_id(node_of(k))); };
    for (int k = 1; k < nc; ++k) {
      Eigen::RowVectorXd d(n);
      if (order == 2) {
        d = (row(k - 1) - 2.0 * row(k) + row(k + 1)) / (h * h);
      } else if (flux_rows && k == 1) {
        d = (-3.0 * row(1) + 4.0 * row(2) - row(3)) / (2.0 * h);
      } else if (flux_rows && k == nc - 1) {
        d = (3.0 * row(nc - 1) - 4.0 * row(nc - 2) + row(nc - 3)) / (2.0 * h);
      } else {
        d = (row(k + 1) - row(k - 1)) / (2.0 * h);
      }
      out.values.row(grid.boundary_id(node_of(k))) = d;
    }
  };
  fill_edge([&](int k) { return grid.node(k, 0); });
  fill_edge([&](int k) { return grid.node(k, nc); });
  fill_edge([&](int k) { return grid.node(0, k); });
  fill_edge([&](int k) { return grid.node(nc, k); });
  return out;
}

// Wall jets of the measured field hierarchy, one BoundaryData per nonempty
// proper submask of the direction set: value V and tangential derivatives T,
// TT vanish for masks of two or more slots (zero trace); the inward normal
// derivative S is minus the measured conormal flux; TS is its tangential
// derivative; and the second normal derivative SS reduces through the field
// equations to minus the wall value of that mask's own interaction source,
// built recursively from the same data.  Everything is a pure boundary-data
// functional; the reduction is exact for a Euclidean domain metric.
struct WallHierarchy {
  std::map<std::uint32_t, BoundaryData> V, T, S, TT, TS, SS;
};

std::vector<int> bits_of(std::uint32_t mask) {
  std::vector<int> out;
  for (int b = 0; mask; ++b, mask >>= 1)
    if (mask & 1u) out.push_back(b);
  return out;
}

// Jet factor of one interaction term restricted to the wall.  Blocks of two
// or more slots have zero trace, so only all-singleton partitions of s
// survive in the value; the normal derivative replaces exactly one block
// (of any size) by its S-jet.  `derived` selects between the two.
Tensor3 wall_jet_factor(const GammaJet& jet, const WallHierarchy& w, std::uint32_t s, int row,
                        bool derived) {
  const int n = jet.n;
  Tensor3 out(n);
  const std::vector<int> elems = bits_of(s);
  const int p = static_cast<int>(elems.size());
  if (p == 0) {
    if (!derived) out = jet.derivative[0];
    return out;
  }
  auto value = [&](int elem, int m) { return w.V.at(1u << elem).values(row, m); };
  if (!derived) {
    // sum over direction assignments of the singleton blocks
    std::vector<int> seq(p, 0);
    for (;;) {
      double wt = 1.0;
      MultiIndex a;
      for (int t = 0; t < p; ++t) {
        wt *= value(elems[t], seq[t]);
        a[seq[t]] += 1;
      }
      const Tensor3& dg = jet.at(a);
      for (std::size_t t = 0; t < out.v.size(); ++t) out.v[t] += wt * dg.v[t];
      int t = 0;
      while (t < p && ++seq[t] == n) {
        seq[t] = 0;
        ++t;
      }
      if (t == p) break;
    }
    return out;
  }
  // derived: one block C of s carries the normal derivative, the rest stay
  // singleton values
  for (std::uint32_t c : submasks(s, false, true)) {
    const std::vector<int> rest = bits_of(s & ~c);
    const int pr = static_cast<int>(rest.size());
    std::vector<int> seq(pr + 1, 0);  // seq[0] runs over C's component
    for (;;) {
      double wt = w.S.at(c).values(row, seq[0]);
      MultiIndex a;
      a[seq[0]] += 1;
      for (int t = 0; t < pr; ++t) {
        wt *= value(rest[t], seq[t + 1]);
        a[seq[t + 1]] += 1;
      }
      const Tensor3& dg = jet.at(a);
      for (std::size_t t = 0; t < out.v.size(); ++t) out.v[t] += wt * dg.v[t];
      int t = 0;
      while (t <= pr && ++seq[t] == n) {
        seq[t] = 0;
        ++t;
      }
      if (t == pr + 1) break;
    }
  }
  return out;
}

// Wall value (derived == false) or wall normal derivative (derived == true)
// of the interaction source for `mask`, mirroring the volumetric assembly
// term by term.
BoundaryData wall_source(const GridDomain& grid, const GammaJet& jet, const WallHierarchy& w,
                         std::uint32_t mask, bool derived) {
  const int n = jet.n, nc = grid.n_cells();
  auto corner = [&](int b) {
    int node = grid.boundary_node(b), i = grid.node_i(node), j = grid.node_j(node);
    return (i == 0 || i == nc) && (j == 0 || j == nc);
  };
  BoundaryData out(grid.num_boundary(), n);
  for (std::uint32_t s : submasks(mask, true, false)) {
    const std::uint32_t r = mask & ~s;
    if (std::popcount(r) < 2) continue;
    const auto pairs = submasks(r, false, false);
    for (int b = 0; b < grid.num_boundary(); ++b) {
      if (corner(b)) continue;
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
      Eigen::MatrixXd dsm = Eigen::MatrixXd::Zero(n, n);
      for (std::uint32_t pm : pairs) {
        const std::uint32_t qm = r & ~pm;
        const auto tp = w.T.at(pm).values.row(b), tq = w.T.at(qm).values.row(b);
        const auto sp = w.S.at(pm).values.row(b), sq = w.S.at(qm).values.row(b);
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            m(j, k) += tp[j] * tq[k] + sp[j] * sq[k];
            if (derived)
              dsm(j, k) += w.TS.at(pm).values(b, j) * tq[k] + tp[j] * w.TS.at(qm).values(b, k) +
                           w.SS.at(pm).values(b, j) * sq[k] + sp[j] * w.SS.at(qm).values(b, k);
          }
      }
      Tensor3 dg = wall_jet_factor(jet, w, s, b, false);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) acc += dg(i, j, k) * (derived ? dsm(j, k) : m(j, k));
        out.values(b, i) += acc;
      }
      if (derived) {
        Tensor3 dgs = wall_jet_factor(jet, w, s, b, true);
        for (int i = 0; i < n; ++i) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) acc += dgs(i, j, k) * m(j, k);
          out.values(b, i) += acc;
        }
      }
    }
  }
  return out;
}

// Assembles the wall hierarchy from the direction traces and the measured
// conormal fluxes of every nonempty proper submask.
WallHierarchy build_wall_hierarchy(const GridDomain& grid, const GammaJet& jet,
                                   const std::vector<BoundaryData>& dirs,
                                   const std::map<std::uint32_t, BoundaryData>& flux) {
  const int nb = grid.num_boundary(), n = jet.n;
  WallHierarchy w;
  std::vector<std::uint32_t> masks = submasks((1u << dirs.size()) - 1, false, false);
  std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    return std::popcount(a) < std::popcount(b);
  });
  for (std::uint32_t mask : masks) {
    const BoundaryData& lam = flux.at(mask);
    w.S[mask] = BoundaryData(nb, n);
    w.S[mask].values = -lam.values;
    w.TS[mask] = edge_tangential_derivative(grid, lam, 1, true);
    w.TS[mask].values *= -1.0;
    if (std::popcount(mask) == 1) {
      const BoundaryData& f = dirs[std::countr_zero(mask)];
      w.V[mask] = f;
      w.T[mask] = edge_tangential_derivative(grid, f, 1, false);
      w.TT[mask] = edge_tangential_derivative(grid, f, 2, false);
      // first-order fields are harmonic: d_s^2 = -d_t^2 on the wall
      w.SS[mask] = w.TT[mask];
      w.SS[mask].values *= -1.0;
    } else {
      w.V[mask] = BoundaryData(nb, n);
      w.T[mask] = BoundaryData(nb, n);
      w.TT[mask] = BoundaryData(nb, n);
      BoundaryData src = wall_source(grid, jet, w, mask, false);
      w.SS[mask] = BoundaryData(nb, n);
      w.SS[mask].values = -src.values;
    }
  }
  return w;
}

bool euclidean_on_boundary(const GridDomain& grid, const MetricField& g) {
  for (int b = 0; b < grid.num_boundary(); ++b) {
    int node = grid.boundary_node(b);
    Eigen::Matrix2d gb = g.eval(grid.x_of(grid.node_i(node)), grid.y_of(grid.node_j(node)));
    if ((gb - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() > 1e-14) return false;
  }
  return true;
}

}  // namespace

// Edge-wise Simpson pairing of a trace against a flux under a constant
// metric weight.  Same contract as the trapezoid pairing used by the energy
// routes, but with fourth-order edge quadrature; fluxes of DN derivatives of
// order >= 2 vanish at corners, so each edge integrand is smooth end to end.
// Falls back to the trapezoid pairing when the cell count is odd.
double pair_boundary_flux_simpson(const GridDomain& grid, const MetricField& g,
                                  const BoundaryData& a, const Eigen::MatrixXd& hq,
                                  const BoundaryData& flux) {
  const int n = grid.n_cells();
  if (n % 2 != 0 || n < 4)
    return pair_boundary_flux(grid, g, a, [hq](int) { return hq; }, flux);
  const double h = grid.spacing();
  auto w1 = [n](int k) { return (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0); };
  auto flux_row = [&](Edge edge, int i, int j) -> Eigen::RowVectorXd {
    int bid = grid.boundary_id(grid.node(i, j));
    if (grid.boundary_edge(bid) == edge) return flux.values.row(bid);
    int dj = (j == 0) ? 1 : -1;
    auto row = [&](int k) { return flux.values.row(grid.boundary_id(grid.node(i, j + dj * k))); };
    return 3.0 * row(1) - 3.0 * row(2) + row(3);
  };
  auto term = [&](int bid, const Eigen::RowVectorXd& fx) -> double {
    return (a.values.row(bid) * hq).dot(fx);
  };
  double total = 0.0;
  for (int j : {0, n}) {
    Edge e = (j == 0) ? Edge::Bottom : Edge::Top;
    for (int i = 0; i <= n; ++i) {
      double ds = w1(i) * (h / 3.0) * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(0, 0));
      total += ds * term(grid.boundary_id(grid.node(i, j)), flux_row(e, i, j));
    }
  }
  for (int i : {0, n}) {
    Edge e = (i == 0) ? Edge::Left : Edge::Right;
    for (int j = 0; j <= n; ++j) {
      double ds = w1(j) * (h / 3.0) * std::sqrt(g.eval(grid.x_of(i), grid.y_of(j))(1, 1));
      total += ds * term(grid.boundary_id(grid.node(i, j)), flux_row(e, i, j));
    }
  }
  return total;
}

namespace {

// Probe trace paired against the measured mixed DN derivative along the
// direction slots, under the h(q)-weighted boundary measure.
BoundarySide boundary_side(const ForwardProblem& p, const std::vector<BoundaryData>& directions,
                           const BoundaryData& probe, double delta,
                           const SolveControls& controls) {
  DnOracle oracle(p, controls);
  DnDerivativeResult d = dn_mixed_derivative(oracle, directions, delta);
  const Eigen::MatrixXd hq = p.h->eval(p.q);
  BoundaryData flux = tangential_defect_correction(*p.grid, d.value);
  BoundarySide out;
  out.delta = d.delta;
  out.error_estimate = d.error_estimate;
  out.evaluations = d.evaluations;
  // Measurements of order two to four over a Euclidean wall also admit the
  // source part of the stencil defect, reconstructed from the fluxes of all
  // proper submasks of the direction set.
  const double h = p.grid->spacing();
  const int order = static_cast<int>(directions.size());
  if (order >= 2 && order <= 4 && euclidean_on_boundary(*p.grid, *p.g)) {
    std::map<std::uint32_t, BoundaryData> flux_sub;
    for (std::uint32_t mask : submasks((1u << order) - 1, false, false)) {
      std::vector<BoundaryData> sub;
      for (int a : bits_of(mask)) sub.push_back(directions[a]);
      DnDerivativeResult lm = dn_mixed_derivative(oracle, sub, delta);
      out.error_estimate += (h * h / 3.0) * lm.error_estimate;
      out.evaluations += lm.evaluations;
      flux_sub.emplace(mask, std::move(lm.value));
    }
    const GammaJet jet = p.h->christoffel_jet(p.q, order - 2);
    WallHierarchy w = build_wall_hierarchy(*p.grid, jet, directions, flux_sub);
    BoundaryData ds_source = wall_source(*p.grid, jet, w, (1u << order) - 1, true);
    flux.values += (h * h / 3.0) * ds_source.values;
  }
  out.value = pair_boundary_flux_simpson(*p.grid, *p.g, probe, hq, flux);
  return out;
}

IdentityReport finish(std::string id, double lhs, double rhs, const ForwardProblem& p,
                      const BoundarySide& bs, std::vector<std::string> labels) {
  IdentityReport r;
  r.id = std::move(id);
  r.lhs = lhs;
  r.rhs = rhs;
  r.abs_residual = std::abs(lhs - rhs);
  r.rel_residual = r.abs_residual / std::max({std::abs(lhs), std::abs(rhs), kIdentityFloor});
  r.grid_n = p.grid->n_cells();
  r.delta = bs.delta;
  r.dn_error_estimate = bs.error_estimate;
  r.oracle_calls = bs.evaluations;
  r.slots = std::move(labels);
  return r;
}

}  // namespace

IdentityReport verify_nth_identity(int order, const ForwardProblem& p,
                                   const std::vector<BoundaryData>& slots, double delta,
                                   const SolveControls& controls,
                                   std::vector<std::string> labels) {
  if (order < 2 || order > 4)
    throw std::invalid_argument("verify_nth_identity: order must be in {2, 3, 4}");
  if (static_cast<int>(slots.size()) != order + 1)
    throw std::invalid_argument("verify_nth_identity: need order derivative slots plus one probe");
  labels = resolve_labels(std::move(labels), order + 1);

  std::vector<BoundaryData> directions(slots.begin(), slots.end() - 1);
  const BoundaryData& probe = slots.back();

  BoundarySide bs = boundary_side(p, directions, probe, delta, controls);

  LinearizationStack st(p, directions);
  VectorField source = st.interaction(st.full_mask());
  VectorField vp = extend_probe(p, probe);
  const double rhs =
      -integrate_volume_simpson(*p.grid, *p.g, pairing_density(*p.grid, p.h->eval(p.q), vp, source));

  return finish("nth:" + std::to_string(order), bs.value, rhs, p, bs, std::move(labels));
}

IdentityReport verify_second_identity(const ForwardProblem& p,
                                      const std::vector<BoundaryData>& slots, double delta,
                                      const SolveControls& controls,
                                      std::vector<std::string> labels) {
  if (slots.size() != 3)
    throw std::invalid_argument("verify_second_identity: need slots {mu, nu, probe}");
  IdentityReport r = verify_nth_identity(2, p, slots, delta, controls, std::move(labels));
  r.id = "second";
  return r;
}

IdentityReport verify_third_identity(const ForwardProblem& p,
                                     const std::vector<BoundaryData>& slots, double delta,
                                     const SolveControls& controls,
                                     std::vector<std::string> labels) {
  if (slots.size() != 4)
    throw std::invalid_argument("verify_third_identity: need slots {mu, nu, theta, probe}");
  labels = resolve_labels(std::move(labels), 4);

  std::vector<BoundaryData> directions(slots.begin(), slots.end() - 1);
  const BoundaryData& probe = slots.back();

  BoundarySide bs = boundary_side(p, directions, probe, delta, controls);

  LinearizationStack st(p, directions, 1);
  const GammaJet& jet = st.jet();
  const int n = jet.n;
  const Tensor3& gamma = jet.derivative[0];
  std::vector<const Tensor3*> dgamma(n);
  for (int l = 0; l < n; ++l) dgamma[l] = &jet.at(MultiIndex::unit(l));

  const GridDomain& grid = *p.grid;
  VectorField vp = extend_probe(p, probe);
  const Eigen::MatrixXd hq = p.h->eval(p.q);

  // g^{ab} d_a A^j d_b B^k at a node
  auto grad_pair = [](const FieldGradients& a, int j, const FieldGradients& b, int k,
                      const Eigen::Matrix2d& gi, int id) {
    const double a0 = a[j][0].v[id], a1 = a[j][1].v[id];
    const double b0 = b[k][0].v[id], b1 = b[k][1].v[id];
    return a0 * (gi(0, 0) * b0 + gi(0, 1) * b1) + a1 * (gi(1, 0) * b0 + gi(1, 1) * b1);
  };

  constexpr int cyc[3][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
  ScalarField dens;
  dens.v = Eigen::VectorXd::Zero(grid.num_nodes());
  for (int id = 0; id < grid.num_nodes(); ++id) {
    const Eigen::Matrix2d gi = p.op->inverse_metric_at(grid.node_i(id), grid.node_j(id));
    double acc = 0.0;
    for (const auto& perm : cyc) {
      const std::uint32_t ma = 1u << perm[0], mb = 1u << perm[1], mc = 1u << perm[2];
      const VectorField& va = st.field(ma);
      const FieldGradients& gb = st.gradients(mb);
      const FieldGradients& gc = st.gradients(mc);
      const FieldGradients& gab = st.gradients(ma | mb);
      for (int i = 0; i < n; ++i) {
        double term = 0.0;
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) {
            const double pair_bc = grad_pair(gb, j, gc, k, gi, id);
            for (int l = 0; l < n; ++l)
              term += (*dgamma[l])(i, j, k) * va.comp[l][id] * pair_bc;
            term += gamma(i, j, k) * grad_pair(gab, j, gc, k, gi, id);
          }
        for (int m = 0; m < n; ++m) acc += vp.comp[m][id] * hq(m, i) * term;
      }
    }
    dens.v[id] = acc;
  }
  const double rhs = -2.0 * integrate_volume_simpson(grid, *p.g, dens);

  return finish("third", bs.value, rhs, p, bs, std::move(labels));
}

IdentityReport verify_alessandrini(int order, const ForwardProblem& p, const ForwardProblem& p_hat,
                                   const std::vector<BoundaryData>& slots, double delta,
                                   const SolveControls& controls,
                                   std::vector<std::string> labels) {
  if (order < 1 || order > 3)
    throw std::invalid_argument("verify_alessandrini: order must be in {1, 2, 3}");
  const int nslots = order + 2;  // order + 1 derivative directions plus one probe
  if (static_cast<int>(slots.size()) != nslots)
    throw std::invalid_argument("verify_alessandrini: need order + 1 direction slots plus probe");
  labels = resolve_labels(std::move(labels), nslots);

  if (p.grid != p_hat.grid && p.grid->n_cells() != p_hat.grid->n_cells())
    throw std::invalid_argument("verify_alessandrini: problems must share the grid");
  if (p.target_dim() != p_hat.target_dim() || (p.q - p_hat.q).norm() > 1e-14)
    throw std::invalid_argument("verify_alessandrini: problems must share the base point");

  // shared part of the jet: h(q) itself and the connection through order - 2
  const Eigen::MatrixXd hq = p.h->eval(p.q);
  if ((hq - p_hat.h->eval(p_hat.q)).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("verify_alessandrini: targets must agree at the base point");
  const GammaJet jet = p.h->christoffel_jet(p.q, order - 1);
  const GammaJet jet_hat = p_hat.h->christoffel_jet(p_hat.q, order - 1);
  double shared_gap = 0.0, top_gap = 0.0;
  for (int id = 0; id < jet.indices.size(); ++id) {
    double gap = 0.0;
    for (std::size_t t = 0; t < jet.derivative[id].v.size(); ++t)
      gap = std::max(gap, std::abs(jet.derivative[id].v[t] - jet_hat.derivative[id].v[t]));
    if (jet.indices.at(id).order() < order - 1)
      shared_gap = std::max(shared_gap, gap);
    else
      top_gap = std::max(top_gap, gap);
  }
  if (shared_gap > 1e-10)
    throw std::invalid_argument(
        "verify_alessandrini: connection jets must agree below the probed order");

  std::vector<BoundaryData> directions(slots.begin(), slots.end() - 1);
  const BoundaryData& probe = slots.back();

  BoundarySide bs = boundary_side(p, directions, probe, delta, controls);
  BoundarySide bs_hat = boundary_side(p_hat, directions, probe, delta, controls);
  const double lhs = bs.value - bs_hat.value;

  LinearizationStack st(p, directions);
  LinearizationStack st_hat(p_hat, directions);
  VectorField diff = st.interaction(st.full_mask());
  const VectorField src_hat = st_hat.interaction(st_hat.full_mask());
  for (int c = 0; c < p.target_dim(); ++c) diff.comp[c] -= src_hat.comp[c];
  VectorField vp = extend_probe(p, probe);
  const double rhs = -integrate_volume_simpson(*p.grid, *p.g, pairing_density(*p.grid, hq, vp, diff));

  BoundarySide combined = bs;
  combined.delta = std::max(bs.delta, bs_hat.delta);
  combined.error_estimate = bs.error_estimate + bs_hat.error_estimate;
  combined.evaluations = bs.evaluations + bs_hat.evaluations;
  IdentityReport r =
      finish("alessandrini:" + std::to_string(order), lhs, rhs, p, combined, std::move(labels));
  r.jet_gap = top_gap;
  return r;
}

std::string reports_to_csv(const std::vector<IdentityReport>& reports) {
  std::ostringstream os;
  os.precision(17);
  os << "id,grid_n,delta,lhs,rhs,abs_residual,rel_residual,dn_error_estimate,"
        "oracle_calls,jet_gap,slots\n";
  for (const IdentityReport& r : reports) {
    os << r.id << ',' << r.grid_n << ',' << r.delta << ',' << r.lhs << ',' << r.rhs << ','
       << r.abs_residual << ',' << r.rel_residual << ',' << r.dn_error_estimate << ','
       << r.oracle_calls << ',' << r.jet_gap << ',';
    for (std::size_t i = 0; i < r.slots.size(); ++i) os << (i ? ";" : "") << r.slots[i];
    os << '\n';
  }
  return os.str();
}

std::string reports_to_json(const std::vector<IdentityReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const IdentityReport& r : reports) {
    nlohmann::json o;
    o["schema"] = "identity-report/1";
    o["id"] = r.id;
    o["grid_n"] = r.grid_n;
    o["delta"] = r.delta;
    o["lhs"] = r.lhs;
    o["rhs"] = r.rhs;
    o["abs_residual"] = r.abs_residual;
    o["rel_residual"] = r.rel_residual;
    o["dn_error_estimate"] = r.dn_error_estimate;
    o["oracle_calls"] = r.oracle_calls;
    o["jet_gap"] = r.jet_gap;
    o["slots"] = r.slots;
    arr.push_back(o);
  }
  return arr.dump(2);
}

}  // namespace hmlab
