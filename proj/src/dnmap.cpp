#include "hmlab/dnmap.hpp"

#include <cmath>
#include <stdexcept>

namespace hmlab {

BoundaryData dn_evaluate(const ForwardProblem& p, const BoundaryData& f,
                         const SolveControls& controls) {
  VectorField u = solve(with_boundary(p, f), controls).u;
  return normal_derivative(*p.grid, *p.g, u);
}

DnOracle::DnOracle(ForwardProblem base, SolveControls controls)
    : base_(std::move(base)), controls_(controls) {}

BoundaryData DnOracle::operator()(const BoundaryData& f) const {
  ++calls_;
  return dn_evaluate(base_, f, controls_);
}

namespace {

// One centered 2^N-point stencil of the DN map at the given step.
Eigen::MatrixXd dn_stencil(const DnOracle& oracle, const std::vector<BoundaryData>& slots,
                           double step) {
  const ForwardProblem& p = oracle.problem();
  const int nslots = static_cast<int>(slots.size());
  const int n = p.target_dim();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p.grid->num_boundary(), n);
  for (std::uint32_t signs = 0; signs < (1u << nslots); ++signs) {
    double coef = 1.0;
    BoundaryData f(p.grid->num_boundary(), n);
    for (int mu = 0; mu < nslots; ++mu) {
      double s = ((signs >> mu) & 1u) ? 1.0 : -1.0;
      coef *= s;
      f.values += (s * step) * slots[mu].values;
    }
    acc += coef * oracle(f).values;
  }
  return acc / std::pow(2.0 * step, nslots);
}

}  // namespace

DnDerivativeResult dn_mixed_derivative(const DnOracle& oracle,
                                       const std::vector<BoundaryData>& slots, double delta,
                                       bool refine, int adapt_steps) {
  if (slots.empty()) throw std::invalid_argument("dn_mixed_derivative: no probe slots");
  if (!(delta > 0.0)) throw std::invalid_argument("dn_mixed_derivative: step must be positive");
  const int per_stencil = 1 << slots.size();

  DnDerivativeResult out;
  if (!refine) {
    out.value = BoundaryData();
    out.value.values = dn_stencil(oracle, slots, delta);
    out.delta = delta;
    out.evaluations = per_stencil;
    return out;
  }

  // ladder of stencils at delta / 2^k; consecutive differences should shrink
  // by ~4 once the quadratic error term dominates
  std::vector<Eigen::MatrixXd> ladder;
  std::vector<double> steps;
  auto push = [&](double s) {
    ladder.push_back(dn_stencil(oracle, slots, s));
    steps.push_back(s);
  };
  push(delta);
  push(delta / 2);

  for (int extra = 0; extra < adapt_steps; ++extra) {
    const auto& a = ladder[ladder.size() - 2];
    const auto& b = ladder[ladder.size() - 1];
    if (ladder.size() >= 3) {
      const auto& a0 = ladder[ladder.size() - 3];
      double d0 = (a - a0).cwiseAbs().maxCoeff();
      double d1 = (b - a).cwiseAbs().maxCoeff();
      double ratio = d1 > 0 ? d0 / d1 : 4.0;
      if (ratio >= 3.5 && ratio <= 4.5) break;  // quadratic regime reached
    }
    push(steps.back() / 2);
  }

  const Eigen::MatrixXd& coarse = ladder[ladder.size() - 2];
  const Eigen::MatrixXd& fine = ladder[ladder.size() - 1];
  out.value.values = (4.0 * fine - coarse) / 3.0;
  out.error_estimate = (coarse - fine).cwiseAbs().maxCoeff() / 3.0;
  out.delta = steps.back();
  out.evaluations = per_stencil * static_cast<int>(ladder.size());
  return out;
}

double energy_evaluate(const ForwardProblem& p, const BoundaryData& f,
                       const SolveControls& controls) {
  ForwardProblem pf = with_boundary(p, f);
  return dirichlet_energy(pf, solve(pf, controls).u);
}

EnergyOracle::EnergyOracle(ForwardProblem base, SolveControls controls)
    : base_(std::move(base)), controls_(controls) {}

double EnergyOracle::operator()(const BoundaryData& f) const {
  ++calls_;
  return energy_evaluate(base_, f, controls_);
}

double energy_variation_pairing(const ForwardProblem& p, const BoundaryData& f,
                                const BoundaryData& phi, const SolveControls& controls) {
  BoundaryData lambda = dn_evaluate(p, f, controls);
  const int n = p.target_dim();
  auto h_at_trace = [&](int b) {
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = p.q[i] + f.values(b, i);
    return p.h->eval(y);
  };
  return pair_boundary_flux(*p.grid, *p.g, phi, h_at_trace, lambda);
}

VariationPair energy_first_variation(const ForwardProblem& p, const BoundaryData& f,
                                     const BoundaryData& phi, double t,
                                     const SolveControls& controls) {
  EnergyOracle energy(p, controls);
  return {energy_variation_pairing(p, f, phi, controls),
          energy_variation_difference(energy, f, phi, t)};
}

double energy_variation_difference(const EnergyOracle& energy, const BoundaryData& f,
                                   const BoundaryData& phi, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("energy_variation_difference: step must be positive");
  BoundaryData fp = f, fm = f;
  fp.values += t * phi.values;
  fm.values -= t * phi.values;
  return (energy(fp) - energy(fm)) / (2.0 * t);
}

BoundaryData dn_from_energy(const ForwardProblem& p, const BoundaryData& f, VariationRoute route,
                            double t, const SolveControls& controls) {
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  const int nb = grid.num_boundary();
  Eigen::VectorXd w = boundary_weights(grid, *p.g);

  // variations against per-node indicator directions
  Eigen::MatrixXd var(nb, n);
  if (route == VariationRoute::BoundaryPairing) {
    BoundaryData lambda = dn_evaluate(p, f, controls);
    Eigen::VectorXd y(n);
    for (int b = 0; b < nb; ++b) {
      for (int i = 0; i < n; ++i) y[i] = p.q[i] + f.values(b, i);
      Eigen::MatrixXd hb = p.h->eval(y);
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += hb(i, j) * lambda.values(b, j);
        var(b, i) = w[b] * acc;
      }
    }
  } else {
    EnergyOracle energy(p, controls);
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < n; ++i) {
        BoundaryData phi(nb, n);
        phi.values(b, i) = 1.0;
        var(b, i) = energy_variation_difference(energy, f, phi, t);
      }
  }

  // unweight and invert h at the known boundary trace
  BoundaryData out(nb, n);
  Eigen::VectorXd y(n), rhs(n);
  for (int b = 0; b < nb; ++b) {
    for (int i = 0; i < n; ++i) y[i] = p.q[i] + f.values(b, i);
    Eigen::MatrixXd hb = p.h->eval(y);
    for (int i = 0; i < n; ++i) rhs[i] = var(b, i) / w[b];
    Eigen::VectorXd lam = hb.ldlt().solve(rhs);
    for (int j = 0; j < n; ++j) out.values(b, j) = lam[j];
  }

  // An energy probe at a corner node perturbs both adjacent edges at once, so
  // its variation blends the two edge fluxes; the honest route therefore
  // rebuilds corner rows from the interior of the corner's assigned edge.
  if (route == VariationRoute::CenteredDifference && grid.n_cells() >= 4) {
    const int nc = grid.n_cells();
    for (int ci : {0, nc})
      for (int cj : {0, nc}) {
        int bid = grid.boundary_id(grid.node(ci, cj));
        int di = (ci == 0) ? 1 : -1;
        auto row = [&](int k) { return out.values.row(grid.boundary_id(grid.node(ci + di * k, cj))); };
        out.values.row(bid) = 3.0 * row(1) - 3.0 * row(2) + row(3);
      }
  }
  return out;
}

}  // namespace hmlab
