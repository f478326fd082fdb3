#include "hmlab/reconstruct.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

#include "hmlab/linearize.hpp"
#include "json.hpp"

namespace hmlab {

namespace {

// Sup-norm stencil estimates integrate to bounds via the boundary measure.
double boundary_measure(const GridDomain& grid, const MetricField& g) {
  return integrate_boundary(grid, g, Eigen::VectorXd::Ones(grid.num_boundary()));
}

// Componentwise boundary integral of a measured flux, Simpson edge weights
// with corner re-extrapolation (pairing against constant basis probes).
Eigen::VectorXd integrate_flux_components(const GridDomain& grid, const MetricField& g,
                                          const BoundaryData& flux) {
  const int n = flux.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd m(n);
  for (int i = 0; i < n; ++i) {
    BoundaryData e(grid.num_boundary(), n);
    e.values.col(i).setOnes();
    m[i] = pair_boundary_flux_simpson(grid, g, e, id, flux);
  }
  return m;
}

struct Denominator {
  double value = 0.0;
  double estimate = 0.0;
};

Denominator denominator_impl(const DnOracle& oracle, const Eigen::VectorXd& a_values,
                             const std::string& a_name, int j0, const ReconstructOptions& opt) {
  const ForwardProblem& p = oracle.problem();
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  if (j0 < 0 || j0 >= n) throw std::invalid_argument("probe_denominator: component out of range");
  BoundaryData dir(grid.num_boundary(), n);
  dir.values.col(j0) = opt.amplitude * a_values;
  DnDerivativeResult d = dn_mixed_derivative(oracle, {dir}, opt.delta);
  BoundaryData flux = tangential_defect_correction(grid, d.value);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Denominator out;
  out.value = pair_boundary_flux_simpson(grid, *p.g, dir, id, flux);
  out.estimate =
      d.error_estimate * integrate_boundary(grid, *p.g, dir.values.col(j0).cwiseAbs().eval());
  if (!(out.value > opt.degenerate_threshold)) {
    std::ostringstream msg;
    msg << "probe_denominator: degenerate probe '" << a_name << "' (D = " << out.value << ")";
    throw std::runtime_error(msg.str());
  }
  return out;
}

// One slot C * a in component j.
BoundaryData probe_slot(const GridDomain& grid, int n, const Eigen::VectorXd& a, int j, double c) {
  BoundaryData f(grid.num_boundary(), n);
  f.values.col(j) = c * a;
  return f;
}

// One constant slot C e_l.
BoundaryData constant_slot(const GridDomain& grid, int n, int l, double c) {
  BoundaryData f(grid.num_boundary(), n);
  f.values.col(l).setConstant(c);
  return f;
}

Eigen::FullPivLU<Eigen::MatrixXd> checked_lu(const Eigen::MatrixXd& h_q, const char* who) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(h_q);
  if (!lu.isInvertible())
    throw std::invalid_argument(std::string(who) + ": h(q) is not invertible");
  return lu;
}

GammaJet zero_jet(int n, int order) {
  GammaJet j;
  j.n = n;
  j.order = order;
  j.indices = MultiIndexSet(n, order);
  j.derivative.assign(static_cast<std::size_t>(j.indices.size()), Tensor3(n));
  return j;
}

// Copies entries of `base` into a (possibly larger) jet of the given order.
GammaJet extend_jet(const GammaJet& base, int n, int order) {
  GammaJet out = zero_jet(n, order);
  for (int id = 0; id < base.indices.size(); ++id) {
    const MultiIndex& a = base.indices.at(id);
    if (a.order() <= order) out.at(a) = base.derivative[id];
  }
  return out;
}

// Restriction of fine-grid boundary values to the every-other-node coarse
// grid; a pure boundary operation.
Eigen::VectorXd restrict_boundary_values(const GridDomain& fine, const GridDomain& coarse,
                                         const Eigen::VectorXd& v) {
  const int nc = coarse.n_cells();
  Eigen::VectorXd out(coarse.num_boundary());
  auto take = [&](int i, int j) {
    out[coarse.boundary_id(coarse.node(i, j))] = v[fine.boundary_id(fine.node(2 * i, 2 * j))];
  };
  for (int i = 0; i <= nc; ++i) {
    take(i, 0);
    take(i, nc);
  }
  for (int j = 1; j < nc; ++j) {
    take(0, j);
    take(nc, j);
  }
  return out;
}

// One recovery pass of the order-K slice on the oracle's own grid.
// For K >= 1 every lower-order interaction vanishes structurally because
// fields driven by constant slots are constant; for K == 2 the guard term
// is evaluated anyway from the jet recovered so far and subtracted.
void recover_core(const DnOracle& oracle, const Eigen::FullPivLU<Eigen::MatrixXd>& hlu,
                  const Eigen::MatrixXd& h_q, const Eigen::VectorXd& a_values,
                  const std::string& a_name, int K, const GammaJet* known,
                  const ReconstructOptions& opt, GammaJet& jet, GammaJet& est,
                  std::vector<std::string>* warnings) {
  const ForwardProblem& p = oracle.problem();
  const GridDomain& grid = *p.grid;
  const int n = p.target_dim();
  const Denominator den = denominator_impl(oracle, a_values, a_name, 0, opt);
  const double measure = boundary_measure(grid, *p.g);
  const double c = opt.amplitude;
  const double divisor = 2.0 * std::pow(c, K) * den.value;

  const MultiIndexSet top(n, K);
  for (int id : top.ids_of_order(K)) {
    const MultiIndex idx = top.at(id);
    std::vector<BoundaryData> constants;
    for (int axis = 0; axis < n; ++axis)
      for (int r = 0; r < idx[axis]; ++r) constants.push_back(constant_slot(grid, n, axis, c));
    Tensor3& slice = jet.at(idx);
    Tensor3& err_slice = est.at(idx);
    for (int j0 = 0; j0 < n; ++j0)
      for (int k0 = j0; k0 < n; ++k0) {
        std::vector<BoundaryData> dirs = constants;
        dirs.push_back(probe_slot(grid, n, a_values, j0, c));
        dirs.push_back(probe_slot(grid, n, a_values, k0, c));
        DnDerivativeResult d = dn_mixed_derivative(oracle, dirs, opt.delta);
        BoundaryData flux = tangential_defect_correction(grid, d.value);
        Eigen::VectorXd m = integrate_flux_components(grid, *p.g, flux);
        if (K >= 2 && known) {
          // Known terms: every interaction contribution of the identity
          // except the top singleton-partition term (more than K - 1
          // blocks are dropped, which keeps exactly the lower terms).
          LinearizationStack st(p.grid, p.op, p.g, *known, dirs);
          VectorField f_known = st.interaction(st.full_mask(), K - 1);
          Eigen::VectorXd kv(n);
          for (int i = 0; i < n; ++i) {
            ScalarField comp;
            comp.v = f_known.comp[i];
            kv[i] = integrate_volume(grid, *p.g, comp);
          }
          if (kv.norm() > 10.0 * (m + kv).norm())
            throw std::runtime_error(
                "recover_higher: noise floor, subtracted known terms dominate the signal");
          m += kv;
        }
        const Eigen::VectorXd gam = hlu.solve(h_q * m) / (-divisor);
        const double est_m = d.error_estimate * measure;
        const double scale = gam.cwiseAbs().maxCoeff();
        double err_max = 0.0;
        for (int i = 0; i < n; ++i) {
          const double err =
              est_m / divisor + std::abs(gam[i]) * (den.estimate / den.value);
          slice(i, j0, k0) = gam[i];
          slice(i, k0, j0) = gam[i];
          err_slice(i, j0, k0) = err;
          err_slice(i, k0, j0) = err;
          err_max = std::max(err_max, err);
        }
        if (warnings && K >= 1 && err_max > 0.25 * scale) {
          std::ostringstream w;
          w << "noise floor: order-" << K << " entry {" << j0 << k0
            << "} stencil estimate " << err_max << " exceeds 25% of the recovered value "
            << scale;
          warnings->push_back(w.str());
        }
      }
  }
}

// Fine pass plus a coarse-grid pass on the restricted boundary data.  The
// reported slice is the Richardson combination; the difference of the two
// passes bounds the spatial discretization error, which the stencil
// estimates alone cannot see.
void recover_order(const DnOracle& oracle, const Eigen::MatrixXd& h_q, const BoundaryProbe& a,
                   int K, const GammaJet* known, const ReconstructOptions& opt,
                   ChristoffelJet& out) {
  const ForwardProblem& p = oracle.problem();
  const int n = p.target_dim();
  auto hlu = checked_lu(h_q, "recover");
  const int calls0 = oracle.calls();
  recover_core(oracle, hlu, h_q, a.values, a.name, K, known, opt, out.jet, out.error,
               &out.warnings);
  out.oracle_calls += oracle.calls() - calls0;

  const int nc = p.grid->n_cells();
  if (!opt.two_grid_error || nc % 2 != 0 || nc < 24) return;
  auto coarse_grid = std::make_shared<GridDomain>(nc / 2);
  ForwardProblem cp = make_problem(coarse_grid, *p.g, p.h, p.q, p.ball_radius,
                                   BoundaryData(coarse_grid->num_boundary(), n));
  DnOracle coarse(cp, oracle.controls());
  const Eigen::VectorXd ca = restrict_boundary_values(*p.grid, *coarse_grid, a.values);
  GammaJet cjet = zero_jet(n, out.jet.order), cest = zero_jet(n, out.jet.order);
  recover_core(coarse, hlu, h_q, ca, a.name, K, known, opt, cjet, cest, nullptr);
  out.oracle_calls += coarse.calls();

  const MultiIndexSet top(n, K);
  for (int id : top.ids_of_order(K)) {
    const MultiIndex idx = top.at(id);
    Tensor3& v = out.jet.at(idx);
    Tensor3& e = out.error.at(idx);
    const Tensor3& cv = cjet.at(idx);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double gap = (v(i, j, k) - cv(i, j, k)) / 3.0;
          v(i, j, k) += gap;       // second-order Richardson combination
          e(i, j, k) += std::abs(gap);
        }
  }
}

std::string multiindex_digits(const MultiIndex& a) {
  std::string s;
  for (int axis = 0; axis < 3; ++axis)
    for (int r = 0; r < a[axis]; ++r) s += static_cast<char>('0' + axis);
  return s;
}

std::string gamma_entry_name(const MultiIndex& a, int i, int j, int k) {
  std::ostringstream s;
  if (a.order() > 0) s << "d_" << multiindex_digits(a) << " ";
  s << "Gamma^" << i << "_{" << j << k << "}";
  return s.str();
}

nlohmann::json tensor_to_json(const Tensor3& t) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < t.n; ++i) {
    nlohmann::json plane = nlohmann::json::array();
    for (int j = 0; j < t.n; ++j) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < t.n; ++k) row.push_back(t(i, j, k));
      plane.push_back(row);
    }
    out.push_back(plane);
  }
  return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

}  // namespace

BoundaryProbe probe_coordinate(const GridDomain& grid) {
  return {boundary_from_expr(grid, parse_expr("x", {"x", "y"})), "x"};
}

BoundaryProbe probe_saddle(const GridDomain& grid) {
  return {boundary_from_expr(grid, parse_expr("x*x - y*y", {"x", "y"})), "x^2-y^2"};
}

double probe_denominator(const DnOracle& oracle, const BoundaryProbe& a, int j0,
                         const ReconstructOptions& opt) {
  return denominator_impl(oracle, a.values, a.name, j0, opt).value;
}

ChristoffelJet recover_christoffel(const DnOracle& oracle, const Eigen::MatrixXd& h_q,
                                   const BoundaryProbe& a, const ReconstructOptions& opt) {
  const int n = oracle.problem().target_dim();
  if (h_q.rows() != n || h_q.cols() != n)
    throw std::invalid_argument("recover_christoffel: h(q) dimension mismatch");
  ChristoffelJet out;
  out.jet = zero_jet(n, 0);
  out.error = zero_jet(n, 0);
  out.probe = a.name;
  out.delta = opt.delta;
  out.amplitude = opt.amplitude;
  recover_order(oracle, h_q, a, 0, nullptr, opt, out);
  return out;
}

void recover_christoffel_derivative(const DnOracle& oracle, const Eigen::MatrixXd& h_q,
                                    const BoundaryProbe& a, ChristoffelJet& out,
                                    const ReconstructOptions& opt) {
  const int n = oracle.problem().target_dim();
  if (out.jet.n != n)
    throw std::invalid_argument("recover_christoffel_derivative: jet of order 0 required");
  if (out.jet.order < 1) {
    out.jet = extend_jet(out.jet, n, 1);
    out.error = extend_jet(out.error, n, 1);
  }
  recover_order(oracle, h_q, a, 1, nullptr, opt, out);
}

void recover_higher(const DnOracle& oracle, const Eigen::MatrixXd& h_q, const BoundaryProbe& a,
                    int order, ChristoffelJet& out, const ReconstructOptions& opt) {
  if (order != 2)
    throw std::invalid_argument("recover_higher: only order 2 is supported");
  const int n = oracle.problem().target_dim();
  if (out.jet.n != n || out.jet.order < order - 1)
    throw std::invalid_argument("recover_higher: jet through order K-1 required");
  if (out.jet.order < order) {
    out.jet = extend_jet(out.jet, n, order);
    out.error = extend_jet(out.error, n, order);
  }
  // Hierarchy of the jet known so far; its top-order entries are zero and
  // excluded from the known terms by the block-count cutoff anyway.
  const GammaJet known = extend_jet(out.jet, n, order);
  recover_order(oracle, h_q, a, order, &known, opt, out);
}

ReconstructionResult assemble_metric_jet(const Eigen::MatrixXd& h_q, const ChristoffelJet& jet) {
  ReconstructionResult r;
  r.christoffel = jet;
  r.metric = metric_jet_from_christoffel_jet(h_q, jet.jet);
  r.metric_error = metric_jet_error_from_christoffel_jet(h_q, jet.jet, jet.error);
  return r;
}

std::vector<ComparisonRow> compare_christoffel(const ChristoffelJet& recovered,
                                               const TargetMetric& h, const Eigen::VectorXd& q) {
  const int n = recovered.jet.n;
  const GammaJet truth = h.christoffel_jet(q, recovered.jet.order);
  std::vector<ComparisonRow> rows;
  for (int id = 0; id < recovered.jet.indices.size(); ++id) {
    const MultiIndex& a = recovered.jet.indices.at(id);
    const Tensor3& rec = recovered.jet.derivative[id];
    const Tensor3& err = recovered.error.derivative[id];
    const Tensor3& ref = truth.at(a);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = j; k < n; ++k) {
          ComparisonRow row;
          row.name = gamma_entry_name(a, i, j, k);
          row.recovered = rec(i, j, k);
          row.truth = ref(i, j, k);
          row.abs_error = std::abs(row.recovered - row.truth);
          row.estimate = err(i, j, k);
          rows.push_back(row);
        }
  }
  return rows;
}

std::vector<ComparisonRow> compare_metric_jet(const ReconstructionResult& result,
                                              const TargetMetric& h, const Eigen::VectorXd& q) {
  const int n = result.metric.n;
  std::vector<ComparisonRow> rows;
  for (int id = 0; id < result.metric.indices.size(); ++id) {
    const MultiIndex& a = result.metric.indices.at(id);
    if (a.order() == 0) continue;  // h(q) is an input, not a recovery
    const Eigen::MatrixXd& rec = result.metric.derivative[id];
    const Eigen::MatrixXd& err = result.metric_error.derivative[id];
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        ComparisonRow row;
        std::ostringstream name;
        name << "d_" << multiindex_digits(a) << " h_{" << i << j << "}";
        row.name = name.str();
        row.recovered = rec(i, j);
        row.truth = h.entry_derivative(i, j, a, q);
        row.abs_error = std::abs(row.recovered - row.truth);
        row.estimate = err(i, j);
        rows.push_back(row);
      }
  }
  return rows;
}

std::string reconstruction_to_json(const ReconstructionResult& result) {
  nlohmann::json j;
  j["schema"] = "reconstruction/1";
  j["probe"] = result.christoffel.probe;
  j["delta"] = result.christoffel.delta;
  j["amplitude"] = result.christoffel.amplitude;
  j["oracle_calls"] = result.christoffel.oracle_calls;
  j["order"] = result.christoffel.jet.order;
  j["runtime_seconds"] = result.runtime_seconds;
  j["warnings"] = result.christoffel.warnings;
  nlohmann::json gamma = nlohmann::json::array();
  for (int id = 0; id < result.christoffel.jet.indices.size(); ++id) {
    const MultiIndex& a = result.christoffel.jet.indices.at(id);
    nlohmann::json entry;
    entry["index"] = multiindex_digits(a);
    entry["tensor"] = tensor_to_json(result.christoffel.jet.derivative[id]);
    entry["error"] = tensor_to_json(result.christoffel.error.derivative[id]);
    gamma.push_back(entry);
  }
  j["gamma"] = gamma;
  nlohmann::json metric = nlohmann::json::array();
  for (int id = 0; id < result.metric.indices.size(); ++id) {
    const MultiIndex& a = result.metric.indices.at(id);
    nlohmann::json entry;
    entry["index"] = multiindex_digits(a);
    entry["matrix"] = matrix_to_json(result.metric.derivative[id]);
    entry["error"] = matrix_to_json(result.metric_error.derivative[id]);
    metric.push_back(entry);
  }
  j["metric"] = metric;
  return j.dump(2);
}

std::string comparison_to_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  out << "name,recovered,truth,abs_error,estimate\n";
  char buf[160];
  for (const ComparisonRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g,%.12g\n", r.name.c_str(), r.recovered,
                  r.truth, r.abs_error, r.estimate);
    out << buf;
  }
  return out.str();
}

}  // namespace hmlab
