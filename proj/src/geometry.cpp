#include "hmlab/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace hmlab {

double Tensor3::max_abs() const {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------
// MetricField
// ---------------------------------------------------------------------------

MetricField::MetricField(Expr g11, Expr g12, Expr g22, std::string provenance)
    : g11_(g11), g12_(g12), g22_(g22),
      p11_(g11), p12_(g12), p22_(g22),
      provenance_(std::move(provenance)) {}

Eigen::Matrix2d MetricField::eval(double x, double y) const {
  const double vars[2] = {x, y};
  Eigen::Matrix2d g;
  g(0, 0) = p11_.eval(vars);
  g(0, 1) = g(1, 0) = p12_.eval(vars);
  g(1, 1) = p22_.eval(vars);
  return g;
}

Eigen::Matrix2d MetricField::inverse(double x, double y) const {
  Eigen::Matrix2d g = eval(x, y);
  double d = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  Eigen::Matrix2d inv;
  inv(0, 0) = g(1, 1) / d;
  inv(1, 1) = g(0, 0) / d;
  inv(0, 1) = inv(1, 0) = -g(0, 1) / d;
  return inv;
}

double MetricField::det(double x, double y) const {
  Eigen::Matrix2d g = eval(x, y);
  return g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
}

double MetricField::sqrt_det(double x, double y) const { return std::sqrt(det(x, y)); }

const Expr& MetricField::entry(int a, int b) const {
  if (a == 0 && b == 0) return g11_;
  if (a == 1 && b == 1) return g22_;
  return g12_;
}

static const std::vector<std::string> kDomainVars = {"x", "y"};

MetricField domain_euclidean() {
  return MetricField(Expr::constant(1.0), Expr::constant(0.0), Expr::constant(1.0), "euclidean");
}

MetricField domain_constant(double g11, double g12, double g22) {
  if (g11 <= 0.0 || g11 * g22 - g12 * g12 <= 0.0)
    throw std::invalid_argument("domain_constant: entries are not positive definite");
  return MetricField(Expr::constant(g11), Expr::constant(g12), Expr::constant(g22), "constant");
}

MetricField domain_from_expressions(const std::string& g11, const std::string& g12,
                                    const std::string& g22) {
  return MetricField(parse_expr(g11, kDomainVars), parse_expr(g12, kDomainVars),
                     parse_expr(g22, kDomainVars), "expression");
}

// ---------------------------------------------------------------------------
// ConformalTestCase
// ---------------------------------------------------------------------------

ConformalTestCase::ConformalTestCase(MetricField base, Expr factor)
    : base_(std::move(base)),
      scaled_(factor * base_.entry(0, 0), factor * base_.entry(0, 1), factor * base_.entry(1, 1),
              base_.provenance() + ":conformal-scaled"),
      factor_(factor),
      factor_prog_(factor) {}

ConformalTestCase ConformalTestCase::bump(MetricField base, double amplitude) {
  // c = 1 + a * 16 x (1-x) y (1-y): equals 1 on all four edges
  Expr x = Expr::variable(0), y = Expr::variable(1), one = Expr::constant(1.0);
  Expr c = one + Expr::constant(16.0 * amplitude) * x * (one - x) * y * (one - y);
  return ConformalTestCase(std::move(base), c);
}

double ConformalTestCase::boundary_unity_defect(int samples) const {
  double worst = 0.0;
  for (int i = 0; i < samples; ++i) {
    double t = static_cast<double>(i) / (samples - 1);
    for (auto [x, y] : {std::pair{t, 0.0}, {t, 1.0}, {0.0, t}, {1.0, t}})
      worst = std::max(worst, std::abs(factor(x, y) - 1.0));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// TargetMetric
// ---------------------------------------------------------------------------

std::vector<std::string> target_variable_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("y" + std::to_string(i));
  return names;
}

int TargetMetric::entry_slot(int i, int j) const {
  if (i > j) std::swap(i, j);
  // row-major upper triangle
  return i * n_ - i * (i + 1) / 2 + j;
}

TargetMetric::TargetMetric(int n, std::vector<std::vector<Expr>> entries, double validity_radius,
                           int max_jet_order, std::string provenance)
    : n_(n), max_jet_order_(max_jet_order), radius_(validity_radius),
      provenance_(std::move(provenance)), tape_indices_(n, max_jet_order) {
  if (n != 2 && n != 3) throw std::invalid_argument("TargetMetric: dim must be 2 or 3");
  entries_.resize(n * (n + 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) entries_[entry_slot(i, j)] = entries[i][j];

  // Differentiate every entry along the graded multi-index list (each index
  // extends an earlier one by one unit), compile everything to tapes once.
  tapes_.resize(entries_.size());
  for (std::size_t s = 0; s < entries_.size(); ++s) {
    std::vector<Expr> jets(tape_indices_.size());
    jets[0] = entries_[s];
    tapes_[s].resize(tape_indices_.size());
    tapes_[s][0] = ExprProgram(jets[0]);
    for (int id = 1; id < tape_indices_.size(); ++id) {
      MultiIndex a = tape_indices_.at(id);
      int axis = 0;
      while (a[axis] == 0) ++axis;
      MultiIndex parent = MultiIndexSet::sub(a, MultiIndex::unit(axis));
      jets[id] = jets[tape_indices_.id(parent)].derivative(axis);
      tapes_[s][id] = ExprProgram(jets[id]);
    }
  }
}

Eigen::MatrixXd TargetMetric::eval(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd h(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) h(i, j) = h(j, i) = tapes_[entry_slot(i, j)][0].eval(y.data());
  return h;
}

Eigen::MatrixXd TargetMetric::inverse(const Eigen::VectorXd& y) const {
  return eval(y).inverse();
}

double TargetMetric::entry_derivative(int i, int j, const MultiIndex& a,
                                      const Eigen::VectorXd& y) const {
  int id = tape_indices_.id(a);
  if (id < 0) throw std::out_of_range("entry_derivative: order exceeds max_jet_order");
  return tapes_[entry_slot(i, j)][id].eval(y.data());
}

Tensor3 TargetMetric::christoffel(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd h = eval(y);
  Eigen::MatrixXd b = h.inverse();
  // d1[l](i,j) = d_l h_{ij}
  std::vector<Eigen::MatrixXd> d1(n_, Eigen::MatrixXd(n_, n_));
  for (int l = 0; l < n_; ++l)
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j)
        d1[l](i, j) = d1[l](j, i) = tapes_[entry_slot(i, j)][tape_indices_.id(MultiIndex::unit(l))]
                                        .eval(y.data());
  Tensor3 g(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int k = j; k < n_; ++k) {
        double sum = 0.0;
        for (int l = 0; l < n_; ++l)
          sum += b(i, l) * (d1[j](l, k) + d1[k](l, j) - d1[l](j, k));
        g(i, j, k) = g(i, k, j) = 0.5 * sum;
      }
  return g;
}

std::vector<Tensor3> TargetMetric::christoffel_first_derivative(const Eigen::VectorXd& y) const {
  Eigen::MatrixXd h = eval(y);
  Eigen::MatrixXd b = h.inverse();
  std::vector<Eigen::MatrixXd> d1(n_, Eigen::MatrixXd(n_, n_));
  for (int l = 0; l < n_; ++l)
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j)
        d1[l](i, j) = d1[l](j, i) = tapes_[entry_slot(i, j)][tape_indices_.id(MultiIndex::unit(l))]
                                        .eval(y.data());
  // d2[m][l](i,j) = d_m d_l h_{ij}
  std::vector<std::vector<Eigen::MatrixXd>> d2(n_, std::vector<Eigen::MatrixXd>(n_));
  for (int m = 0; m < n_; ++m)
    for (int l = 0; l < n_; ++l) {
      MultiIndex a = MultiIndexSet::add(MultiIndex::unit(m), MultiIndex::unit(l));
      int id = tape_indices_.id(a);
      d2[m][l] = Eigen::MatrixXd(n_, n_);
      for (int i = 0; i < n_; ++i)
        for (int j = i; j < n_; ++j)
          d2[m][l](i, j) = d2[m][l](j, i) = tapes_[entry_slot(i, j)][id].eval(y.data());
    }

  std::vector<Tensor3> out(n_, Tensor3(n_));
  for (int m = 0; m < n_; ++m) {
    // d_m h^{-1} = -h^{-1} (d_m h) h^{-1}
    Eigen::MatrixXd dbm = -b * d1[m] * b;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = j; k < n_; ++k) {
          double sum = 0.0;
          for (int l = 0; l < n_; ++l) {
            sum += dbm(i, l) * (d1[j](l, k) + d1[k](l, j) - d1[l](j, k));
            sum += b(i, l) * (d2[m][j](l, k) + d2[m][k](l, j) - d2[m][l](j, k));
          }
          out[m](i, j, k) = out[m](i, k, j) = 0.5 * sum;
        }
  }
  return out;
}

GammaJet TargetMetric::christoffel_jet(const Eigen::VectorXd& y, int order) const {
  if (order + 1 > max_jet_order_)
    throw std::out_of_range("christoffel_jet: order + 1 exceeds max_jet_order");

  // Taylor coefficients of h up to order + 1, of h^{-1} and Gamma up to order.
  MultiIndexSet coeffs(n_, order + 1);
  std::vector<Eigen::MatrixXd> hc(coeffs.size());
  for (int id = 0; id < coeffs.size(); ++id) {
    const MultiIndex& a = coeffs.at(id);
    double scale = 1.0 / MultiIndexSet::factorial(a);
    hc[id] = Eigen::MatrixXd(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = i; j < n_; ++j)
        hc[id](i, j) = hc[id](j, i) = scale * tapes_[entry_slot(i, j)][tape_indices_.id(a)]
                                                  .eval(y.data());
  }

  // Series inverse: sum_{b <= a} H_b B_{a-b} = I
  std::vector<Eigen::MatrixXd> bc(coeffs.size());
  Eigen::MatrixXd b0 = hc[0].inverse();
  for (int id = 0; id < coeffs.size(); ++id) {
    const MultiIndex& a = coeffs.at(id);
    if (a.order() > order) continue;
    if (a.order() == 0) {
      bc[id] = b0;
      continue;
    }
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n_, n_);
    for (int jb = 0; jb < coeffs.size(); ++jb) {
      const MultiIndex& bidx = coeffs.at(jb);
      if (bidx.order() == 0 || !MultiIndexSet::leq(bidx, a)) continue;
      int rest = coeffs.id(MultiIndexSet::sub(a, bidx));
      acc += hc[jb] * bc[rest];
    }
    bc[id] = -b0 * acc;
  }

  GammaJet jet;
  jet.n = n_;
  jet.order = order;
  jet.indices = MultiIndexSet(n_, order);
  jet.derivative.assign(jet.indices.size(), Tensor3(n_));

  // E_{l,jk} series: 1/2 (d_j h_{lk} + d_k h_{lj} - d_l h_{jk}) with
  // coeff_g(d_j F) = (g_j + 1) F-coeff(g + e_j).
  auto ecoeff = [&](int l, int j, int k, const MultiIndex& g) {
    MultiIndex gj = MultiIndexSet::add(g, MultiIndex::unit(j));
    MultiIndex gk = MultiIndexSet::add(g, MultiIndex::unit(k));
    MultiIndex gl = MultiIndexSet::add(g, MultiIndex::unit(l));
    double t = (g[j] + 1) * hc[coeffs.id(gj)](l, k) + (g[k] + 1) * hc[coeffs.id(gk)](l, j) -
               (g[l] + 1) * hc[coeffs.id(gl)](j, k);
    return 0.5 * t;
  };

  for (int id = 0; id < jet.indices.size(); ++id) {
    const MultiIndex& a = jet.indices.at(id);
    double afact = MultiIndexSet::factorial(a);
    Tensor3& t = jet.derivative[id];
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        for (int k = j; k < n_; ++k) {
          double sum = 0.0;
          for (int jb = 0; jb < coeffs.size(); ++jb) {
            const MultiIndex& beta = coeffs.at(jb);
            if (beta.order() > a.order() || !MultiIndexSet::leq(beta, a)) continue;
            MultiIndex rest = MultiIndexSet::sub(a, beta);
            for (int l = 0; l < n_; ++l) sum += bc[jb](i, l) * ecoeff(l, j, k, rest);
          }
          t(i, j, k) = t(i, k, j) = afact * sum;
        }
  }
  return jet;
}

// ---------------------------------------------------------------------------
// Target families
// ---------------------------------------------------------------------------

TargetMetric target_euclidean(int n) {
  std::vector<std::vector<Expr>> e(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i) e[i][i] = Expr::constant(1.0);
  return TargetMetric(n, std::move(e), 1e30, 6, "euclidean");
}

TargetMetric target_conformal(int n, const std::string& phi, double validity_radius,
                              int max_jet_order) {
  Expr p = parse_expr(phi, target_variable_names(n));
  Expr factor = expr_exp(Expr::constant(2.0) * p);
  std::vector<std::vector<Expr>> e(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i) e[i][i] = factor;
  return TargetMetric(n, std::move(e), validity_radius, max_jet_order, "conformal");
}

TargetMetric target_polynomial_perturbation(int n, double amplitude,
                                            const std::vector<std::vector<std::string>>& entries,
                                            double validity_radius, int max_jet_order) {
  auto names = target_variable_names(n);
  std::vector<std::vector<Expr>> e(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Expr p = Expr::constant(amplitude) * parse_expr(entries[i][j], names);
      e[i][j] = e[j][i] = (i == j) ? Expr::constant(1.0) + p : p;
    }
  return TargetMetric(n, std::move(e), validity_radius, max_jet_order, "polynomial-perturbation");
}

TargetMetric target_from_expressions(int n, const std::vector<std::vector<std::string>>& entries,
                                     double validity_radius, int max_jet_order) {
  auto names = target_variable_names(n);
  std::vector<std::vector<Expr>> e(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) e[i][j] = e[j][i] = parse_expr(entries[i][j], names);
  return TargetMetric(n, std::move(e), validity_radius, max_jet_order, "expression");
}

double min_eigenvalue_on_ball(const TargetMetric& h, const Eigen::VectorXd& q, double r,
                              int radial_samples, int angular_samples) {
  int n = h.dim();
  std::vector<Eigen::VectorXd> dirs;
  if (n == 2) {
    for (int k = 0; k < angular_samples; ++k) {
      double t = 2.0 * M_PI * k / angular_samples;
      Eigen::VectorXd d(2);
      d << std::cos(t), std::sin(t);
      dirs.push_back(d);
    }
  } else {
    // Fibonacci sphere
    const double ga = M_PI * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < angular_samples; ++k) {
      double z = 1.0 - 2.0 * (k + 0.5) / angular_samples;
      double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      Eigen::VectorXd d(3);
      d << rho * std::cos(ga * k), rho * std::sin(ga * k), z;
      dirs.push_back(d);
    }
  }
  double min_ev = std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  for (int t = 0; t <= radial_samples; ++t) {
    double rho = r * t / radial_samples;
    for (const auto& d : dirs) {
      es.compute(h.eval(q + rho * d));
      min_ev = std::min(min_ev, es.eigenvalues().minCoeff());
      if (t == 0) break;  // center once
    }
  }
  return min_ev;
}

// ---------------------------------------------------------------------------
// Metric jet from a Christoffel jet
// ---------------------------------------------------------------------------

namespace {

// Shared Taylor-coefficient recursion.  With `absolute` set, runs on
// magnitudes to propagate error bounds (products of values and errors).
MetricJet compatibility_recursion(const Eigen::MatrixXd& h_at_q, const GammaJet& jet,
                                  const GammaJet* jet_error) {
  int n = jet.n;
  int out_order = jet.order + 1;
  MultiIndexSet mis(n, out_order);

  // Taylor coefficients of h (sc) and Gamma (gc); error channels alongside.
  std::vector<Eigen::MatrixXd> sc(mis.size(), Eigen::MatrixXd::Zero(n, n));
  std::vector<Eigen::MatrixXd> se(mis.size(), Eigen::MatrixXd::Zero(n, n));
  std::vector<Tensor3> gc(mis.size(), Tensor3(n));
  std::vector<Tensor3> ge(mis.size(), Tensor3(n));
  sc[0] = h_at_q;
  for (int id = 0; id < mis.size(); ++id) {
    const MultiIndex& a = mis.at(id);
    if (a.order() > jet.order) continue;
    double scale = 1.0 / MultiIndexSet::factorial(a);
    int jid = jet.indices.id(a);
    for (std::size_t t = 0; t < gc[id].v.size(); ++t) {
      gc[id].v[t] = scale * jet.derivative[jid].v[t];
      if (jet_error) ge[id].v[t] = scale * std::abs(jet_error->derivative[jid].v[t]);
    }
  }

  for (int m = 1; m <= out_order; ++m) {
    for (int id : mis.ids_of_order(m)) {
      MultiIndex ap = mis.at(id);
      int axis = 0;
      while (ap[axis] == 0) ++axis;
      MultiIndex a = MultiIndexSet::sub(ap, MultiIndex::unit(axis));
      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
      Eigen::MatrixXd acc_err = Eigen::MatrixXd::Zero(n, n);
      for (int jb = 0; jb < mis.size(); ++jb) {
        const MultiIndex& beta = mis.at(jb);
        if (!MultiIndexSet::leq(beta, a)) continue;
        int rest = mis.id(MultiIndexSet::sub(a, beta));
        const Eigen::MatrixXd& s = sc[jb];
        const Eigen::MatrixXd& serr = se[jb];
        const Tensor3& g = gc[rest];
        const Tensor3& gerr = ge[rest];
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int r = 0; r < n; ++r) {
              // d_axis h_{ij} = h_{rj} Gamma^r_{i axis} + h_{ir} Gamma^r_{axis j}
              acc(i, j) += s(r, j) * g(r, i, axis) + s(i, r) * g(r, axis, j);
              if (jet_error)
                acc_err(i, j) += std::abs(s(r, j)) * gerr(r, i, axis) +
                                 serr(r, j) * std::abs(g(r, i, axis)) +
                                 std::abs(s(i, r)) * gerr(r, axis, j) +
                                 serr(i, r) * std::abs(g(r, axis, j));
            }
      }
      sc[id] = (acc + acc.transpose().eval()) / (2.0 * ap[axis]);
      if (jet_error) se[id] = (acc_err + acc_err.transpose().eval()) / (2.0 * ap[axis]);
    }
  }

  MetricJet out;
  out.n = n;
  out.order = out_order;
  out.indices = mis;
  out.derivative.resize(mis.size());
  for (int id = 0; id < mis.size(); ++id) {
    double f = MultiIndexSet::factorial(mis.at(id));
    out.derivative[id] = f * (jet_error ? se[id] : sc[id]);
  }
  return out;
}

}  // namespace

MetricJet metric_jet_from_christoffel_jet(const Eigen::MatrixXd& h_at_q, const GammaJet& jet) {
  return compatibility_recursion(h_at_q, jet, nullptr);
}

MetricJet metric_jet_error_from_christoffel_jet(const Eigen::MatrixXd& h_at_q,
                                                const GammaJet& jet, const GammaJet& jet_error) {
  return compatibility_recursion(h_at_q, jet, &jet_error);
}

}  // namespace hmlab
