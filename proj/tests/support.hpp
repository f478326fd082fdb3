#pragma once

// Shared test oracles: nested central differences for derivative checks, a
// finite-difference Christoffel oracle that only touches metric evaluation,
// and convergence-order estimation.

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "hmlab/geometry.hpp"

namespace testsupport {

// Nested central differences for a mixed partial derivative d_A f(y).
inline double fd_derivative(const std::function<double(const Eigen::VectorXd&)>& f,
                            const hmlab::MultiIndex& a, Eigen::VectorXd y, double step,
                            int axis = 0) {
  while (axis < 3 && a[axis] == 0) ++axis;
  if (axis == 3) return f(y);
  hmlab::MultiIndex rest = a;
  rest[axis] -= 1;
  Eigen::VectorXd yp = y, ym = y;
  yp[axis] += step;
  ym[axis] -= step;
  return (fd_derivative(f, rest, yp, step, axis) - fd_derivative(f, rest, ym, step, axis)) /
         (2.0 * step);
}

inline double fd_metric_entry_derivative(const hmlab::TargetMetric& h, int i, int j,
                                         const hmlab::MultiIndex& a, const Eigen::VectorXd& y,
                                         double step) {
  return fd_derivative([&](const Eigen::VectorXd& z) { return h.eval(z)(i, j); }, a, y, step);
}

// Independent Christoffel oracle: finite differences of the metric entries
// fed through 1/2 h^{il} (d_j h_{lk} + d_k h_{lj} - d_l h_{jk}).
inline hmlab::Tensor3 fd_christoffel(const hmlab::TargetMetric& h, const Eigen::VectorXd& y,
                                     double step) {
  int n = h.dim();
  Eigen::MatrixXd b = h.eval(y).inverse();
  std::vector<Eigen::MatrixXd> d1(n, Eigen::MatrixXd(n, n));
  for (int l = 0; l < n; ++l) {
    Eigen::VectorXd yp = y, ym = y;
    yp[l] += step;
    ym[l] -= step;
    d1[l] = (h.eval(yp) - h.eval(ym)) / (2.0 * step);
  }
  hmlab::Tensor3 g(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += b(i, l) * (d1[j](l, k) + d1[k](l, j) - d1[l](j, k));
        g(i, j, k) = 0.5 * s;
      }
  return g;
}

// Observed convergence order from errors at h and h/2.
inline double observed_order(double err_coarse, double err_fine) {
  return std::log2(err_coarse / err_fine);
}

inline std::mt19937& rng() {
  static std::mt19937 gen(20240817u);
  return gen;
}

inline double uniform(double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng());
}

}  // namespace testsupport
