// SPDX-License-Identifier: Apache-2.0
#include "core/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace ddv {

namespace {

// Golub-Welsch: nodes/weights of the Gauss rule for the Jacobi weight
// (1-x)^alpha on [-1,1] (beta = 0).
void gauss_jacobi(int n, double alpha, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  const double beta = 0.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    double ak;
    if (k == 0)
      ak = (beta - alpha) / (alpha + beta + 2.0);
    else {
      const double d = 2.0 * k + alpha + beta;
      ak = (beta * beta - alpha * alpha) / (d * (d + 2.0));
    }
    J(k, k) = ak;
    if (k + 1 < n) {
      const double kk = k + 1.0;
      const double d = 2.0 * kk + alpha + beta;
      const double bk = std::sqrt(4.0 * kk * (kk + alpha) * (kk + beta) * (kk + alpha + beta) /
                                  (d * d * (d + 1.0) * (d - 1.0)));
      J(k, k + 1) = J(k + 1, k) = bk;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x = es.eigenvalues();
  // mu0 = int_{-1}^{1} (1-t)^alpha dt
  const double mu0 = std::pow(2.0, alpha + 1.0) / (alpha + 1.0);
  w.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v = es.eigenvectors()(0, k);
    w[k] = mu0 * v * v;
  }
}

}  // namespace

const LineRule& line_rule(int degree) {
  static std::map<int, LineRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const int n = degree / 2 + 1;
  auto it = cache.find(n);
  if (it == cache.end()) {
    Eigen::VectorXd x, w;
    gauss_jacobi(n, 0.0, x, w);
    LineRule rule;
    rule.points = (x.array() + 1.0) / 2.0;
    rule.weights = w / 2.0;
    it = cache.emplace(n, std::move(rule)).first;
  }
  return it->second;
}

const TriangleRule& triangle_rule(int degree) {
  static std::map<int, TriangleRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  const int n = degree / 2 + 1;
  auto it = cache.find(n);
  if (it == cache.end()) {
    // Duffy transform x = u, y = v(1-u); Jacobian (1-u) absorbed into the
    // Jacobi weight in u.
    Eigen::VectorXd xu, wu, xv, wv;
    gauss_jacobi(n, 1.0, xu, wu);
    gauss_jacobi(n, 0.0, xv, wv);
    TriangleRule rule;
    rule.points.resize(2, n * n);
    rule.weights.resize(n * n);
    int p = 0;
    for (int i = 0; i < n; ++i) {
      const double u = (xu[i] + 1.0) / 2.0;
      const double cu = wu[i] / 4.0;  // interval map + Jacobian scaling
      for (int j = 0; j < n; ++j) {
        const double v = (xv[j] + 1.0) / 2.0;
        rule.points(0, p) = u;
        rule.points(1, p) = v * (1.0 - u);
        rule.weights[p] = cu * wv[j] / 2.0;
        ++p;
      }
    }
    it = cache.emplace(n, std::move(rule)).first;
  }
  return it->second;
}

}  // namespace ddv
