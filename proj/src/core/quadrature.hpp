// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ddv {

/// Quadrature rule on the reference triangle {x,y >= 0, x+y <= 1},
/// exact for polynomials up to the requested total degree.
struct TriangleRule {
  Eigen::Matrix2Xd points;  // reference coordinates
  Eigen::VectorXd weights;  // sum to 1/2

  int size() const { return static_cast<int>(weights.size()); }
};

/// Conical-product rule (Gauss-Legendre x Gauss-Jacobi), cached per degree.
const TriangleRule& triangle_rule(int degree);

/// Gauss-Legendre rule on [0,1], exact up to the requested degree.
struct LineRule {
  Eigen::VectorXd points;
  Eigen::VectorXd weights;  // sum to 1

  int size() const { return static_cast<int>(weights.size()); }
};
const LineRule& line_rule(int degree);

}  // namespace ddv
