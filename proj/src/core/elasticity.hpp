// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <span>

#include "core/mesh.hpp"

namespace ddv {

/// Plane-stress Hooke matrix in Voigt form (exx, eyy, 2exy).
struct HookeTensor {
  double E = 0.0, nu = 0.0;
  Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d Cinv = Eigen::Matrix3d::Zero();
};

HookeTensor hooke_plane_stress(double E, double nu);

struct LoadSpec {
  Eigen::Vector2d body = Eigen::Vector2d::Zero();
  Eigen::Vector2d traction = Eigen::Vector2d::Zero();  // on NeumannLoad edges
  // Imposed displacement on DirichletBase edges; zero by default.
  std::function<Eigen::Vector2d(const Eigen::Vector2d&)> dirichlet;
};

/// Geometry of one triangle: constant barycentric gradients and area.
struct TriGeometry {
  std::array<Eigen::Vector2d, 3> v;
  double area = 0.0;
  Eigen::Matrix<double, 2, 3> grad_lambda;  // d lambda_i / d (x,y)

  TriGeometry(const Mesh& mesh, int t);
  Eigen::Vector3d barycentric(const Eigen::Vector2d& p) const;
  Eigen::Vector2d point(const Eigen::Vector3d& lambda) const;
};

/// P1 strain-displacement matrix (3x6, dof order x0,y0,x1,y1,x2,y2).
Eigen::Matrix<double, 3, 6> strain_matrix_p1(const TriGeometry& geo);

Eigen::Matrix<double, 6, 6> element_stiffness(const TriGeometry& geo, const HookeTensor& hooke);

struct FESystem {
  Eigen::SparseMatrix<double> K;   // full size, symmetric
  Eigen::VectorXd f;
  std::vector<char> is_dirichlet;  // per dof
  Eigen::VectorXd dirichlet_values;

  int num_dofs() const { return static_cast<int>(f.size()); }
};

FESystem assemble_system(const Mesh& mesh, const HookeTensor& hooke, const LoadSpec& loads);

/// Direct solve of the constrained system; returns the full nodal vector
/// with imposed values filled in.
Eigen::VectorXd solve_monolithic(const FESystem& sys);

/// Homogeneous degree-4 barycentric monomials: a 15-dimensional basis of
/// polynomials of total degree <= 4 on a triangle.
struct P4Basis {
  static constexpr int kSize = 15;
  static const std::array<std::array<int, 3>, kSize>& exponents();
  static Eigen::Matrix<double, kSize, 1> values(const Eigen::Vector3d& lambda);
  static Eigen::Matrix<double, 2, kSize> gradients(const Eigen::Vector3d& lambda,
                                                   const Eigen::Matrix<double, 2, 3>& grad_lambda);
  /// Inverse Vandermonde at the degree-4 lattice: maps point values at the 15
  /// lattice nodes to basis coefficients.
  static const Eigen::Matrix<double, kSize, kSize>& vandermonde_inv();
  static const std::array<Eigen::Vector3d, kSize>& lattice();
};

/// Per-element polynomial stress, 3 Voigt components in the P4 basis.
struct ElementStressField {
  std::vector<Eigen::Matrix<double, 3, P4Basis::kSize>> coeffs;  // per triangle
  int degree = 4;

  Eigen::Vector3d evaluate(int t, const Eigen::Vector3d& lambda) const {
    return coeffs[t] * P4Basis::values(lambda);
  }
};

/// Constant Voigt strain of a P1 nodal field on one triangle; `u` is indexed
/// by global dofs (2 per node).
Eigen::Vector3d p1_strain(const Mesh& mesh, int t, const Eigen::VectorXd& u);

/// Integral over `elems` of (sigma - C eps(u)) : C^{-1} : (sigma - C eps(u)).
/// Exact for the polynomial integrand when quad_degree >= 2*stress degree.
double energy_norm_sq(const Mesh& mesh, const ElementStressField& stress,
                      const Eigen::VectorXd& u_nodal, const HookeTensor& hooke,
                      std::span<const int> elems, int quad_degree = 8);

/// Same residual restricted to one element.
double energy_norm_sq_element(const Mesh& mesh, const ElementStressField& stress,
                              const Eigen::VectorXd& u_nodal, const HookeTensor& hooke,
                              int t, int quad_degree = 8);

/// Energy (strain) norm squared of a P1 field: sum over elements of
/// area * eps^T C eps.
double strain_energy_sq(const Mesh& mesh, const Eigen::VectorXd& u, const HookeTensor& hooke);

}  // namespace ddv
