// SPDX-License-Identifier: Apache-2.0
#include "core/elasticity.hpp"

#include <stdexcept>

#include "core/quadrature.hpp"

namespace ddv {

HookeTensor hooke_plane_stress(double E, double nu) {
  if (E <= 0.0 || nu <= -1.0 || nu >= 0.5)
    throw std::invalid_argument("hooke_plane_stress: need E > 0 and -1 < nu < 0.5");
  HookeTensor h;
  h.E = E;
  h.nu = nu;
  const double c = E / (1.0 - nu * nu);
  h.C << c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0;
  h.Cinv = h.C.inverse();
  return h;
}

TriGeometry::TriGeometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  for (int k = 0; k < 3; ++k) v[k] = mesh.nodes[tri[k]];
  const double twice = (v[1].x() - v[0].x()) * (v[2].y() - v[0].y()) -
                       (v[2].x() - v[0].x()) * (v[1].y() - v[0].y());
  area = 0.5 * twice;
  if (area <= 0.0) throw std::runtime_error("TriGeometry: degenerate or misoriented triangle");
  // grad lambda_i = rotated opposite edge / (2 area)
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector2d e = v[(k + 2) % 3] - v[(k + 1) % 3];
    grad_lambda.col(k) = Eigen::Vector2d(-e.y(), e.x()) / twice;
  }
}

Eigen::Vector3d TriGeometry::barycentric(const Eigen::Vector2d& p) const {
  Eigen::Vector3d lambda;
  for (int k = 0; k < 3; ++k)
    lambda[k] = 1.0 / 3.0 + grad_lambda.col(k).dot(p - (v[0] + v[1] + v[2]) / 3.0);
  return lambda;
}

Eigen::Vector2d TriGeometry::point(const Eigen::Vector3d& lambda) const {
  return lambda[0] * v[0] + lambda[1] * v[1] + lambda[2] * v[2];
}

Eigen::Matrix<double, 3, 6> strain_matrix_p1(const TriGeometry& geo) {
  Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
  for (int k = 0; k < 3; ++k) {
    const double gx = geo.grad_lambda(0, k), gy = geo.grad_lambda(1, k);
    B(0, 2 * k) = gx;
    B(1, 2 * k + 1) = gy;
    B(2, 2 * k) = gy;
    B(2, 2 * k + 1) = gx;
  }
  return B;
}

Eigen::Matrix<double, 6, 6> element_stiffness(const TriGeometry& geo, const HookeTensor& hooke) {
  const auto B = strain_matrix_p1(geo);
  return geo.area * B.transpose() * hooke.C * B;
}

FESystem assemble_system(const Mesh& mesh, const HookeTensor& hooke, const LoadSpec& loads) {
  FESystem sys;
  const int n = mesh.num_dofs();
  sys.f = Eigen::VectorXd::Zero(n);
  sys.is_dirichlet.assign(n, 0);
  sys.dirichlet_values = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(36 * mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const TriGeometry geo(mesh, t);
    const auto Ke = element_stiffness(geo, hooke);
    const auto& tri = mesh.triangles[t];
    int dofs[6];
    for (int k = 0; k < 3; ++k) {
      dofs[2 * k] = 2 * tri[k];
      dofs[2 * k + 1] = 2 * tri[k] + 1;
    }
    for (int a = 0; a < 6; ++a) {
      for (int b = 0; b < 6; ++b) trips.emplace_back(dofs[a], dofs[b], Ke(a, b));
      // Constant body force: exact lumping area/3 per node.
      sys.f[dofs[a]] += geo.area / 3.0 * loads.body[a % 2];
    }
  }
  sys.K.resize(n, n);
  sys.K.setFromTriplets(trips.begin(), trips.end());

  for (const auto& e : mesh.boundary_edges) {
    if (e.tag == EdgeTag::NeumannLoad) {
      const double len = (mesh.nodes[e.n1] - mesh.nodes[e.n0]).norm();
      for (int c = 0; c < 2; ++c) {
        sys.f[2 * e.n0 + c] += 0.5 * len * loads.traction[c];
        sys.f[2 * e.n1 + c] += 0.5 * len * loads.traction[c];
      }
    } else if (e.tag == EdgeTag::DirichletBase) {
      for (int node : {e.n0, e.n1}) {
        const Eigen::Vector2d u0 =
            loads.dirichlet ? loads.dirichlet(mesh.nodes[node]) : Eigen::Vector2d::Zero();
        for (int c = 0; c < 2; ++c) {
          sys.is_dirichlet[2 * node + c] = 1;
          sys.dirichlet_values[2 * node + c] = u0[c];
        }
      }
    }
  }
  return sys;
}

Eigen::VectorXd solve_monolithic(const FESystem& sys) {
  const int n = sys.num_dofs();
  std::vector<int> free_index(n, -1);
  int nf = 0;
  for (int i = 0; i < n; ++i)
    if (!sys.is_dirichlet[i]) free_index[i] = nf++;
  if (nf == n) throw std::runtime_error("solve_monolithic: empty Dirichlet set");

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf);
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < n; ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.K, col); it; ++it) {
      const int row = static_cast<int>(it.row());
      if (free_index[row] < 0) continue;
      if (free_index[col] >= 0)
        trips.emplace_back(free_index[row], free_index[col], it.value());
      else
        rhs[free_index[row]] -= it.value() * sys.dirichlet_values[col];
    }
  }
  for (int i = 0; i < n; ++i)
    if (free_index[i] >= 0) rhs[free_index[i]] += sys.f[i];

  Eigen::SparseMatrix<double> Kff(nf, nf);
  Kff.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Kff);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("solve_monolithic: factorization failed (rank deficiency?)");
  const Eigen::VectorXd uf = ldlt.solve(rhs);

  Eigen::VectorXd u = sys.dirichlet_values;
  for (int i = 0; i < n; ++i)
    if (free_index[i] >= 0) u[i] = uf[free_index[i]];
  return u;
}

const std::array<std::array<int, 3>, P4Basis::kSize>& P4Basis::exponents() {
  static const std::array<std::array<int, 3>, kSize> exps = [] {
    std::array<std::array<int, 3>, kSize> e{};
    int p = 0;
    for (int a = 4; a >= 0; --a)
      for (int b = 4 - a; b >= 0; --b) e[p++] = {a, b, 4 - a - b};
    return e;
  }();
  return exps;
}

Eigen::Matrix<double, P4Basis::kSize, 1> P4Basis::values(const Eigen::Vector3d& lambda) {
  Eigen::Matrix<double, kSize, 1> vals;
  double pw[3][5];
  for (int i = 0; i < 3; ++i) {
    pw[i][0] = 1.0;
    for (int d = 1; d <= 4; ++d) pw[i][d] = pw[i][d - 1] * lambda[i];
  }
  const auto& exps = exponents();
  for (int k = 0; k < kSize; ++k)
    vals[k] = pw[0][exps[k][0]] * pw[1][exps[k][1]] * pw[2][exps[k][2]];
  return vals;
}

Eigen::Matrix<double, 2, P4Basis::kSize> P4Basis::gradients(
    const Eigen::Vector3d& lambda, const Eigen::Matrix<double, 2, 3>& grad_lambda) {
  Eigen::Matrix<double, 2, kSize> g = Eigen::Matrix<double, 2, kSize>::Zero();
  double pw[3][5];
  for (int i = 0; i < 3; ++i) {
    pw[i][0] = 1.0;
    for (int d = 1; d <= 4; ++d) pw[i][d] = pw[i][d - 1] * lambda[i];
  }
  const auto& exps = exponents();
  for (int k = 0; k < kSize; ++k) {
    const auto& e = exps[k];
    for (int i = 0; i < 3; ++i) {
      if (e[i] == 0) continue;
      double part = e[i] * pw[i][e[i] - 1];
      for (int j = 0; j < 3; ++j)
        if (j != i) part *= pw[j][e[j]];
      g += part * grad_lambda.col(i) * Eigen::Matrix<double, 1, kSize>::Unit(k);
    }
  }
  return g;
}

const std::array<Eigen::Vector3d, P4Basis::kSize>& P4Basis::lattice() {
  static const std::array<Eigen::Vector3d, kSize> pts = [] {
    std::array<Eigen::Vector3d, kSize> p{};
    int k = 0;
    for (int a = 4; a >= 0; --a)
      for (int b = 4 - a; b >= 0; --b)
        p[k++] = Eigen::Vector3d(a / 4.0, b / 4.0, (4 - a - b) / 4.0);
    return p;
  }();
  return pts;
}

const Eigen::Matrix<double, P4Basis::kSize, P4Basis::kSize>& P4Basis::vandermonde_inv() {
  static const Eigen::Matrix<double, kSize, kSize> inv = [] {
    Eigen::Matrix<double, kSize, kSize> V;
    const auto& pts = lattice();
    for (int r = 0; r < kSize; ++r) V.row(r) = values(pts[r]).transpose();
    return Eigen::Matrix<double, kSize, kSize>(V.fullPivLu().inverse());
  }();
  return inv;
}

Eigen::Vector3d p1_strain(const Mesh& mesh, int t, const Eigen::VectorXd& u) {
  const TriGeometry geo(mesh, t);
  const auto B = strain_matrix_p1(geo);
  Eigen::Matrix<double, 6, 1> ue;
  const auto& tri = mesh.triangles[t];
  for (int k = 0; k < 3; ++k) {
    ue[2 * k] = u[2 * tri[k]];
    ue[2 * k + 1] = u[2 * tri[k] + 1];
  }
  return B * ue;
}

double energy_norm_sq_element(const Mesh& mesh, const ElementStressField& stress,
                              const Eigen::VectorXd& u_nodal, const HookeTensor& hooke, int t,
                              int quad_degree) {
  const TriGeometry geo(mesh, t);
  const Eigen::Vector3d sig_u = hooke.C * p1_strain(mesh, t, u_nodal);
  const auto& rule = triangle_rule(quad_degree);
  double acc = 0.0;
  for (int q = 0; q < rule.size(); ++q) {
    const Eigen::Vector3d lambda(1.0 - rule.points(0, q) - rule.points(1, q), rule.points(0, q),
                                 rule.points(1, q));
    const Eigen::Vector3d res = stress.evaluate(t, lambda) - sig_u;
    acc += rule.weights[q] * res.dot(hooke.Cinv * res);
  }
  return 2.0 * geo.area * acc;
}

double energy_norm_sq(const Mesh& mesh, const ElementStressField& stress,
                      const Eigen::VectorXd& u_nodal, const HookeTensor& hooke,
                      std::span<const int> elems, int quad_degree) {
  double acc = 0.0;
  for (int t : elems) acc += energy_norm_sq_element(mesh, stress, u_nodal, hooke, t, quad_degree);
  return acc;
}

double strain_energy_sq(const Mesh& mesh, const Eigen::VectorXd& u, const HookeTensor& hooke) {
  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Eigen::Vector3d eps = p1_strain(mesh, t, u);
    acc += mesh.tri_area(t) * eps.dot(hooke.C * eps);
  }
  return acc;
}

}  // namespace ddv
