// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "core/experiment.hpp"
#include "core/quadrature.hpp"

namespace ddvtest {

/// Standard study problem: L-shaped domain, plane stress, unit diagonal load.
inline ddv::ExperimentConfig study_config() {
  ddv::ExperimentConfig cfg;
  cfg.m_ref = 0;
  return cfg;
}

/// Relative energy-norm distance between two global nodal fields.
inline double energy_distance(const ddv::Mesh& mesh, const ddv::HookeTensor& hooke,
                              const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double diff = ddv::strain_energy_sq(mesh, a - b, hooke);
  const double ref = ddv::strain_energy_sq(mesh, b, hooke);
  return std::sqrt(diff / std::max(ref, 1e-300));
}

/// Glues per-subdomain full free vectors into one global nodal field
/// (interface values are averaged; they agree for admissible fields).
inline Eigen::VectorXd global_field(const ddv::Mesh& mesh,
                                    const std::vector<ddv::Subdomain>& subs,
                                    const std::vector<Eigen::VectorXd>& free_per_sub) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh.num_dofs());
  Eigen::VectorXd mult = Eigen::VectorXd::Zero(mesh.num_dofs());
  for (size_t s = 0; s < subs.size(); ++s) {
    const Eigen::VectorXd full = subs[s].expand(free_per_sub[s]);
    for (size_t ln = 0; ln < subs[s].nodes.size(); ++ln) {
      const int n = subs[s].nodes[ln];
      for (int c = 0; c < 2; ++c) {
        u[2 * n + c] += full[2 * ln + c];
        mult[2 * n + c] += 1.0;
      }
    }
  }
  for (int i = 0; i < u.size(); ++i)
    if (mult[i] > 0.0) u[i] /= mult[i];
  return u;
}

/// Converged interface state turned into a global displacement (interior
/// resolved per subdomain from the boundary trace).
inline Eigen::VectorXd solution_field(const ddv::Mesh& mesh,
                                      const std::vector<ddv::Subdomain>& subs,
                                      const ddv::SolverState& state) {
  std::vector<Eigen::VectorXd> full(subs.size());
  for (size_t s = 0; s < subs.size(); ++s)
    full[s] = ddv::ka_internal_solve(subs[s], state.u_b[s]);
  return global_field(mesh, subs, full);
}

/// Max abs entry of the assembled displacement jump of the recovered trace.
inline double continuity_defect(const ddv::NodalPair& pair, const ddv::AssemblyOperators& ops) {
  if (ops.n_dual() == 0) return 0.0;
  const Eigen::VectorXd jump = ops.assemble_dual(pair.u_hat_b).v;
  return jump.size() ? jump.cwiseAbs().maxCoeff() : 0.0;
}

/// Max abs entry of the assembled reaction sum of the recovered tractions.
inline double balance_defect(const ddv::NodalPair& pair, const ddv::AssemblyOperators& ops) {
  if (ops.n_primal == 0) return 0.0;
  const Eigen::VectorXd sum = ops.assemble_primal(pair.lambda_hat).v;
  return sum.size() ? sum.cwiseAbs().maxCoeff() : 0.0;
}

/// Worst violation of action-reaction between the per-side edge tractions.
inline double antisymmetry_defect(const std::vector<ddv::EdgeTractions>& tractions) {
  double worst = 0.0;
  for (size_t s = 0; s < tractions.size(); ++s)
    for (size_t r = s + 1; r < tractions.size(); ++r)
      for (const auto& [key, val] : tractions[s]) {
        const auto it = tractions[r].find(key);
        if (it == tractions[r].end()) continue;
        for (int k = 0; k < 2; ++k)
          worst = std::max(worst, (val[k] + it->second[k]).norm());
      }
  return worst;
}

/// Global weak-equilibrium residual of the recovered stress against the P1
/// test space, away from the clamped boundary: internal virtual work minus
/// prescribed boundary work, max abs over the tested dofs.
inline double equilibrium_defect(const ddv::Mesh& mesh, const ddv::ElementStressField& sigma,
                                 const ddv::LoadSpec& loads) {
  std::set<int> clamped;  // hat functions reaching the clamped base carry
  for (const auto& be : mesh.boundary_edges)  // unknown reactions; skip them
    if (be.tag == ddv::EdgeTag::DirichletBase) {
      clamped.insert(be.n0);
      clamped.insert(be.n1);
    }

  Eigen::VectorXd r = Eigen::VectorXd::Zero(mesh.num_dofs());
  const auto& rule = ddv::triangle_rule(4);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ddv::TriGeometry geo(mesh, t);
    const auto B = ddv::strain_matrix_p1(geo);
    Eigen::Vector3d integral = Eigen::Vector3d::Zero();
    for (int q = 0; q < rule.size(); ++q) {
      const Eigen::Vector3d lam(1.0 - rule.points(0, q) - rule.points(1, q), rule.points(0, q),
                                rule.points(1, q));
      integral += 2.0 * geo.area * rule.weights[q] * sigma.evaluate(t, lam);
    }
    for (int k = 0; k < 3; ++k) {
      const int n = mesh.triangles[t][k];
      for (int c = 0; c < 2; ++c) {
        r[2 * n + c] += integral.dot(B.col(2 * k + c));
        r[2 * n + c] -= geo.area / 3.0 * loads.body[c];
      }
    }
  }
  for (const auto& be : mesh.boundary_edges) {
    if (be.tag != ddv::EdgeTag::NeumannLoad) continue;
    const double len = (mesh.nodes[be.n1] - mesh.nodes[be.n0]).norm();
    for (const int n : {be.n0, be.n1})
      for (int c = 0; c < 2; ++c) r[2 * n + c] -= 0.5 * len * loads.traction[c];
  }

  double worst = 0.0;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (clamped.count(n)) continue;
    for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(r[2 * n + c]));
  }
  return worst;
}

}  // namespace ddvtest
