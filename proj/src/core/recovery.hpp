// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <vector>

#include "core/solvers.hpp"
#include "core/substructure.hpp"

namespace ddv {

/// Interface fields at one iterate: continuous boundary displacements and
/// balanced boundary reactions, per subdomain (free boundary dofs).
struct NodalPair {
  std::vector<Eigen::VectorXd> u_hat_b;
  std::vector<Eigen::VectorXd> lambda_hat;
};

/// Thrown when an iterate violates an admissibility precondition.
struct AdmissibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Piecewise-linear traction field on interface edges of one subdomain:
/// edge key (n0<n1, global node ids) -> nodal values at (n0, n1).
using EdgeTractions = std::map<std::pair<int, int>, std::array<Eigen::Vector2d, 2>>;

/// Interface polylines between subdomain pairs. Each chain connects the mesh
/// edges separating one pair (s_pos < s_neg); tractions are solved once per
/// chain and signed per side, which makes action-reaction exact.
struct InterfaceChains {
  struct Chain {
    int s_pos = -1, s_neg = -1;
    std::vector<int> nodes;       // global node ids in path order
    std::vector<double> lengths;  // per edge, nodes.size()-1 entries
    // Per node and component: dual connection id for this pair, or -1 when
    // the node is constrained (endpoint on the clamped base).
    std::vector<std::array<int, 2>> conn;
    bool cyclic = false;
  };
  std::vector<Chain> chains;
};

/// Per-subdomain edge table for the equilibration pass.
struct SubdomainEdges {
  enum Kind { Interior, Dirichlet, Interface, Outer };
  struct EdgeRec {
    int n0 = -1, n1 = -1;       // global nodes, n0 < n1
    int e_lo = -1, e_hi = -1;   // adjacent triangles in this subdomain
    Kind kind = Interior;
    double len = 0.0;
    Eigen::Vector2d normal_lo = Eigen::Vector2d::Zero();  // outward from e_lo
    Eigen::Vector2d g0 = Eigen::Vector2d::Zero();  // prescribed traction (Outer)
    Eigen::Vector2d g1 = Eigen::Vector2d::Zero();
  };
  std::vector<EdgeRec> edges;
  std::map<std::pair<int, int>, int> index;
};

/// Precomputed geometry shared by all per-iteration recoveries.
struct RecoveryContext {
  const Mesh& mesh;
  const Partition& partition;
  const std::vector<Subdomain>& subs;
  const AssemblyOperators& ops;
  const HookeTensor& hooke;
  const LoadSpec& loads;
  InterfaceChains chains;
  std::vector<SubdomainEdges> edges;
};

RecoveryContext make_recovery_context(const Mesh& mesh, const Partition& partition,
                                      const std::vector<Subdomain>& subs,
                                      const AssemblyOperators& ops, const HookeTensor& hooke,
                                      const LoadSpec& loads);

/// Interface pair from any iterate: BDD keeps the (continuous) displacement
/// and rebalances the reactions by the scaled imbalance; FETI keeps the
/// (balanced) multipliers and closes the displacement gap by its scaled
/// decomposition. Both need only subdomain-local data plus the already
/// assembled defect.
NodalPair recover_nodal_pair(const SolverState& state, const std::vector<Subdomain>& subs,
                             const AssemblyOperators& ops);

/// Interior Dirichlet re-solve: full free displacement with trace u_hat_b.
Eigen::VectorXd ka_internal_solve(const Subdomain& sub, const Eigen::VectorXd& u_hat_b);

/// Balanced local Neumann solution K u = f + t^T lambda_hat.
Eigen::VectorXd sa_local_displacement(const Subdomain& sub, const Eigen::VectorXd& lambda_hat);

/// Lifts the nodal reactions to piecewise-linear edge tractions by consistent
/// mass solves per interface chain. `u_tilde` (per-subdomain Neumann
/// solutions) feeds the endpoint reaction split where chains hit the clamped
/// base. Returns one field per subdomain; F^(s) + F^(s') = 0 holds exactly.
std::vector<EdgeTractions> lift_traction_gh(const RecoveryContext& ctx, const NodalPair& pair,
                                            const std::vector<Eigen::VectorXd>& u_tilde);

/// Element equilibration for one subdomain: builds balanced linear tractions
/// on every element edge (two-stage construction: per-node star patches, then
/// degree-4 local Neumann solves) and writes the resulting stress into
/// `sigma` at this subdomain's triangles. `u_tilde_full` is the expanded
/// local Neumann displacement.
void eet_equilibrate(const RecoveryContext& ctx, int s, const Eigen::VectorXd& u_tilde_full,
                     const EdgeTractions& interface_tractions, ElementStressField& sigma);

/// Full per-iterate recovery of the admissible pair.
struct RecoveredFields {
  NodalPair pair;
  std::vector<Eigen::VectorXd> u_hat;    // per sub, full free (KA)
  std::vector<Eigen::VectorXd> u_tilde;  // per sub, full free (Neumann)
  std::vector<EdgeTractions> tractions;
  ElementStressField sigma_hat;  // indexed by global triangle id
};

RecoveredFields recover_admissible_pair(const RecoveryContext& ctx, const SolverState& state);

}  // namespace ddv
