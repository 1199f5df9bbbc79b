// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <atomic>
#include <memory>
#include <unordered_map>
#include <vector>

#include "core/elasticity.hpp"
#include "core/mesh.hpp"

namespace ddv {

/// Counts interface reductions (assembly-operator sums). Used to check that
/// the estimation path exchanges nothing beyond solver-reduced quantities.
struct ReductionCounter {
  static std::atomic<long>& count();
  static void reset() { count() = 0; }
  static void bump() { ++count(); }
};

/// One subdomain: local stiffness with interior/boundary split, loads,
/// factorizations, and rigid body modes. Local free dofs are ordered
/// [interior..., boundary...], each block sorted by global dof id.
/// Dirichlet dofs are eliminated before the split.
struct Subdomain {
  int id = -1;
  std::vector<int> elems;  // global triangle ids, ascending
  std::vector<int> nodes;  // global node ids, ascending
  std::unordered_map<int, int> node_local;

  // Local dof indexing: local dof = 2*local_node + comp.
  std::vector<int> free_of_local;      // local dof -> free index or -1
  std::vector<int> local_of_free;      // free index -> local dof
  Eigen::VectorXd dirichlet_values;    // per local dof, 0 on free dofs
  int n_interior = 0, n_boundary = 0;  // free dof split

  Eigen::SparseMatrix<double> K;  // free x free, [i;b] ordering
  Eigen::VectorXd f;              // includes Dirichlet lifting
  Eigen::SparseMatrix<double> K_ib, K_bb;

  Eigen::MatrixXd R;    // kernel basis on free dofs, orthonormal columns
  Eigen::MatrixXd R_b;  // boundary restriction of R

  int num_free() const { return n_interior + n_boundary; }
  int num_modes() const { return static_cast<int>(R.cols()); }

  Eigen::VectorXd interior_block(const Eigen::VectorXd& free_vec) const {
    return free_vec.head(n_interior);
  }
  Eigen::VectorXd boundary_block(const Eigen::VectorXd& free_vec) const {
    return free_vec.tail(n_boundary);
  }

  /// Solves K_ii u_i = rhs_i.
  Eigen::VectorXd interior_solve(const Eigen::VectorXd& rhs_i) const;
  /// (K_bb - K_bi K_ii^{-1} K_ib) x_b, never forming S.
  Eigen::VectorXd schur_apply(const Eigen::VectorXd& x_b) const;
  /// f_b - K_bi K_ii^{-1} f_i.
  const Eigen::VectorXd& condensed_rhs() const;
  /// Any u with K u = rhs; requires R^T rhs ~ 0 (Fredholm). With `deflate`
  /// the kernel component is projected out instead of checked — for solver
  /// internals where balance holds in exact arithmetic but round-off drifts.
  Eigen::VectorXd pseudo_inverse_apply(const Eigen::VectorXd& rhs, double fredholm_tol = 1e-8,
                                       bool deflate = false) const;
  /// S^+ applied to a balanced boundary vector (Neumann solve, trace taken).
  Eigen::VectorXd schur_pseudo_inverse_apply(const Eigen::VectorXd& mu_b,
                                             double fredholm_tol = 1e-8,
                                             bool deflate = false) const;

  /// Full local vector (2 dofs per local node) from a free vector, with the
  /// imposed Dirichlet values filled in.
  Eigen::VectorXd expand(const Eigen::VectorXd& free_vec) const;

  // Internals shared by setup code.
  struct Factorizations;
  std::shared_ptr<Factorizations> fact;
  mutable Eigen::VectorXd condensed_rhs_cache;
};

std::vector<Subdomain> build_subdomains(const Mesh& mesh, const Partition& partition,
                                        const HookeTensor& hooke, const LoadSpec& loads);

/// Abstract interface description: per subdomain, the global entity id of
/// each local boundary slot, in local order. Entities sorted by id give the
/// primal numbering.
struct InterfaceLayout {
  std::vector<std::vector<int>> local_boundary_entities;
};

InterfaceLayout interface_layout(const Mesh& mesh, const Partition& partition,
                                 const std::vector<Subdomain>& subs);

struct PrimalVector {
  Eigen::VectorXd v;
};
struct DualVector {
  Eigen::VectorXd v;
};

/// Primal (unsigned) and dual (signed) assembly operators with multiplicity
/// scalings, realized as index maps. Dual connections are fully redundant:
/// one per subdomain pair sharing an entity.
struct AssemblyOperators {
  int nsd = 0;
  int n_primal = 0;
  std::vector<int> primal_entity;                           // primal -> entity id
  std::vector<std::vector<int>> local_to_primal;            // [s][lb] -> primal
  std::vector<std::vector<std::pair<int, int>>> owners;     // primal -> [(s, lb)], s ascending
  Eigen::VectorXd multiplicity;                             // per primal

  struct Connection {
    int primal = -1;
    int s_pos = -1, s_neg = -1;  // s_pos < s_neg; +1 on s_pos, -1 on s_neg
    int lb_pos = -1, lb_neg = -1;
  };
  std::vector<Connection> connections;
  std::vector<std::vector<int>> primal_connections;  // primal -> connection ids
  std::vector<Eigen::MatrixXd> dual_scale_block;     // per primal: pinv of connection Gram

  int n_dual() const { return static_cast<int>(connections.size()); }

  // Reductions (bump the counter).
  PrimalVector assemble_primal(const std::vector<Eigen::VectorXd>& local_b) const;
  DualVector assemble_dual(const std::vector<Eigen::VectorXd>& local_b) const;

  // Scatter operations (local, no exchange).
  Eigen::VectorXd scatter_primal(const PrimalVector& x, int s) const;          // A^T x
  Eigen::VectorXd scatter_primal_scaled(const PrimalVector& x, int s) const;   // A~^T x
  Eigen::VectorXd scatter_dual(const DualVector& mu, int s) const;             // Abar^T mu
  Eigen::VectorXd scatter_dual_scaled(const DualVector& mu, int s) const;      // Abar~^T mu

  /// Per-primal-block multiplicity scaling W = pinv(sum_s Abar Abar^T):
  /// Abar~^T mu = Abar^T (W mu). Local, no exchange.
  DualVector dual_scale(const DualVector& mu) const;

  /// Minimal-norm dual representative of a balanced family of local boundary
  /// vectors: returns mu with Abar^T mu reproducing the inputs.
  DualVector dual_decompose(const std::vector<Eigen::VectorXd>& local_b) const;

  // Dense views (debug dumps and the printed-operator fixture).
  Eigen::MatrixXd dense_primal(int s) const;
  Eigen::MatrixXd dense_dual(int s) const;
};

AssemblyOperators build_assembly_operators(const InterfaceLayout& layout);

/// Dense selection matrix extracting `selected` rows from an n-vector.
Eigen::MatrixXd dense_trace(int n, const std::vector<int>& selected);

/// Writes dense A and Abar per subdomain as CSV into dir.
void export_operators_csv(const AssemblyOperators& ops, const std::string& dir);

}  // namespace ddv
