// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/substructure.hpp"

namespace ddv {

enum class Method { BDD, FETI };

std::string method_name(Method m);

/// State handed to the iteration hook. `u_b` holds the per-subdomain boundary
/// displacement trace (continuous for BDD, raw local for FETI); `lambda_b`
/// the per-subdomain interface traction (balanced for FETI, raw local for
/// BDD). `imbalance` is the assembled interface defect driving the recovery:
/// the traction imbalance (primal, BDD) or the displacement gap (dual, FETI).
struct SolverState {
  Method method = Method::BDD;
  int iteration = 0;
  Eigen::VectorXd iterate;  // primal u_b (BDD) or dual lambda (FETI)
  std::vector<Eigen::VectorXd> u_b;
  std::vector<Eigen::VectorXd> lambda_b;
  Eigen::VectorXd imbalance;
  double residual = 0.0;      // normalized: |defect^n| / |defect^0|
  double residual_pre = 0.0;  // preconditioned-energy norm, same normalization
  std::vector<std::pair<int, double>> history;
};

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = -1;  // default: 3 x interface dof count
};

using IterationHook = std::function<void(const SolverState&)>;

/// Thrown when the Krylov loop exhausts max_iter; carries the history.
struct NonConvergence : std::runtime_error {
  std::vector<std::pair<int, double>> history;
  NonConvergence(const std::string& what, std::vector<std::pair<int, double>> h)
      : std::runtime_error(what), history(std::move(h)) {}
};

/// Balanced Neumann-Neumann PCG on the primal interface system.
SolverState bdd_solve(const std::vector<Subdomain>& subs, const AssemblyOperators& ops,
                      const SolverOptions& opt = {}, const IterationHook& hook = nullptr);

/// Projected PCG on the dual interface system with Dirichlet preconditioner.
SolverState feti_solve(const std::vector<Subdomain>& subs, const AssemblyOperators& ops,
                       const SolverOptions& opt = {}, const IterationHook& hook = nullptr);

SolverState interface_solve(Method method, const std::vector<Subdomain>& subs,
                            const AssemblyOperators& ops, const SolverOptions& opt = {},
                            const IterationHook& hook = nullptr);

void export_history_csv(const SolverState& state, const std::string& path);

}  // namespace ddv
