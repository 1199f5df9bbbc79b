// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/recovery.hpp"

namespace ddv {

struct EstimateReport {
  double e_cr_global = 0.0;
  std::vector<double> per_subdomain;                 // e_cr^(s)
  std::vector<std::pair<int, double>> per_element;   // (triangle id, squared contribution)
  int iteration = 0;
  double residual = 0.0;
  std::string method;
  std::optional<double> e_h;
  std::optional<double> effectivity;
};

struct SubdomainEstimate {
  double e2 = 0.0;
  std::vector<std::pair<int, double>> per_element;
};

/// Constitutive-relation error of the admissible pair on one subdomain:
/// per-element squared contributions and their (deterministic) sum.
SubdomainEstimate ecr_subdomain(const Mesh& mesh, const Subdomain& sub, const HookeTensor& hooke,
                                const ElementStressField& sigma,
                                const Eigen::VectorXd& u_hat_full);

/// sqrt of the deterministic sum of squared subdomain contributions; the only
/// cross-subdomain reduction of the estimation path.
double ecr_global(const std::vector<double>& e2_per_subdomain);

/// Full estimation at one solver iterate: recovery + per-subdomain errors +
/// final scalar reduction.
EstimateReport estimate_at_iteration(const RecoveryContext& ctx, const SolverState& state);

/// Fine nested reference for the true discretization error.
struct Reference {
  int m = 0;
  Mesh mesh;
  Eigen::VectorXd u;
};

Reference build_reference(int m_ref, double L, const HookeTensor& hooke, const LoadSpec& loads);

/// Exact P1 prolongation of a coarse nodal field onto a nested finer mesh
/// built by the same generator.
Eigen::VectorXd prolongate(const Mesh& coarse, const Mesh& fine,
                           const Eigen::VectorXd& u_coarse);

/// Energy-norm difference on the reference mesh (direct form, valid for
/// non-Galerkin fields). `u_coarse` is indexed by coarse global dofs.
double true_error(const Mesh& coarse, const Eigen::VectorXd& u_coarse, const Reference& ref,
                  const HookeTensor& hooke);

void export_report_json(const EstimateReport& report, const std::string& path);
void export_element_map_csv(const Mesh& mesh, const EstimateReport& report,
                            const std::string& path);

}  // namespace ddv
