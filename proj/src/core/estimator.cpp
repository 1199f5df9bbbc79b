// SPDX-License-Identifier: Apache-2.0
#include "core/estimator.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace ddv {

SubdomainEstimate ecr_subdomain(const Mesh& mesh, const Subdomain& sub, const HookeTensor& hooke,
                                const ElementStressField& sigma,
                                const Eigen::VectorXd& u_hat_full) {
  Eigen::VectorXd u_g = Eigen::VectorXd::Zero(mesh.num_dofs());
  for (size_t ln = 0; ln < sub.nodes.size(); ++ln)
    for (int c = 0; c < 2; ++c) u_g[2 * sub.nodes[ln] + c] = u_hat_full[2 * ln + c];

  SubdomainEstimate out;
  out.per_element.reserve(sub.elems.size());
  for (int t : sub.elems) {
    const double e2 = energy_norm_sq_element(mesh, sigma, u_g, hooke, t);
    out.per_element.emplace_back(t, e2);
    out.e2 += e2;
  }
  return out;
}

double ecr_global(const std::vector<double>& e2_per_subdomain) {
  double acc = 0.0;
  for (double e2 : e2_per_subdomain) acc += e2;
  return std::sqrt(acc);
}

EstimateReport estimate_at_iteration(const RecoveryContext& ctx, const SolverState& state) {
  const RecoveredFields fields = recover_admissible_pair(ctx, state);
  EstimateReport report;
  report.iteration = state.iteration;
  report.residual = state.residual;
  report.method = method_name(state.method);
  std::vector<double> e2(ctx.ops.nsd);
  for (int s = 0; s < ctx.ops.nsd; ++s) {
    const auto est = ecr_subdomain(ctx.mesh, ctx.subs[s], ctx.hooke, fields.sigma_hat,
                                   ctx.subs[s].expand(fields.u_hat[s]));
    e2[s] = est.e2;
    report.per_subdomain.push_back(std::sqrt(est.e2));
    report.per_element.insert(report.per_element.end(), est.per_element.begin(),
                              est.per_element.end());
  }
  report.e_cr_global = ecr_global(e2);
  return report;
}

Reference build_reference(int m_ref, double L, const HookeTensor& hooke, const LoadSpec& loads) {
  Reference ref;
  ref.m = m_ref;
  ref.mesh = build_gamma_mesh(m_ref, L);
  ref.u = solve_monolithic(assemble_system(ref.mesh, hooke, loads));
  return ref;
}

namespace {

struct LatticeLookup {
  double h = 0.0;
  std::unordered_map<long long, int> node_of;

  explicit LatticeLookup(const Mesh& mesh) : h(mesh.h) {
    for (size_t n = 0; n < mesh.nodes.size(); ++n) {
      const long long i = std::llround(mesh.nodes[n].x() / h);
      const long long j = std::llround(mesh.nodes[n].y() / h);
      node_of[(i << 24) | j] = static_cast<int>(n);
    }
  }
  int at(long long i, long long j) const {
    const auto it = node_of.find((i << 24) | j);
    return it == node_of.end() ? -1 : it->second;
  }
};

}  // namespace

Eigen::VectorXd prolongate(const Mesh& coarse, const Mesh& fine,
                           const Eigen::VectorXd& u_coarse) {
  const LatticeLookup lut(coarse);
  const double h = coarse.h;
  Eigen::VectorXd u_fine = Eigen::VectorXd::Zero(fine.num_dofs());
  for (size_t p = 0; p < fine.nodes.size(); ++p) {
    const double px = fine.nodes[p].x(), py = fine.nodes[p].y();
    // Candidate coarse cell containing the point; all four corners must be
    // coarse nodes (rules out cells outside the domain, clamps boundaries).
    long long ci = -1, cj = -1;
    const long long i0 = static_cast<long long>(std::floor(px / h + 1e-12));
    const long long j0 = static_cast<long long>(std::floor(py / h + 1e-12));
    for (long long di = 0; di >= -1 && ci < 0; --di)
      for (long long dj = 0; dj >= -1 && ci < 0; --dj) {
        const long long i = i0 + di, j = j0 + dj;
        if (i < 0 || j < 0) continue;
        if (px < i * h - 1e-9 * h || px > (i + 1) * h + 1e-9 * h) continue;
        if (py < j * h - 1e-9 * h || py > (j + 1) * h + 1e-9 * h) continue;
        if (lut.at(i, j) >= 0 && lut.at(i + 1, j) >= 0 && lut.at(i, j + 1) >= 0 &&
            lut.at(i + 1, j + 1) >= 0) {
          ci = i;
          cj = j;
        }
      }
    if (ci < 0) throw std::runtime_error("prolongate: point outside nested coarse mesh");
    const double xi = px / h - ci, eta = py / h - cj;
    int nodes[3];
    double lam[3];
    if (xi >= eta) {  // lower triangle (bl, br, tr)
      nodes[0] = lut.at(ci, cj);
      nodes[1] = lut.at(ci + 1, cj);
      nodes[2] = lut.at(ci + 1, cj + 1);
      lam[0] = 1.0 - xi;
      lam[1] = xi - eta;
      lam[2] = eta;
    } else {  // upper triangle (bl, tr, tl)
      nodes[0] = lut.at(ci, cj);
      nodes[1] = lut.at(ci + 1, cj + 1);
      nodes[2] = lut.at(ci, cj + 1);
      lam[0] = 1.0 - eta;
      lam[1] = xi;
      lam[2] = eta - xi;
    }
    for (int c = 0; c < 2; ++c)
      for (int v = 0; v < 3; ++v) u_fine[2 * p + c] += lam[v] * u_coarse[2 * nodes[v] + c];
  }
  return u_fine;
}

double true_error(const Mesh& coarse, const Eigen::VectorXd& u_coarse, const Reference& ref,
                  const HookeTensor& hooke) {
  const Eigen::VectorXd diff = prolongate(coarse, ref.mesh, u_coarse) - ref.u;
  return std::sqrt(strain_energy_sq(ref.mesh, diff, hooke));
}

void export_report_json(const EstimateReport& report, const std::string& path) {
  nlohmann::json j;
  j["e_cr_global"] = report.e_cr_global;
  j["per_subdomain"] = report.per_subdomain;
  j["iteration"] = report.iteration;
  j["residual"] = report.residual;
  j["method"] = report.method;
  if (report.e_h) j["e_h"] = *report.e_h;
  if (report.effectivity) j["effectivity"] = *report.effectivity;
  std::ofstream(path) << j.dump(2) << "\n";
}

void export_element_map_csv(const Mesh& mesh, const EstimateReport& report,
                            const std::string& path) {
  std::ofstream f(path);
  f << "elem_id,centroid_x,centroid_y,contribution\n";
  for (const auto& [t, e2] : report.per_element) {
    const Eigen::Vector2d c = mesh.tri_centroid(t);
    f << t << "," << c.x() << "," << c.y() << "," << e2 << "\n";
  }
}

}  // namespace ddv
