// SPDX-License-Identifier: Apache-2.0
#include "core/solvers.hpp"

#include <fstream>

namespace ddv {

std::string method_name(Method m) { return m == Method::BDD ? "bdd" : "feti"; }

namespace {

int default_max_iter(int n) { return std::max(10, 3 * n); }

/// Full reorthogonalization: p = z - sum_j (z . Sp_j)/(p_j . Sp_j) p_j.
Eigen::VectorXd reorthogonalize(const Eigen::VectorXd& z,
                                const std::vector<Eigen::VectorXd>& dirs,
                                const std::vector<Eigen::VectorXd>& op_dirs,
                                const std::vector<double>& curvatures) {
  Eigen::VectorXd p = z;
  for (size_t j = 0; j < dirs.size(); ++j)
    p -= (z.dot(op_dirs[j]) / curvatures[j]) * dirs[j];
  return p;
}

}  // namespace

SolverState bdd_solve(const std::vector<Subdomain>& subs, const AssemblyOperators& ops,
                      const SolverOptions& opt, const IterationHook& hook) {
  const int n = ops.n_primal;
  const int nsd = ops.nsd;

  auto apply_S = [&](const Eigen::VectorXd& x) {
    std::vector<Eigen::VectorXd> loc(nsd);
    PrimalVector px{x};
    for (int s = 0; s < nsd; ++s) loc[s] = subs[s].schur_apply(ops.scatter_primal(px, s));
    return ops.assemble_primal(loc).v;
  };

  std::vector<Eigen::VectorXd> rhs_loc(nsd);
  for (int s = 0; s < nsd; ++s) rhs_loc[s] = subs[s].condensed_rhs();

  SolverState state;
  state.method = Method::BDD;
  if (n == 0) {
    state.u_b.resize(nsd);
    state.lambda_b.resize(nsd);
    for (int s = 0; s < nsd; ++s) {
      state.u_b[s] = Eigen::VectorXd();
      state.lambda_b[s] = Eigen::VectorXd();
    }
    state.history = {{0, 0.0}};
    if (hook) hook(state);
    return state;
  }
  const Eigen::VectorXd b = ops.assemble_primal(rhs_loc).v;

  // Coarse space: columns A~^(s) R_b^(s).
  int n_coarse = 0;
  for (const auto& sub : subs) n_coarse += sub.num_modes();
  Eigen::MatrixXd C(n, n_coarse), SC(n, n_coarse);
  {
    int col = 0;
    for (int s = 0; s < nsd; ++s) {
      for (int k = 0; k < subs[s].num_modes(); ++k, ++col) {
        C.col(col).setZero();
        for (int lb = 0; lb < subs[s].n_boundary; ++lb) {
          const int p = ops.local_to_primal[s][lb];
          C(p, col) += subs[s].R_b(lb, k) / ops.multiplicity[p];
        }
      }
    }
    for (int c = 0; c < n_coarse; ++c) SC.col(c) = apply_S(C.col(c));
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> coarse;
  if (n_coarse > 0) coarse.compute(C.transpose() * SC);

  auto coarse_solve = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    if (n_coarse == 0) return Eigen::VectorXd::Zero(n_coarse);
    return coarse.solve(v);
  };

  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  if (n_coarse > 0) u = C * coarse_solve(C.transpose() * b);
  Eigen::VectorXd r = b - apply_S(u);
  // Residuals are reported relative to the traction imbalance of the zero
  // initial guess, keeping the normalization independent of the coarse
  // initialization.
  const double r0 = b.norm();

  // Neumann-Neumann preconditioner followed by the balancing projection.
  auto precondition = [&](const Eigen::VectorXd& res) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    PrimalVector pr{res};
    for (int s = 0; s < nsd; ++s) {
      const Eigen::VectorXd w = ops.scatter_primal_scaled(pr, s);
      const Eigen::VectorXd y = subs[s].schur_pseudo_inverse_apply(w, 1e-8, /*deflate=*/true);
      for (int lb = 0; lb < subs[s].n_boundary; ++lb) {
        const int p = ops.local_to_primal[s][lb];
        z[p] += y[lb] / ops.multiplicity[p];
      }
    }
    if (n_coarse > 0) z -= C * coarse_solve(SC.transpose() * z);
    return z;
  };

  auto make_state = [&](int iter, double rel, double rel_pre) {
    state.iteration = iter;
    state.residual = rel;
    state.residual_pre = rel_pre;
    state.iterate = u;
    state.imbalance = -r;  // assembled traction imbalance
    state.u_b.resize(nsd);
    state.lambda_b.resize(nsd);
    PrimalVector pu{u};
    for (int s = 0; s < nsd; ++s) {
      state.u_b[s] = ops.scatter_primal(pu, s);
      state.lambda_b[s] = subs[s].schur_apply(state.u_b[s]) - rhs_loc[s];
    }
  };

  const int max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(n);
  std::vector<Eigen::VectorXd> dirs, op_dirs;
  std::vector<double> curvatures;
  double e0 = 0.0;
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd z = precondition(r);
    const double energy = std::sqrt(std::max(r.dot(z), 0.0));
    if (iter == 0) e0 = energy;
    const double rel = (r0 == 0.0) ? 0.0 : r.norm() / r0;
    const double rel_pre = (e0 == 0.0) ? 0.0 : energy / e0;
    state.history.emplace_back(iter, rel);
    if (hook) {
      make_state(iter, rel, rel_pre);
      hook(state);
    }
    if (rel <= opt.tol) {
      make_state(iter, rel, rel_pre);
      return state;
    }
    if (iter >= max_iter)
      throw NonConvergence("bdd_solve: no convergence after " + std::to_string(max_iter) +
                               " iterations",
                           state.history);

    Eigen::VectorXd p = reorthogonalize(z, dirs, op_dirs, curvatures);
    const Eigen::VectorXd Sp = apply_S(p);
    const double curv = p.dot(Sp);
    if (curv <= 0.0)
      throw NonConvergence("bdd_solve: loss of positive definiteness", state.history);
    const double alpha = p.dot(r) / curv;
    u += alpha * p;
    r -= alpha * Sp;
    dirs.push_back(std::move(p));
    op_dirs.push_back(Sp);
    curvatures.push_back(curv);
  }
}

SolverState feti_solve(const std::vector<Subdomain>& subs, const AssemblyOperators& ops,
                       const SolverOptions& opt, const IterationHook& hook) {
  const int nd = ops.n_dual();
  const int nsd = ops.nsd;

  SolverState state;
  state.method = Method::FETI;
  if (nd == 0) {
    state.u_b.resize(nsd);
    state.lambda_b.resize(nsd);
    state.history = {{0, 0.0}};
    if (hook) hook(state);
    return state;
  }

  // Local solve at multiplier lambda: K u = f + t^T Abar^T lambda.
  auto local_disp = [&](const DualVector& lambda, int s) {
    Eigen::VectorXd rhs = subs[s].f;
    rhs.tail(subs[s].n_boundary) += ops.scatter_dual(lambda, s);
    return subs[s].pseudo_inverse_apply(rhs, 1e-8, /*deflate=*/true);
  };
  // Displacement gap at lambda (affine in lambda; Fredholm needs G^T lambda = -e).
  auto gap = [&](const DualVector& lambda) {
    std::vector<Eigen::VectorXd> tr(nsd);
    for (int s = 0; s < nsd; ++s) tr[s] = subs[s].boundary_block(local_disp(lambda, s));
    return ops.assemble_dual(tr).v;
  };
  // Linear part: F p (requires G^T p = 0).
  auto apply_F = [&](const Eigen::VectorXd& p) {
    std::vector<Eigen::VectorXd> tr(nsd);
    DualVector dp{p};
    for (int s = 0; s < nsd; ++s) {
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(subs[s].num_free());
      rhs.tail(subs[s].n_boundary) = ops.scatter_dual(dp, s);
      tr[s] = subs[s].boundary_block(subs[s].pseudo_inverse_apply(rhs, 1e-8, /*deflate=*/true));
    }
    return ops.assemble_dual(tr).v;
  };

  // Natural coarse grid G = [Abar^(s) t^(s) R^(s)], e = [R^T f].
  int n_coarse = 0;
  for (const auto& sub : subs) n_coarse += sub.num_modes();
  Eigen::MatrixXd G(nd, n_coarse);
  Eigen::VectorXd e(n_coarse);
  {
    int col = 0;
    for (int s = 0; s < nsd; ++s) {
      const Eigen::MatrixXd Abar = ops.dense_dual(s);
      for (int k = 0; k < subs[s].num_modes(); ++k, ++col) {
        G.col(col) = Abar * subs[s].R_b.col(k);
        e[col] = subs[s].R.col(k).dot(subs[s].f);
      }
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> gram;
  if (n_coarse > 0) gram.compute(G.transpose() * G);
  auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    if (n_coarse == 0) return v;
    return v - G * gram.solve(G.transpose() * v);
  };

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nd);
  if (n_coarse > 0) lambda = -G * gram.solve(e);

  Eigen::VectorXd g_raw = gap(DualVector{lambda});
  Eigen::VectorXd r = -project(g_raw);
  const double r0 = r.norm();

  // Dirichlet preconditioner: Abar~ t S t^T Abar~^T, re-projected.
  auto precondition = [&](const Eigen::VectorXd& res) {
    std::vector<Eigen::VectorXd> loc(nsd);
    DualVector dr{res};
    for (int s = 0; s < nsd; ++s) loc[s] = subs[s].schur_apply(ops.scatter_dual_scaled(dr, s));
    return Eigen::VectorXd(project(ops.dual_scale(ops.assemble_dual(loc)).v));
  };

  auto make_state = [&](int iter, double rel, double rel_pre) {
    state.iteration = iter;
    state.residual = rel;
    state.residual_pre = rel_pre;
    state.iterate = lambda;
    state.u_b.resize(nsd);
    state.lambda_b.resize(nsd);
    DualVector dl{lambda};
    for (int s = 0; s < nsd; ++s) {
      state.lambda_b[s] = ops.scatter_dual(dl, s);
      state.u_b[s] = subs[s].boundary_block(local_disp(dl, s));
    }
    // Rigid-body amplitudes that close the gap in the least-squares sense;
    // what remains of the jump after this correction is the projected gap.
    state.imbalance = g_raw;
    if (n_coarse > 0) {
      const Eigen::VectorXd alpha = -gram.solve(G.transpose() * g_raw);
      state.imbalance += G * alpha;
      int col = 0;
      for (int s = 0; s < nsd; ++s)
        for (int k = 0; k < subs[s].num_modes(); ++k, ++col)
          state.u_b[s] += alpha[col] * subs[s].R_b.col(k);
    }
  };

  const int max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(nd);
  std::vector<Eigen::VectorXd> dirs, op_dirs;
  std::vector<double> curvatures;
  double e0 = 0.0;
  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd z = precondition(r);
    const double energy = std::sqrt(std::max(r.dot(z), 0.0));
    if (iter == 0) e0 = energy;
    const double rel = (r0 == 0.0) ? 0.0 : r.norm() / r0;
    const double rel_pre = (e0 == 0.0) ? 0.0 : energy / e0;
    state.history.emplace_back(iter, rel);
    if (hook) {
      make_state(iter, rel, rel_pre);
      hook(state);
    }
    if (rel <= opt.tol) {
      make_state(iter, rel, rel_pre);
      return state;
    }
    if (iter >= max_iter)
      throw NonConvergence("feti_solve: no convergence after " + std::to_string(max_iter) +
                               " iterations",
                           state.history);

    Eigen::VectorXd p = reorthogonalize(z, dirs, op_dirs, curvatures);
    const Eigen::VectorXd Fp = apply_F(p);
    const Eigen::VectorXd PFp = project(Fp);
    const double curv = p.dot(PFp);
    if (curv <= 0.0)
      throw NonConvergence("feti_solve: loss of positive definiteness", state.history);
    const double alpha = p.dot(r) / curv;
    lambda += alpha * p;
    g_raw += alpha * Fp;
    r -= alpha * PFp;
    dirs.push_back(std::move(p));
    op_dirs.push_back(PFp);
    curvatures.push_back(curv);
  }
}

SolverState interface_solve(Method method, const std::vector<Subdomain>& subs,
                            const AssemblyOperators& ops, const SolverOptions& opt,
                            const IterationHook& hook) {
  return method == Method::BDD ? bdd_solve(subs, ops, opt, hook)
                               : feti_solve(subs, ops, opt, hook);
}

void export_history_csv(const SolverState& state, const std::string& path) {
  std::ofstream f(path);
  f << "method,iteration,residual\n";
  for (const auto& [n, r] : state.history)
    f << method_name(state.method) << "," << n << "," << r << "\n";
}

}  // namespace ddv
