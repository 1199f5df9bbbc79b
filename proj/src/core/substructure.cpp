// SPDX-License-Identifier: Apache-2.0
#include "core/substructure.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace ddv {

std::atomic<long>& ReductionCounter::count() {
  static std::atomic<long> c{0};
  return c;
}

struct Subdomain::Factorizations {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> K_ii;
  // Pseudo-inverse: K with `pinned` dofs removed (empty when non-floating).
  std::vector<int> pinned;
  std::vector<int> reduced_index;  // free dof -> reduced index or -1
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> K_pinned;
  double K_norm = 0.0;
};

Eigen::VectorXd Subdomain::interior_solve(const Eigen::VectorXd& rhs_i) const {
  if (n_interior == 0) return Eigen::VectorXd();
  return fact->K_ii.solve(rhs_i);
}

Eigen::VectorXd Subdomain::schur_apply(const Eigen::VectorXd& x_b) const {
  Eigen::VectorXd out = K_bb * x_b;
  if (n_interior > 0) {
    const Eigen::VectorXd w = fact->K_ii.solve(K_ib * x_b);
    out.noalias() -= K_ib.transpose() * w;
  }
  return out;
}

const Eigen::VectorXd& Subdomain::condensed_rhs() const {
  if (condensed_rhs_cache.size() == 0) {
    condensed_rhs_cache = f.tail(n_boundary);
    if (n_interior > 0)
      condensed_rhs_cache -= K_ib.transpose() * fact->K_ii.solve(f.head(n_interior));
  }
  return condensed_rhs_cache;
}

Eigen::VectorXd Subdomain::pseudo_inverse_apply(const Eigen::VectorXd& rhs, double fredholm_tol,
                                                bool deflate) const {
  Eigen::VectorXd balanced = rhs;
  if (num_modes() > 0) {
    if (deflate) {
      balanced -= R * (R.transpose() * rhs);  // R has orthonormal columns
    } else {
      const double imbalance = (R.transpose() * rhs).norm();
      if (imbalance > fredholm_tol * std::max(rhs.norm(), 1.0))
        throw std::runtime_error("pseudo_inverse_apply: Fredholm condition violated");
    }
  }
  const auto& fx = *fact;
  if (fx.pinned.empty()) return fx.K_pinned.solve(balanced);
  Eigen::VectorXd reduced(num_free() - static_cast<int>(fx.pinned.size()));
  for (int i = 0; i < num_free(); ++i)
    if (fx.reduced_index[i] >= 0) reduced[fx.reduced_index[i]] = balanced[i];
  const Eigen::VectorXd sol = fx.K_pinned.solve(reduced);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(num_free());
  for (int i = 0; i < num_free(); ++i)
    if (fx.reduced_index[i] >= 0) out[i] = sol[fx.reduced_index[i]];
  return out;
}

Eigen::VectorXd Subdomain::schur_pseudo_inverse_apply(const Eigen::VectorXd& mu_b,
                                                      double fredholm_tol, bool deflate) const {
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(num_free());
  rhs.tail(n_boundary) = mu_b;
  return boundary_block(pseudo_inverse_apply(rhs, fredholm_tol, deflate));
}

Eigen::VectorXd Subdomain::expand(const Eigen::VectorXd& free_vec) const {
  Eigen::VectorXd full = dirichlet_values;
  for (int i = 0; i < num_free(); ++i) full[local_of_free[i]] = free_vec[i];
  return full;
}

namespace {

void dirichlet_data(const Mesh& mesh, const LoadSpec& loads, std::vector<char>& flags,
                    Eigen::VectorXd& values) {
  flags.assign(mesh.num_dofs(), 0);
  values = Eigen::VectorXd::Zero(mesh.num_dofs());
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag != EdgeTag::DirichletBase) continue;
    for (int node : {e.n0, e.n1}) {
      const Eigen::Vector2d u0 =
          loads.dirichlet ? loads.dirichlet(mesh.nodes[node]) : Eigen::Vector2d::Zero();
      for (int c = 0; c < 2; ++c) {
        flags[2 * node + c] = 1;
        values[2 * node + c] = u0[c];
      }
    }
  }
}

Eigen::MatrixXd kernel_basis(const Subdomain& sub, const Mesh& mesh,
                             const std::vector<char>& global_dirichlet) {
  const int nn = static_cast<int>(sub.nodes.size());
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (int n : sub.nodes) centroid += mesh.nodes[n];
  centroid /= nn;

  // Rigid candidates on all local dofs: tx, ty, rotation about the centroid.
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2 * nn, 3);
  for (int ln = 0; ln < nn; ++ln) {
    const Eigen::Vector2d d = mesh.nodes[sub.nodes[ln]] - centroid;
    Z(2 * ln, 0) = 1.0;
    Z(2 * ln + 1, 1) = 1.0;
    Z(2 * ln, 2) = -d.y();
    Z(2 * ln + 1, 2) = d.x();
  }
  std::vector<int> constrained;
  for (int ln = 0; ln < nn; ++ln)
    for (int c = 0; c < 2; ++c)
      if (global_dirichlet[2 * sub.nodes[ln] + c]) constrained.push_back(2 * ln + c);

  Eigen::MatrixXd combos;  // 3 x k, combinations vanishing on constrained dofs
  if (constrained.empty()) {
    combos = Eigen::MatrixXd::Identity(3, 3);
  } else {
    Eigen::MatrixXd C(constrained.size(), 3);
    for (size_t r = 0; r < constrained.size(); ++r) C.row(r) = Z.row(constrained[r]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++rank;
    combos = svd.matrixV().rightCols(3 - rank);
  }
  if (combos.cols() == 0) return Eigen::MatrixXd(sub.num_free(), 0);

  Eigen::MatrixXd Rfree(sub.num_free(), combos.cols());
  const Eigen::MatrixXd Zc = Z * combos;
  for (int i = 0; i < sub.num_free(); ++i) Rfree.row(i) = Zc.row(sub.local_of_free[i]);
  // Orthonormalize.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Rfree);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(sub.num_free(), combos.cols());
  return Q;
}

}  // namespace

std::vector<Subdomain> build_subdomains(const Mesh& mesh, const Partition& partition,
                                        const HookeTensor& hooke, const LoadSpec& loads) {
  std::vector<char> dir_flags;
  Eigen::VectorXd dir_values;
  dirichlet_data(mesh, loads, dir_flags, dir_values);

  std::vector<Subdomain> subs(partition.nsd);
  for (int s = 0; s < partition.nsd; ++s) subs[s].id = s;
  for (int t = 0; t < mesh.num_triangles(); ++t) subs[partition.elem_owner[t]].elems.push_back(t);

  for (auto& sub : subs) {
    if (sub.elems.empty()) throw std::invalid_argument("build_subdomains: empty subdomain");
    std::set<int> node_set;
    for (int t : sub.elems)
      for (int n : mesh.triangles[t]) node_set.insert(n);
    sub.nodes.assign(node_set.begin(), node_set.end());
    for (int ln = 0; ln < static_cast<int>(sub.nodes.size()); ++ln)
      sub.node_local[sub.nodes[ln]] = ln;

    const int n_local = 2 * static_cast<int>(sub.nodes.size());
    sub.free_of_local.assign(n_local, -1);
    sub.dirichlet_values = Eigen::VectorXd::Zero(n_local);

    // Free dofs: interior first, then boundary, each sorted by global dof
    // (nodes are ascending, so local order matches global order).
    std::vector<int> interior, boundary;
    for (int ln = 0; ln < static_cast<int>(sub.nodes.size()); ++ln) {
      const int gn = sub.nodes[ln];
      for (int c = 0; c < 2; ++c) {
        const int ld = 2 * ln + c;
        if (dir_flags[2 * gn + c]) {
          sub.dirichlet_values[ld] = dir_values[2 * gn + c];
        } else if (partition.is_interface_node(gn)) {
          boundary.push_back(ld);
        } else {
          interior.push_back(ld);
        }
      }
    }
    sub.n_interior = static_cast<int>(interior.size());
    sub.n_boundary = static_cast<int>(boundary.size());
    sub.local_of_free = interior;
    sub.local_of_free.insert(sub.local_of_free.end(), boundary.begin(), boundary.end());
    for (int i = 0; i < sub.num_free(); ++i) sub.free_of_local[sub.local_of_free[i]] = i;

    // Local assembly.
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd f_local = Eigen::VectorXd::Zero(n_local);
    std::vector<Eigen::Triplet<double>> full_trips;
    for (int t : sub.elems) {
      const TriGeometry geo(mesh, t);
      const auto Ke = element_stiffness(geo, hooke);
      const auto& tri = mesh.triangles[t];
      int ldofs[6];
      for (int k = 0; k < 3; ++k) {
        const int ln = sub.node_local.at(tri[k]);
        ldofs[2 * k] = 2 * ln;
        ldofs[2 * k + 1] = 2 * ln + 1;
      }
      for (int a = 0; a < 6; ++a) {
        f_local[ldofs[a]] += geo.area / 3.0 * loads.body[a % 2];
        for (int b = 0; b < 6; ++b) full_trips.emplace_back(ldofs[a], ldofs[b], Ke(a, b));
      }
    }
    for (const auto& e : mesh.boundary_edges) {
      if (e.tag != EdgeTag::NeumannLoad || partition.elem_owner[e.tri] != sub.id) continue;
      const double len = (mesh.nodes[e.n1] - mesh.nodes[e.n0]).norm();
      for (int node : {e.n0, e.n1})
        for (int c = 0; c < 2; ++c)
          f_local[2 * sub.node_local.at(node) + c] += 0.5 * len * loads.traction[c];
    }
    Eigen::SparseMatrix<double> K_full(n_local, n_local);
    K_full.setFromTriplets(full_trips.begin(), full_trips.end());

    // Eliminate Dirichlet dofs (with value lifting).
    sub.f = Eigen::VectorXd::Zero(sub.num_free());
    for (int i = 0; i < sub.num_free(); ++i) sub.f[i] = f_local[sub.local_of_free[i]];
    trips.clear();
    for (int col = 0; col < n_local; ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(K_full, col); it; ++it) {
        const int fr = sub.free_of_local[static_cast<int>(it.row())];
        if (fr < 0) continue;
        const int fc = sub.free_of_local[col];
        if (fc >= 0)
          trips.emplace_back(fr, fc, it.value());
        else
          sub.f[fr] -= it.value() * sub.dirichlet_values[col];
      }
    }
    sub.K.resize(sub.num_free(), sub.num_free());
    sub.K.setFromTriplets(trips.begin(), trips.end());

    // Blocks.
    std::vector<Eigen::Triplet<double>> ib, bb;
    for (int col = 0; col < sub.num_free(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(sub.K, col); it; ++it) {
        const int r = static_cast<int>(it.row());
        if (col >= sub.n_interior) {
          if (r < sub.n_interior)
            ib.emplace_back(r, col - sub.n_interior, it.value());
          else
            bb.emplace_back(r - sub.n_interior, col - sub.n_interior, it.value());
        }
      }
    }
    sub.K_ib.resize(sub.n_interior, sub.n_boundary);
    sub.K_ib.setFromTriplets(ib.begin(), ib.end());
    sub.K_bb.resize(sub.n_boundary, sub.n_boundary);
    sub.K_bb.setFromTriplets(bb.begin(), bb.end());

    sub.fact = std::make_shared<Subdomain::Factorizations>();
    auto& fx = *sub.fact;
    if (sub.n_interior > 0) {
      Eigen::SparseMatrix<double> K_ii = sub.K.topLeftCorner(sub.n_interior, sub.n_interior);
      fx.K_ii.compute(K_ii);
      if (fx.K_ii.info() != Eigen::Success)
        throw std::runtime_error("build_subdomains: K_ii factorization failed");
    }
    fx.K_norm = sub.K.norm();

    // Kernel and residual filter.
    Eigen::MatrixXd R0 = kernel_basis(sub, mesh, dir_flags);
    std::vector<int> keep;
    for (int c = 0; c < R0.cols(); ++c)
      if ((sub.K * R0.col(c)).norm() <= 1e-8 * fx.K_norm * R0.col(c).norm()) keep.push_back(c);
    sub.R.resize(sub.num_free(), keep.size());
    for (size_t c = 0; c < keep.size(); ++c) sub.R.col(c) = R0.col(keep[c]);
    sub.R_b = sub.R.bottomRows(sub.n_boundary);

    // Pseudo-inverse: pin one well-chosen dof per kernel mode.
    if (sub.num_modes() > 0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub.R.transpose());
      const auto& perm = qr.colsPermutation().indices();
      for (int k = 0; k < sub.num_modes(); ++k) fx.pinned.push_back(perm[k]);
      std::sort(fx.pinned.begin(), fx.pinned.end());
      fx.reduced_index.assign(sub.num_free(), -1);
      int r = 0;
      size_t p = 0;
      for (int i = 0; i < sub.num_free(); ++i) {
        if (p < fx.pinned.size() && fx.pinned[p] == i)
          ++p;
        else
          fx.reduced_index[i] = r++;
      }
      std::vector<Eigen::Triplet<double>> red;
      for (int col = 0; col < sub.num_free(); ++col) {
        if (fx.reduced_index[col] < 0) continue;
        for (Eigen::SparseMatrix<double>::InnerIterator it(sub.K, col); it; ++it) {
          const int rr = fx.reduced_index[static_cast<int>(it.row())];
          if (rr >= 0) red.emplace_back(rr, fx.reduced_index[col], it.value());
        }
      }
      Eigen::SparseMatrix<double> K_red(r, r);
      K_red.setFromTriplets(red.begin(), red.end());
      fx.K_pinned.compute(K_red);
    } else {
      fx.K_pinned.compute(sub.K);
    }
    if (fx.K_pinned.info() != Eigen::Success)
      throw std::runtime_error("build_subdomains: pinned factorization failed");
  }
  return subs;
}

InterfaceLayout interface_layout(const Mesh&, const Partition& partition,
                                 const std::vector<Subdomain>& subs) {
  InterfaceLayout layout;
  layout.local_boundary_entities.resize(subs.size());
  for (const auto& sub : subs) {
    auto& ents = layout.local_boundary_entities[sub.id];
    ents.reserve(sub.n_boundary);
    for (int b = 0; b < sub.n_boundary; ++b) {
      const int ld = sub.local_of_free[sub.n_interior + b];
      ents.push_back(2 * sub.nodes[ld / 2] + ld % 2);
    }
  }
  (void)partition;
  return layout;
}

AssemblyOperators build_assembly_operators(const InterfaceLayout& layout) {
  AssemblyOperators ops;
  ops.nsd = static_cast<int>(layout.local_boundary_entities.size());

  std::map<int, int> entity_to_primal;
  for (const auto& ents : layout.local_boundary_entities)
    for (int e : ents) entity_to_primal[e] = 0;
  for (auto& [e, p] : entity_to_primal) {
    p = ops.n_primal++;
    ops.primal_entity.push_back(e);
  }

  ops.local_to_primal.resize(ops.nsd);
  ops.owners.assign(ops.n_primal, {});
  for (int s = 0; s < ops.nsd; ++s) {
    const auto& ents = layout.local_boundary_entities[s];
    ops.local_to_primal[s].resize(ents.size());
    for (size_t lb = 0; lb < ents.size(); ++lb) {
      const int p = entity_to_primal.at(ents[lb]);
      ops.local_to_primal[s][lb] = p;
      ops.owners[p].emplace_back(s, static_cast<int>(lb));
    }
  }
  ops.multiplicity.resize(ops.n_primal);
  for (int p = 0; p < ops.n_primal; ++p) {
    std::sort(ops.owners[p].begin(), ops.owners[p].end());
    ops.multiplicity[p] = static_cast<double>(ops.owners[p].size());
  }

  // Dual connections: per primal dof, one per subdomain pair, ordered by the
  // global first-occurrence rank of the pair.
  std::map<std::pair<int, int>, int> pair_rank;
  ops.primal_connections.assign(ops.n_primal, {});
  for (int p = 0; p < ops.n_primal; ++p) {
    const auto& own = ops.owners[p];
    std::vector<std::pair<int, std::pair<int, int>>> pairs;  // (rank, (i,j) owner slots)
    for (size_t i = 0; i < own.size(); ++i)
      for (size_t j = i + 1; j < own.size(); ++j) {
        const auto key = std::make_pair(own[i].first, own[j].first);
        auto [it, inserted] = pair_rank.try_emplace(key, static_cast<int>(pair_rank.size()));
        pairs.push_back({it->second, {static_cast<int>(i), static_cast<int>(j)}});
      }
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [rank, ij] : pairs) {
      AssemblyOperators::Connection c;
      c.primal = p;
      c.s_pos = own[ij.first].first;
      c.lb_pos = own[ij.first].second;
      c.s_neg = own[ij.second].first;
      c.lb_neg = own[ij.second].second;
      ops.primal_connections[p].push_back(static_cast<int>(ops.connections.size()));
      ops.connections.push_back(c);
    }
  }

  // Per-primal pseudo-inverse of the connection Gram (dual multiplicity
  // scaling; redundant cross-point connections make the Gram singular).
  ops.dual_scale_block.resize(ops.n_primal);
  for (int p = 0; p < ops.n_primal; ++p) {
    const auto& conns = ops.primal_connections[p];
    const int nc = static_cast<int>(conns.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nc, nc);
    for (int a = 0; a < nc; ++a)
      for (int b = 0; b < nc; ++b) {
        const auto& ca = ops.connections[conns[a]];
        const auto& cb = ops.connections[conns[b]];
        double dot = 0.0;
        auto sign = [](const AssemblyOperators::Connection& c, int s) {
          return s == c.s_pos ? 1.0 : (s == c.s_neg ? -1.0 : 0.0);
        };
        for (int s : {ca.s_pos, ca.s_neg}) dot += sign(ca, s) * sign(cb, s);
        G(a, b) = dot;
      }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    Eigen::VectorXd inv = es.eigenvalues();
    const double cutoff = 1e-10 * std::max(1.0, inv.cwiseAbs().maxCoeff());
    for (int i = 0; i < inv.size(); ++i) inv[i] = (inv[i] > cutoff) ? 1.0 / inv[i] : 0.0;
    ops.dual_scale_block[p] =
        es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  }
  return ops;
}

PrimalVector AssemblyOperators::assemble_primal(const std::vector<Eigen::VectorXd>& local_b) const {
  ReductionCounter::bump();
  PrimalVector out{Eigen::VectorXd::Zero(n_primal)};
  for (int p = 0; p < n_primal; ++p)
    for (const auto& [s, lb] : owners[p]) out.v[p] += local_b[s][lb];
  return out;
}

DualVector AssemblyOperators::assemble_dual(const std::vector<Eigen::VectorXd>& local_b) const {
  ReductionCounter::bump();
  DualVector out{Eigen::VectorXd::Zero(n_dual())};
  for (int c = 0; c < n_dual(); ++c) {
    const auto& con = connections[c];
    out.v[c] = local_b[con.s_pos][con.lb_pos] - local_b[con.s_neg][con.lb_neg];
  }
  return out;
}

Eigen::VectorXd AssemblyOperators::scatter_primal(const PrimalVector& x, int s) const {
  const auto& map = local_to_primal[s];
  Eigen::VectorXd out(map.size());
  for (size_t lb = 0; lb < map.size(); ++lb) out[lb] = x.v[map[lb]];
  return out;
}

Eigen::VectorXd AssemblyOperators::scatter_primal_scaled(const PrimalVector& x, int s) const {
  const auto& map = local_to_primal[s];
  Eigen::VectorXd out(map.size());
  for (size_t lb = 0; lb < map.size(); ++lb) out[lb] = x.v[map[lb]] / multiplicity[map[lb]];
  return out;
}

Eigen::VectorXd AssemblyOperators::scatter_dual(const DualVector& mu, int s) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(local_to_primal[s].size());
  for (int c = 0; c < n_dual(); ++c) {
    const auto& con = connections[c];
    if (con.s_pos == s) out[con.lb_pos] += mu.v[c];
    if (con.s_neg == s) out[con.lb_neg] -= mu.v[c];
  }
  return out;
}

DualVector AssemblyOperators::dual_scale(const DualVector& mu) const {
  DualVector scaled{Eigen::VectorXd::Zero(n_dual())};
  for (int p = 0; p < n_primal; ++p) {
    const auto& conns = primal_connections[p];
    if (conns.empty()) continue;
    Eigen::VectorXd block(conns.size());
    for (size_t i = 0; i < conns.size(); ++i) block[i] = mu.v[conns[i]];
    block = dual_scale_block[p] * block;
    for (size_t i = 0; i < conns.size(); ++i) scaled.v[conns[i]] = block[i];
  }
  return scaled;
}

Eigen::VectorXd AssemblyOperators::scatter_dual_scaled(const DualVector& mu, int s) const {
  return scatter_dual(dual_scale(mu), s);
}

DualVector AssemblyOperators::dual_decompose(const std::vector<Eigen::VectorXd>& local_b) const {
  DualVector mu{Eigen::VectorXd::Zero(n_dual())};
  for (int c = 0; c < n_dual(); ++c) {
    const auto& con = connections[c];
    mu.v[c] = (local_b[con.s_pos][con.lb_pos] - local_b[con.s_neg][con.lb_neg]) /
              multiplicity[con.primal];
  }
  return mu;
}

Eigen::MatrixXd AssemblyOperators::dense_primal(int s) const {
  const auto& map = local_to_primal[s];
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_primal, map.size());
  for (size_t lb = 0; lb < map.size(); ++lb) A(map[lb], lb) = 1.0;
  return A;
}

Eigen::MatrixXd AssemblyOperators::dense_dual(int s) const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_dual(), local_to_primal[s].size());
  for (int c = 0; c < n_dual(); ++c) {
    const auto& con = connections[c];
    if (con.s_pos == s) A(c, con.lb_pos) = 1.0;
    if (con.s_neg == s) A(c, con.lb_neg) = -1.0;
  }
  return A;
}

Eigen::MatrixXd dense_trace(int n, const std::vector<int>& selected) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(selected.size(), n);
  for (size_t r = 0; r < selected.size(); ++r) T(r, selected[r]) = 1.0;
  return T;
}

void export_operators_csv(const AssemblyOperators& ops, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::string& name, const Eigen::MatrixXd& M, int s) {
    std::ofstream f(dir + "/" + name + "_" + std::to_string(s) + ".csv");
    for (int r = 0; r < M.rows(); ++r) {
      for (int c = 0; c < M.cols(); ++c) f << (c ? "," : "") << M(r, c);
      f << "\n";
    }
  };
  for (int s = 0; s < ops.nsd; ++s) {
    dump("A", ops.dense_primal(s), s);
    dump("Abar", ops.dense_dual(s), s);
  }
}

}  // namespace ddv
