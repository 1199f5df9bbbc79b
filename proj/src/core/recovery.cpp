// SPDX-License-Identifier: Apache-2.0
#include "core/recovery.hpp"

#include <algorithm>
#include <optional>
#include <queue>

#include "core/quadrature.hpp"

namespace ddv {

namespace {

/// Index of `node` within triangle t, or -1.
int slot_of(const Mesh& mesh, int t, int node) {
  const auto& tri = mesh.triangles[t];
  for (int k = 0; k < 3; ++k)
    if (tri[k] == node) return k;
  return -1;
}

int primal_of_entity(const AssemblyOperators& ops, int entity) {
  const auto it =
      std::lower_bound(ops.primal_entity.begin(), ops.primal_entity.end(), entity);
  if (it == ops.primal_entity.end() || *it != entity) return -1;
  return static_cast<int>(it - ops.primal_entity.begin());
}

int connection_of_pair(const AssemblyOperators& ops, int primal, int s_pos, int s_neg) {
  for (int c : ops.primal_connections[primal]) {
    const auto& con = ops.connections[c];
    if (con.s_pos == s_pos && con.s_neg == s_neg) return c;
  }
  return -1;
}

InterfaceChains build_chains(const Mesh& mesh, const Partition& partition,
                             const AssemblyOperators& ops) {
  InterfaceChains out;
  const auto nbrs = triangle_neighbors(mesh);

  // Interface mesh edges grouped by subdomain pair.
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> pair_edges;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int t2 = nbrs[t][k];
      if (t2 < 0 || t2 < t) continue;
      const int a = partition.elem_owner[t], b = partition.elem_owner[t2];
      if (a == b) continue;
      const auto key = std::minmax(a, b);
      pair_edges[key].push_back(std::minmax(tri[k], tri[(k + 1) % 3]));
    }
  }

  for (const auto& [pair, edges] : pair_edges) {
    std::map<int, std::vector<int>> incident;  // node -> edge ids
    for (size_t e = 0; e < edges.size(); ++e) {
      incident[edges[e].first].push_back(static_cast<int>(e));
      incident[edges[e].second].push_back(static_cast<int>(e));
    }
    for (const auto& [node, inc] : incident)
      if (inc.size() > 2)
        throw std::runtime_error("build_chains: unsupported interface junction at node " +
                                 std::to_string(node));

    std::vector<char> used(edges.size(), 0);
    for (size_t e0 = 0; e0 < edges.size(); ++e0) {
      if (used[e0]) continue;
      // Component of e0 (BFS over shared nodes), then its endpoint if any.
      std::vector<char> in_comp(edges.size(), 0);
      std::map<int, int> degree;
      {
        std::queue<int> q;
        q.push(static_cast<int>(e0));
        in_comp[e0] = 1;
        while (!q.empty()) {
          const int e = q.front();
          q.pop();
          ++degree[edges[e].first];
          ++degree[edges[e].second];
          for (int n : {edges[e].first, edges[e].second})
            for (int e2 : incident[n])
              if (!in_comp[e2]) {
                in_comp[e2] = 1;
                q.push(e2);
              }
        }
      }
      int start = edges[e0].first;
      for (const auto& [node, deg] : degree)
        if (deg == 1) start = node;
      InterfaceChains::Chain chain;
      chain.s_pos = pair.first;
      chain.s_neg = pair.second;
      chain.nodes.push_back(start);
      int prev_edge = -1, cur = start;
      while (true) {
        int next_edge = -1;
        for (int e : incident[cur])
          if (e != prev_edge && !used[e]) next_edge = e;
        if (next_edge < 0) break;
        used[next_edge] = 1;
        const int nxt =
            (edges[next_edge].first == cur) ? edges[next_edge].second : edges[next_edge].first;
        chain.lengths.push_back((mesh.nodes[nxt] - mesh.nodes[cur]).norm());
        if (nxt == start) {
          chain.cyclic = true;
          break;
        }
        chain.nodes.push_back(nxt);
        prev_edge = next_edge;
        cur = nxt;
      }
      chain.conn.resize(chain.nodes.size());
      for (size_t i = 0; i < chain.nodes.size(); ++i) {
        for (int c = 0; c < 2; ++c) {
          const int p = primal_of_entity(ops, 2 * chain.nodes[i] + c);
          chain.conn[i][c] =
              (p < 0) ? -1 : connection_of_pair(ops, p, chain.s_pos, chain.s_neg);
          if (p >= 0 && chain.conn[i][c] < 0)
            throw std::runtime_error("build_chains: missing dual connection");
        }
      }
      out.chains.push_back(std::move(chain));
    }
  }
  return out;
}

SubdomainEdges build_subdomain_edges(const Mesh& mesh, const Partition& partition,
                                     const Subdomain& sub, const LoadSpec& loads) {
  SubdomainEdges out;
  const auto nbrs = triangle_neighbors(mesh);
  std::map<std::pair<int, int>, EdgeTag> boundary_tag;
  for (const auto& e : mesh.boundary_edges) boundary_tag[std::minmax(e.n0, e.n1)] = e.tag;

  for (int t : sub.elems) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const auto key = std::minmax(tri[k], tri[(k + 1) % 3]);
      auto [it, inserted] = out.index.try_emplace(key, static_cast<int>(out.edges.size()));
      if (inserted) {
        SubdomainEdges::EdgeRec rec;
        rec.n0 = key.first;
        rec.n1 = key.second;
        rec.e_lo = t;
        rec.len = (mesh.nodes[rec.n1] - mesh.nodes[rec.n0]).norm();
        out.edges.push_back(rec);
      } else {
        auto& rec = out.edges[it->second];
        rec.e_hi = std::max(rec.e_lo, t);
        rec.e_lo = std::min(rec.e_lo, t);
      }
    }
  }
  for (auto& rec : out.edges) {
    if (rec.e_hi >= 0) {
      rec.kind = SubdomainEdges::Interior;
    } else {
      // One in-subdomain element: interface or outer boundary.
      int other = -1;
      const int t = rec.e_lo;
      const auto& tri = mesh.triangles[t];
      for (int k = 0; k < 3; ++k) {
        const std::pair<int, int> key = std::minmax(tri[k], tri[(k + 1) % 3]);
        if (key == std::make_pair(rec.n0, rec.n1)) other = nbrs[t][k];
      }
      if (other >= 0 && partition.elem_owner[other] != sub.id) {
        rec.kind = SubdomainEdges::Interface;
      } else {
        const EdgeTag tag = boundary_tag.at({rec.n0, rec.n1});
        if (tag == EdgeTag::DirichletBase) {
          rec.kind = SubdomainEdges::Dirichlet;
        } else {
          rec.kind = SubdomainEdges::Outer;
          const Eigen::Vector2d g =
              (tag == EdgeTag::NeumannLoad) ? loads.traction : Eigen::Vector2d::Zero();
          rec.g0 = rec.g1 = g;
        }
      }
    }
    // Outward normal of e_lo on this edge.
    const Eigen::Vector2d ev = mesh.nodes[rec.n1] - mesh.nodes[rec.n0];
    Eigen::Vector2d n(ev.y(), -ev.x());
    n.normalize();
    const Eigen::Vector2d mid = 0.5 * (mesh.nodes[rec.n0] + mesh.nodes[rec.n1]);
    if (n.dot(mesh.tri_centroid(rec.e_lo) - mid) > 0.0) n = -n;
    rec.normal_lo = n;
  }
  return out;
}

/// Constant Voigt stress of each of the subdomain's elements for a full local
/// displacement vector.
std::map<int, Eigen::Vector3d> element_stresses(const Mesh& mesh, const Subdomain& sub,
                                                const HookeTensor& hooke,
                                                const Eigen::VectorXd& u_full) {
  std::map<int, Eigen::Vector3d> out;
  for (int t : sub.elems) {
    const TriGeometry geo(mesh, t);
    const auto B = strain_matrix_p1(geo);
    Eigen::Matrix<double, 6, 1> ue;
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int ln = sub.node_local.at(tri[k]);
      ue[2 * k] = u_full[2 * ln];
      ue[2 * k + 1] = u_full[2 * ln + 1];
    }
    out[t] = hooke.C * (B * ue);
  }
  return out;
}

/// Nodal reaction of the local equilibrium at a (possibly constrained) node:
/// sum over this subdomain's elements of the internal virtual work minus body
/// and prescribed outer-boundary loads. Equals the interface+clamp reaction.
Eigen::Vector2d nodal_reaction(const RecoveryContext& ctx, int s,
                               const std::map<int, Eigen::Vector3d>& sig, int node) {
  const Subdomain& sub = ctx.subs[s];
  Eigen::Vector2d rho = Eigen::Vector2d::Zero();
  for (int t : sub.elems) {
    const int k = slot_of(ctx.mesh, t, node);
    if (k < 0) continue;
    const TriGeometry geo(ctx.mesh, t);
    const auto B = strain_matrix_p1(geo);
    for (int c = 0; c < 2; ++c)
      rho[c] += geo.area * sig.at(t).dot(B.col(2 * k + c)) -
                geo.area / 3.0 * ctx.loads.body[c];
    // Prescribed outer tractions at this node (each outer edge has exactly
    // one adjacent element, so no double counting).
    const auto& tri = ctx.mesh.triangles[t];
    for (int kk = 0; kk < 3; ++kk) {
      const auto key = std::minmax(tri[kk], tri[(kk + 1) % 3]);
      if (key.first != node && key.second != node) continue;
      const auto& rec = ctx.edges[s].edges[ctx.edges[s].index.at(key)];
      if (rec.kind != SubdomainEdges::Outer || rec.e_lo != t) continue;
      const Eigen::Vector2d& gj = (rec.n0 == node) ? rec.g0 : rec.g1;
      const Eigen::Vector2d& go = (rec.n0 == node) ? rec.g1 : rec.g0;
      rho -= rec.len * (gj / 3.0 + go / 6.0);
    }
  }
  return rho;
}

/// Moment the chain edge's traction must take at a clamped chain node, seen
/// from subdomain s, or nullopt when the subdomain's edge fan at the node
/// ends in a Dirichlet edge whose unknown moment can absorb any value. The
/// fan is walked element by element away from the chain edge; interior edges
/// pass the requirement along, an outer edge closes it.
std::optional<double> forced_endpoint_moment(const RecoveryContext& ctx, int s,
                                             const std::map<int, Eigen::Vector3d>& sig,
                                             int node, std::pair<int, int> chain_edge,
                                             int comp) {
  const SubdomainEdges& se = ctx.edges[s];
  const Mesh& mesh = ctx.mesh;
  int prev = se.index.at(chain_edge);
  int cur = se.edges[prev].e_lo;
  double total = 0.0, sign = 1.0;
  for (size_t guard = 0; guard <= se.edges.size(); ++guard) {
    const TriGeometry geo(mesh, cur);
    const auto B = strain_matrix_p1(geo);
    const int k = slot_of(mesh, cur, node);
    total += sign * (geo.area * sig.at(cur).dot(B.col(2 * k + comp)) -
                     geo.area / 3.0 * ctx.loads.body[comp]);
    int next = -1;
    const auto& tri = mesh.triangles[cur];
    for (int kk = 0; kk < 3; ++kk) {
      const auto key = std::minmax(tri[kk], tri[(kk + 1) % 3]);
      if (key.first != node && key.second != node) continue;
      const int e = se.index.at(key);
      if (e == prev) continue;
      next = e;
    }
    const auto& rec = se.edges[next];
    if (rec.kind == SubdomainEdges::Dirichlet) return std::nullopt;
    if (rec.kind == SubdomainEdges::Interface) return std::nullopt;  // other chain's end
    if (rec.kind == SubdomainEdges::Outer) {
      const Eigen::Vector2d& gj = (rec.n0 == node) ? rec.g0 : rec.g1;
      const Eigen::Vector2d& go = (rec.n0 == node) ? rec.g1 : rec.g0;
      total -= sign * rec.len * (gj[comp] / 3.0 + go[comp] / 6.0);
      return total;
    }
    cur = (rec.e_lo == cur) ? rec.e_hi : rec.e_lo;
    prev = next;
    sign = -sign;
  }
  throw AdmissibilityError("forced_endpoint_moment: fan walk did not terminate");
}

}  // namespace

RecoveryContext make_recovery_context(const Mesh& mesh, const Partition& partition,
                                      const std::vector<Subdomain>& subs,
                                      const AssemblyOperators& ops, const HookeTensor& hooke,
                                      const LoadSpec& loads) {
  RecoveryContext ctx{mesh, partition, subs, ops, hooke, loads, {}, {}};
  ctx.chains = build_chains(mesh, partition, ops);
  ctx.edges.reserve(subs.size());
  for (const auto& sub : subs)
    ctx.edges.push_back(build_subdomain_edges(mesh, partition, sub, loads));
  return ctx;
}

NodalPair recover_nodal_pair(const SolverState& state, const std::vector<Subdomain>& subs,
                             const AssemblyOperators& ops) {
  const int nsd = ops.nsd;
  NodalPair pair;
  pair.u_hat_b.resize(nsd);
  pair.lambda_hat.resize(nsd);
  if (state.method == Method::BDD) {
    PrimalVector defect{state.imbalance};
    for (int s = 0; s < nsd; ++s) {
      pair.u_hat_b[s] = state.u_b[s];
      pair.lambda_hat[s] = state.lambda_b[s];
      if (defect.v.size() > 0) pair.lambda_hat[s] -= ops.scatter_primal_scaled(defect, s);
      // Fredholm: the rebalanced Neumann problem must be solvable.
      if (subs[s].num_modes() > 0) {
        const Eigen::VectorXd rhs = pair.lambda_hat[s] + subs[s].condensed_rhs();
        const double imb = (subs[s].R_b.transpose() * rhs).norm();
        if (imb > 1e-8 * std::max(1.0, rhs.norm()))
          throw AdmissibilityError("recover_nodal_pair: unbalanced reactions (subdomain " +
                                   std::to_string(s) + ")");
      }
    }
  } else {
    DualVector gap{state.imbalance};
    for (int s = 0; s < nsd; ++s) {
      pair.lambda_hat[s] = state.lambda_b[s];
      pair.u_hat_b[s] = state.u_b[s];
      if (gap.v.size() > 0) pair.u_hat_b[s] -= ops.scatter_dual_scaled(gap, s);
    }
  }
  return pair;
}

Eigen::VectorXd ka_internal_solve(const Subdomain& sub, const Eigen::VectorXd& u_hat_b) {
  Eigen::VectorXd u(sub.num_free());
  if (sub.n_interior > 0) {
    Eigen::VectorXd rhs = sub.f.head(sub.n_interior);
    if (sub.n_boundary > 0) rhs -= sub.K_ib * u_hat_b;
    u.head(sub.n_interior) = sub.interior_solve(rhs);
  }
  u.tail(sub.n_boundary) = u_hat_b;
  return u;
}

Eigen::VectorXd sa_local_displacement(const Subdomain& sub, const Eigen::VectorXd& lambda_hat) {
  Eigen::VectorXd rhs = sub.f;
  rhs.tail(sub.n_boundary) += lambda_hat;
  try {
    return sub.pseudo_inverse_apply(rhs);
  } catch (const std::runtime_error& e) {
    throw AdmissibilityError(std::string("sa_local_displacement: ") + e.what());
  }
}

std::vector<EdgeTractions> lift_traction_gh(const RecoveryContext& ctx, const NodalPair& pair,
                                            const std::vector<Eigen::VectorXd>& u_tilde) {
  const int nsd = ctx.ops.nsd;
  std::vector<EdgeTractions> out(nsd);
  if (ctx.chains.chains.empty()) return out;

  // Reaction split restricted to connections carried by an interface chain:
  // only pairs sharing mesh edges can transport a nodal reaction as an edge
  // traction. Vertex-only neighbour pairs get a zero share and the remaining
  // shares are resolved per interface dof in the least-squares sense.
  std::vector<char> supported(ctx.ops.n_dual(), 0);
  for (const auto& chain : ctx.chains.chains)
    for (const auto& cc : chain.conn)
      for (int c : {0, 1})
        if (cc[c] >= 0) supported[cc[c]] = 1;

  DualVector split{Eigen::VectorXd::Zero(ctx.ops.n_dual())};
  for (int p = 0; p < ctx.ops.n_primal; ++p) {
    const auto& owners = ctx.ops.owners[p];
    std::vector<int> sup;
    for (int c : ctx.ops.primal_connections[p])
      if (supported[c]) sup.push_back(c);
    const int no = static_cast<int>(owners.size());
    const int nc = static_cast<int>(sup.size());
    Eigen::VectorXd lam(no);
    for (int i = 0; i < no; ++i)
      lam[i] = pair.lambda_hat[owners[i].first][owners[i].second];
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(no, nc);
    for (int j = 0; j < nc; ++j) {
      const auto& con = ctx.ops.connections[sup[j]];
      for (int i = 0; i < no; ++i) {
        if (owners[i].first == con.s_pos) B(i, j) += 1.0;
        if (owners[i].first == con.s_neg) B(i, j) -= 1.0;
      }
    }
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(nc);
    if (nc > 0) mu = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(B).solve(lam);
    if ((B * mu - lam).norm() > 1e-8 * std::max(1.0, lam.norm()))
      throw AdmissibilityError(
          "lift_traction_gh: reactions not representable on the interface edges (dof " +
          std::to_string(p) + ")");
    for (int j = 0; j < nc; ++j) split.v[sup[j]] = mu[j];
  }

  // Element stresses (for constrained-endpoint reaction splits), lazily.
  std::vector<std::map<int, Eigen::Vector3d>> sig(nsd);
  auto stresses = [&](int s) -> const std::map<int, Eigen::Vector3d>& {
    if (sig[s].empty())
      sig[s] = element_stresses(ctx.mesh, ctx.subs[s], ctx.hooke,
                                ctx.subs[s].expand(u_tilde[s]));
    return sig[s];
  };

  for (const auto& chain : ctx.chains.chains) {
    const int K = static_cast<int>(chain.nodes.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, K);
    auto add_edge = [&](int i, int j, double len) {
      M(i, i) += len / 3.0;
      M(j, j) += len / 3.0;
      M(i, j) += len / 6.0;
      M(j, i) += len / 6.0;
    };
    for (int i = 0; i + 1 < K; ++i) add_edge(i, i + 1, chain.lengths[i]);
    if (chain.cyclic) add_edge(K - 1, 0, chain.lengths[K - 1]);

    Eigen::MatrixXd rhs(K, 2);
    for (int i = 0; i < K; ++i) {
      const int node = chain.nodes[i];
      for (int c = 0; c < 2; ++c) {
        if (chain.conn[i][c] >= 0) {
          rhs(i, c) = split.v[chain.conn[i][c]];
        } else {
          // Clamped chain node: when a side's edge fan at the node has no
          // Dirichlet edge left to absorb an imbalance, the moment is forced
          // to that side's fan residual; otherwise both sides have slack and
          // the antisymmetric split of the nodal reactions is used.
          std::optional<std::pair<int, int>> edge;
          if (!chain.cyclic && i == 0 && K > 1)
            edge = std::minmax(chain.nodes[0], chain.nodes[1]);
          else if (!chain.cyclic && i == K - 1 && K > 1)
            edge = std::minmax(chain.nodes[K - 2], chain.nodes[K - 1]);
          std::optional<double> vp, vn;
          if (edge) {
            vp = forced_endpoint_moment(ctx, chain.s_pos, stresses(chain.s_pos), node, *edge, c);
            vn = forced_endpoint_moment(ctx, chain.s_neg, stresses(chain.s_neg), node, *edge, c);
          }
          if (vp && vn) {
            if (std::abs(*vp + *vn) > 1e-6 * std::max(1.0, std::abs(*vp)))
              throw AdmissibilityError(
                  "lift_traction_gh: conflicting clamped-end moments at node " +
                  std::to_string(node));
            rhs(i, c) = *vp;
          } else if (vp) {
            rhs(i, c) = *vp;
          } else if (vn) {
            rhs(i, c) = -*vn;
          } else {
            const double mult = static_cast<double>(ctx.partition.node_owners[node].size());
            const Eigen::Vector2d rp =
                nodal_reaction(ctx, chain.s_pos, stresses(chain.s_pos), node);
            const Eigen::Vector2d rn =
                nodal_reaction(ctx, chain.s_neg, stresses(chain.s_neg), node);
            rhs(i, c) = (rp[c] - rn[c]) / mult;
          }
        }
      }
    }
    const Eigen::MatrixXd F = M.ldlt().solve(rhs);

    auto emit = [&](int i, int j, int ni, int nj) {
      const auto key = std::minmax(ni, nj);
      std::array<Eigen::Vector2d, 2> vals;
      const int i0 = (key.first == ni) ? i : j;
      const int i1 = (key.first == ni) ? j : i;
      vals[0] = F.row(i0).transpose();
      vals[1] = F.row(i1).transpose();
      out[chain.s_pos][key] = vals;
      out[chain.s_neg][key] = {-vals[0], -vals[1]};
    };
    for (int i = 0; i + 1 < K; ++i) emit(i, i + 1, chain.nodes[i], chain.nodes[i + 1]);
    if (chain.cyclic) emit(K - 1, 0, chain.nodes[K - 1], chain.nodes[0]);
  }
  return out;
}

void eet_equilibrate(const RecoveryContext& ctx, int s, const Eigen::VectorXd& u_tilde_full,
                     const EdgeTractions& interface_tractions, ElementStressField& sigma) {
  const Mesh& mesh = ctx.mesh;
  const Subdomain& sub = ctx.subs[s];
  const SubdomainEdges& se = ctx.edges[s];
  const int ne = static_cast<int>(se.edges.size());

  const auto sig = element_stresses(mesh, sub, ctx.hooke, u_tilde_full);

  // Prescribed nodal tractions per edge; moments for unknown edges.
  std::vector<std::array<Eigen::Vector2d, 2>> presc(ne);
  std::vector<char> unknown(ne, 0);
  std::vector<std::array<Eigen::Vector2d, 2>> moments(
      ne, {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()});
  for (int e = 0; e < ne; ++e) {
    const auto& rec = se.edges[e];
    if (rec.kind == SubdomainEdges::Interior || rec.kind == SubdomainEdges::Dirichlet) {
      unknown[e] = 1;
    } else if (rec.kind == SubdomainEdges::Outer) {
      presc[e] = {rec.g0, rec.g1};
    } else {
      presc[e] = interface_tractions.at({rec.n0, rec.n1});
    }
  }

  // Star patches.
  std::map<int, std::vector<int>> star;       // global node -> elems
  std::map<int, std::vector<int>> node_edge;  // global node -> edge ids
  for (int t : sub.elems)
    for (int n : mesh.triangles[t]) star[n].push_back(t);
  for (int e = 0; e < ne; ++e) {
    node_edge[se.edges[e].n0].push_back(e);
    node_edge[se.edges[e].n1].push_back(e);
  }

  for (const auto& [node, elems] : star) {
    std::vector<int> unk;
    for (int e : node_edge[node])
      if (unknown[e]) unk.push_back(e);
    const int nr = static_cast<int>(elems.size());
    const int nc = static_cast<int>(unk.size());

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nr, nc);
    Eigen::MatrixXd q(nr, 2);
    Eigen::MatrixXd bbar(nc, 2);
    for (int col = 0; col < nc; ++col) {
      const auto& rec = se.edges[unk[col]];
      const Eigen::Vector3d sbar = (rec.kind == SubdomainEdges::Interior)
                                       ? Eigen::Vector3d(0.5 * (sig.at(rec.e_lo) + sig.at(rec.e_hi)))
                                       : sig.at(rec.e_lo);
      const Eigen::Vector2d trac(
          sbar[0] * rec.normal_lo.x() + sbar[2] * rec.normal_lo.y(),
          sbar[2] * rec.normal_lo.x() + sbar[1] * rec.normal_lo.y());
      bbar.row(col) = (0.5 * rec.len * trac).transpose();
    }
    for (int row = 0; row < nr; ++row) {
      const int t = elems[row];
      const TriGeometry geo(mesh, t);
      const auto Bm = strain_matrix_p1(geo);
      const int k = slot_of(mesh, t, node);
      for (int c = 0; c < 2; ++c)
        q(row, c) = geo.area * sig.at(t).dot(Bm.col(2 * k + c)) -
                    geo.area / 3.0 * ctx.loads.body[c];
      const auto& tri = mesh.triangles[t];
      for (int kk = 0; kk < 3; ++kk) {
        const auto key = std::minmax(tri[kk], tri[(kk + 1) % 3]);
        if (key.first != node && key.second != node) continue;
        const int e = se.index.at(key);
        const auto& rec = se.edges[e];
        if (unknown[e]) {
          const int col = static_cast<int>(std::find(unk.begin(), unk.end(), e) - unk.begin());
          B(row, col) += (t == rec.e_lo) ? 1.0 : -1.0;
        } else {
          const Eigen::Vector2d& gj = (rec.n0 == node) ? presc[e][0] : presc[e][1];
          const Eigen::Vector2d& go = (rec.n0 == node) ? presc[e][1] : presc[e][0];
          q.row(row) -= (rec.len * (gj / 3.0 + go / 6.0)).transpose();
        }
      }
    }
    const Eigen::MatrixXd rhs = q - B * bbar;
    Eigen::MatrixXd X;
    if (nc > 0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(B);
      X = cod.solve(rhs);
    } else {
      X.resize(0, 2);
    }
    const double scale = std::max(1.0, q.norm());
    if ((B * X - rhs).norm() > 1e-8 * scale)
      throw AdmissibilityError("eet_equilibrate: incompatible star patch at node " +
                               std::to_string(node) + " (subdomain " + std::to_string(s) + ")");
    for (int col = 0; col < nc; ++col) {
      const int e = unk[col];
      const int slot = (se.edges[e].n0 == node) ? 0 : 1;
      moments[e][slot] = bbar.row(col).transpose() + X.row(col).transpose();
    }
  }

  // Edge moments -> linear nodal tractions (2x2 mass inverse).
  std::vector<std::array<Eigen::Vector2d, 2>> trac(ne);
  for (int e = 0; e < ne; ++e) {
    if (!unknown[e]) {
      trac[e] = presc[e];
      continue;
    }
    const double len = se.edges[e].len;
    trac[e][0] = (4.0 * moments[e][0] - 2.0 * moments[e][1]) / len;
    trac[e][1] = (-2.0 * moments[e][0] + 4.0 * moments[e][1]) / len;
  }

  // Degree-4 local Neumann problems.
  const auto& vol_rule = triangle_rule(8);
  const auto& edge_rule = line_rule(10);
  constexpr int nb = P4Basis::kSize;
  for (int t : sub.elems) {
    const TriGeometry geo(mesh, t);
    Eigen::MatrixXd K4 = Eigen::MatrixXd::Zero(2 * nb, 2 * nb);
    Eigen::VectorXd F4 = Eigen::VectorXd::Zero(2 * nb);
    for (int qp = 0; qp < vol_rule.size(); ++qp) {
      const Eigen::Vector3d lam(1.0 - vol_rule.points(0, qp) - vol_rule.points(1, qp),
                                vol_rule.points(0, qp), vol_rule.points(1, qp));
      const auto G = P4Basis::gradients(lam, geo.grad_lambda);
      Eigen::MatrixXd E(3, 2 * nb);  // Voigt strains of the 30 basis fields
      for (int k = 0; k < nb; ++k) {
        E.col(2 * k) = Eigen::Vector3d(G(0, k), 0.0, G(1, k));
        E.col(2 * k + 1) = Eigen::Vector3d(0.0, G(1, k), G(0, k));
      }
      const double w = 2.0 * geo.area * vol_rule.weights[qp];
      K4 += w * E.transpose() * ctx.hooke.C * E;
      const auto vals = P4Basis::values(lam);
      for (int k = 0; k < nb; ++k)
        for (int c = 0; c < 2; ++c) F4[2 * k + c] += w * vals[k] * ctx.loads.body[c];
    }
    const auto& tri = mesh.triangles[t];
    for (int kk = 0; kk < 3; ++kk) {
      const auto key = std::minmax(tri[kk], tri[(kk + 1) % 3]);
      const auto& rec = se.edges[se.index.at(key)];
      const double sign = (unknown[se.index.at(key)] && t == rec.e_hi) ? -1.0 : 1.0;
      const auto& tr = trac[se.index.at(key)];
      const int s0 = slot_of(mesh, t, rec.n0), s1 = slot_of(mesh, t, rec.n1);
      for (int qp = 0; qp < edge_rule.size(); ++qp) {
        const double x = edge_rule.points[qp];
        Eigen::Vector3d lam = Eigen::Vector3d::Zero();
        lam[s0] = 1.0 - x;
        lam[s1] = x;
        const Eigen::Vector2d T = sign * ((1.0 - x) * tr[0] + x * tr[1]);
        const auto vals = P4Basis::values(lam);
        const double w = rec.len * edge_rule.weights[qp];
        for (int k = 0; k < nb; ++k)
          for (int c = 0; c < 2; ++c) F4[2 * k + c] += w * vals[k] * T[c];
      }
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K4);
    const Eigen::VectorXd u4 = cod.solve(F4);
    // The local Neumann problem is solvable only when the edge tractions and
    // body load balance this element; the residual is that imbalance.
    if ((K4 * u4 - F4).norm() > 1e-8 * std::max(1.0, F4.norm()))
      throw AdmissibilityError("eet_equilibrate: unbalanced element " + std::to_string(t) +
                               " (subdomain " + std::to_string(s) + ")");

    // Fit C eps(u4) (degree 3) in the degree-4 basis by lattice evaluation.
    Eigen::Matrix<double, nb, 3> S;
    for (int i = 0; i < nb; ++i) {
      const auto G = P4Basis::gradients(P4Basis::lattice()[i], geo.grad_lambda);
      Eigen::Vector3d eps = Eigen::Vector3d::Zero();
      for (int k = 0; k < nb; ++k) {
        eps[0] += u4[2 * k] * G(0, k);
        eps[1] += u4[2 * k + 1] * G(1, k);
        eps[2] += u4[2 * k] * G(1, k) + u4[2 * k + 1] * G(0, k);
      }
      S.row(i) = (ctx.hooke.C * eps).transpose();
    }
    sigma.coeffs[t] = S.transpose() * P4Basis::vandermonde_inv().transpose();
  }
}

RecoveredFields recover_admissible_pair(const RecoveryContext& ctx, const SolverState& state) {
  const int nsd = ctx.ops.nsd;
  RecoveredFields out;
  out.pair = recover_nodal_pair(state, ctx.subs, ctx.ops);
  out.u_hat.resize(nsd);
  out.u_tilde.resize(nsd);
  for (int s = 0; s < nsd; ++s) {
    out.u_hat[s] = ka_internal_solve(ctx.subs[s], out.pair.u_hat_b[s]);
    out.u_tilde[s] = sa_local_displacement(ctx.subs[s], out.pair.lambda_hat[s]);
  }
  out.tractions = lift_traction_gh(ctx, out.pair, out.u_tilde);
  out.sigma_hat.coeffs.resize(ctx.mesh.num_triangles());
  for (int s = 0; s < nsd; ++s)
    eet_equilibrate(ctx, s, ctx.subs[s].expand(out.u_tilde[s]), out.tractions[s], out.sigma_hat);
  return out;
}

}  // namespace ddv
