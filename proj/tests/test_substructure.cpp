// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

namespace {

struct Setup {
  ddv::Mesh mesh;
  ddv::Partition partition;
  ddv::HookeTensor hooke;
  ddv::LoadSpec loads;
  std::vector<ddv::Subdomain> subs;
  ddv::AssemblyOperators ops;
};

Setup make_setup(int m, int nsd) {
  Setup s;
  s.mesh = ddv::build_gamma_mesh(m, 1.0);
  s.partition = ddv::partition_mesh(s.mesh, nsd);
  s.hooke = ddv::hooke_plane_stress(2000.0, 0.3);
  s.loads.traction = Eigen::Vector2d(1.0, 1.0);
  s.subs = ddv::build_subdomains(s.mesh, s.partition, s.hooke, s.loads);
  s.ops = ddv::build_assembly_operators(ddv::interface_layout(s.mesh, s.partition, s.subs));
  return s;
}

}  // namespace

TEST_CASE("subdomains tile the mesh and agree with the interface operators") {
  const Setup s = make_setup(4, 4);
  int elems = 0;
  for (const auto& sub : s.subs) elems += static_cast<int>(sub.elems.size());
  CHECK(elems == s.mesh.num_triangles());

  for (int sd = 0; sd < s.ops.nsd; ++sd)
    CHECK(static_cast<int>(s.ops.local_to_primal[sd].size()) == s.subs[sd].n_boundary);

  // Every primal dof belongs to an interface node shared by its owners.
  for (int p = 0; p < s.ops.n_primal; ++p) {
    const int entity = s.ops.primal_entity[p];
    const int node = entity / 2;
    CHECK(s.partition.is_interface_node(node));
    CHECK(static_cast<int>(s.ops.owners[p].size()) == s.partition.multiplicity(node));
  }
}

TEST_CASE("rigid body modes appear exactly on floating subdomains") {
  const Setup s = make_setup(4, 6);
  std::vector<char> touches_base(s.partition.nsd, 0);
  for (const auto& be : s.mesh.boundary_edges)
    if (be.tag == ddv::EdgeTag::DirichletBase) touches_base[s.partition.elem_owner[be.tri]] = 1;

  for (const auto& sub : s.subs) {
    CAPTURE(sub.id);
    if (touches_base[sub.id]) {
      CHECK(sub.num_modes() == 0);
    } else {
      CHECK(sub.num_modes() == 3);
      // Kernel: K R = 0, orthonormal columns.
      CHECK((Eigen::MatrixXd(sub.K) * sub.R).norm() < 1e-8 * Eigen::MatrixXd(sub.K).norm());
      CHECK((sub.R.transpose() * sub.R - Eigen::Matrix3d::Identity()).norm() < 1e-10);
    }
  }
}

TEST_CASE("Schur complement action matches the dense elimination") {
  const Setup s = make_setup(2, 2);
  for (const auto& sub : s.subs) {
    const Eigen::MatrixXd K = Eigen::MatrixXd(sub.K);
    const int ni = sub.n_interior, nb = sub.n_boundary;
    const Eigen::MatrixXd S =
        K.bottomRightCorner(nb, nb) -
        K.bottomLeftCorner(nb, ni) * K.topLeftCorner(ni, ni).llt().solve(K.topRightCorner(ni, nb));
    for (int j = 0; j < nb; ++j) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(nb, j);
      CHECK((sub.schur_apply(e) - S.col(j)).norm() < 1e-8 * std::max(1.0, S.col(j).norm()));
    }
    // Condensed right-hand side against the dense formula.
    const Eigen::VectorXd bc =
        sub.f.tail(nb) - K.bottomLeftCorner(nb, ni) * K.topLeftCorner(ni, ni).llt().solve(
                             Eigen::VectorXd(sub.f.head(ni)));
    CHECK((sub.condensed_rhs() - bc).norm() < 1e-8 * std::max(1.0, bc.norm()));
  }
}

TEST_CASE("pseudo-inverse solves balanced systems and rejects unbalanced ones") {
  const Setup s = make_setup(4, 6);
  for (const auto& sub : s.subs) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Random(sub.num_free());
    if (sub.num_modes() > 0) rhs -= sub.R * (sub.R.transpose() * rhs);  // balance

    const Eigen::VectorXd x = sub.pseudo_inverse_apply(rhs);
    CHECK((sub.K * x - rhs).norm() < 1e-8 * std::max(1.0, rhs.norm()));

    if (sub.num_modes() > 0) {
      const Eigen::VectorXd bad = rhs + sub.R.col(0);
      CHECK_THROWS(sub.pseudo_inverse_apply(bad));
    }
  }
}

TEST_CASE("boundary Schur pseudo-inverse inverts on balanced traces") {
  const Setup s = make_setup(4, 6);
  for (const auto& sub : s.subs) {
    if (sub.n_boundary == 0) continue;
    Eigen::VectorXd mu = Eigen::VectorXd::Random(sub.n_boundary);
    if (sub.num_modes() > 0) mu -= sub.R_b * (sub.R_b.transpose() * sub.R_b)
                                                 .ldlt()
                                                 .solve(sub.R_b.transpose() * mu);
    const Eigen::VectorXd y = sub.schur_pseudo_inverse_apply(mu);
    CHECK((sub.schur_apply(y) - mu).norm() < 1e-7 * std::max(1.0, mu.norm()));
  }
}

TEST_CASE("interface layout entities are boundary nodes in local order") {
  const Setup s = make_setup(2, 3);
  const auto layout = ddv::interface_layout(s.mesh, s.partition, s.subs);
  for (int sd = 0; sd < s.partition.nsd; ++sd) {
    REQUIRE(static_cast<int>(layout.local_boundary_entities[sd].size()) ==
            s.subs[sd].n_boundary);
    for (int lb = 0; lb < s.subs[sd].n_boundary; ++lb) {
      const int entity = layout.local_boundary_entities[sd][lb];
      const int local_dof = s.subs[sd].local_of_free[s.subs[sd].n_interior + lb];
      const int node = s.subs[sd].nodes[local_dof / 2];
      CHECK(entity == 2 * node + local_dof % 2);
    }
  }
}

TEST_CASE("reduction counter counts assemblies only") {
  const Setup s = make_setup(2, 2);
  ddv::ReductionCounter::reset();

  std::vector<Eigen::VectorXd> v(s.ops.nsd);
  for (int sd = 0; sd < s.ops.nsd; ++sd) v[sd] = Eigen::VectorXd::Zero(s.subs[sd].n_boundary);
  (void)s.ops.assemble_primal(v);
  (void)s.ops.assemble_dual(v);
  CHECK(ddv::ReductionCounter::count() == 2);

  (void)s.ops.scatter_primal({Eigen::VectorXd::Zero(s.ops.n_primal)}, 0);
  (void)s.ops.scatter_dual({Eigen::VectorXd::Zero(s.ops.n_dual())}, 0);
  (void)s.ops.dual_decompose(v);
  CHECK(ddv::ReductionCounter::count() == 2);  // scatters and splits are local
}
