// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "core/mesh.hpp"

using ddv::EdgeTag;

TEST_CASE("L-shaped mesh has the expected counts and size") {
  for (int m : {1, 2, 4, 8}) {
    CAPTURE(m);
    const ddv::Mesh mesh = ddv::build_gamma_mesh(m, 1.0);
    CHECK(mesh.num_nodes() == (2 * m + 1) * (2 * m + 1) - m * m);
    CHECK(mesh.num_triangles() == 6 * m * m);
    CHECK(mesh.h == doctest::Approx(1.0 / m));

    int base = 0, load = 0, boundary = static_cast<int>(mesh.boundary_edges.size());
    for (const auto& be : mesh.boundary_edges) {
      if (be.tag == EdgeTag::DirichletBase) ++base;
      if (be.tag == EdgeTag::NeumannLoad) ++load;
    }
    CHECK(base == m);
    CHECK(load == m);
    CHECK(boundary == 8 * m);  // outline length 8L in units of h = L/m
  }
}

TEST_CASE("triangles are counter-clockwise with area h^2/2") {
  const ddv::Mesh mesh = ddv::build_gamma_mesh(3, 2.0);
  const double h = 2.0 / 3.0;
  double total = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    CHECK(mesh.tri_area(t) == doctest::Approx(0.5 * h * h));
    total += mesh.tri_area(t);
  }
  CHECK(total == doctest::Approx(3.0 * 2.0 * 2.0));  // |domain| = 3 L^2
}

TEST_CASE("boundary tags sit on the right geometry") {
  const double L = 1.5;
  const ddv::Mesh mesh = ddv::build_gamma_mesh(4, L);
  for (const auto& be : mesh.boundary_edges) {
    const auto& a = mesh.nodes[be.n0];
    const auto& b = mesh.nodes[be.n1];
    if (be.tag == EdgeTag::DirichletBase) {
      CHECK(a.y() == doctest::Approx(0.0));
      CHECK(b.y() == doctest::Approx(0.0));
      CHECK(std::max(a.x(), b.x()) <= L + 1e-12);
    }
    if (be.tag == EdgeTag::NeumannLoad) {
      CHECK(a.x() == doctest::Approx(2.0 * L));
      CHECK(b.x() == doctest::Approx(2.0 * L));
      CHECK(std::min(a.y(), b.y()) >= L - 1e-12);
    }
  }
}

TEST_CASE("rectangular mesh is fully clamped") {
  const ddv::Mesh mesh = ddv::build_rect_mesh(3, 2, 3.0, 2.0);
  CHECK(mesh.num_nodes() == 4 * 3);
  CHECK(mesh.num_triangles() == 2 * 3 * 2);
  CHECK(mesh.boundary_edges.size() == 2 * (3 + 2));
  for (const auto& be : mesh.boundary_edges) CHECK(be.tag == EdgeTag::DirichletBase);
}

TEST_CASE("partition covers elements and subdomains are edge-connected") {
  const ddv::Mesh mesh = ddv::build_gamma_mesh(4, 1.0);
  const auto neighbors = ddv::triangle_neighbors(mesh);
  for (int nsd : {1, 2, 3, 5, 8, 16}) {
    CAPTURE(nsd);
    const ddv::Partition part = ddv::partition_mesh(mesh, nsd);
    CHECK(part.nsd == nsd);

    std::vector<int> count(nsd, 0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      REQUIRE(part.elem_owner[t] >= 0);
      REQUIRE(part.elem_owner[t] < nsd);
      ++count[part.elem_owner[t]];
    }
    for (int s = 0; s < nsd; ++s) CHECK(count[s] > 0);

    // Edge-connectivity: flood fill per subdomain reaches all its elements.
    for (int s = 0; s < nsd; ++s) {
      int seed = -1;
      for (int t = 0; t < mesh.num_triangles(); ++t)
        if (part.elem_owner[t] == s) {
          seed = t;
          break;
        }
      std::set<int> seen{seed};
      std::vector<int> stack{seed};
      while (!stack.empty()) {
        const int t = stack.back();
        stack.pop_back();
        for (int nb : neighbors[t])
          if (nb >= 0 && part.elem_owner[nb] == s && seen.insert(nb).second)
            stack.push_back(nb);
      }
      CHECK(static_cast<int>(seen.size()) == count[s]);
    }

    // Node ownership matches element ownership.
    for (int t = 0; t < mesh.num_triangles(); ++t)
      for (int n : mesh.triangles[t]) {
        const auto& owners = part.node_owners[n];
        CHECK(std::find(owners.begin(), owners.end(), part.elem_owner[t]) != owners.end());
      }
  }
}

TEST_CASE("partitioning is deterministic") {
  const ddv::Mesh mesh = ddv::build_gamma_mesh(8, 1.0);
  const auto a = ddv::partition_mesh(mesh, 8);
  const auto b = ddv::partition_mesh(mesh, 8);
  CHECK(a.elem_owner == b.elem_owner);
}

TEST_CASE("partition rejects impossible splits") {
  const ddv::Mesh mesh = ddv::build_gamma_mesh(1, 1.0);
  CHECK_THROWS(ddv::partition_mesh(mesh, 0));
  CHECK_THROWS(ddv::partition_mesh(mesh, mesh.num_triangles() + 1));
}
