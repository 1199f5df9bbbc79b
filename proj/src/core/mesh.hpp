// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace ddv {

enum class EdgeTag { DirichletBase, NeumannLoad, Free };

struct BoundaryEdge {
  int n0 = -1, n1 = -1;  // endpoints, ordered along the element boundary (ccw)
  int tri = -1;          // the unique triangle owning this edge
  EdgeTag tag = EdgeTag::Free;
};

/// Conforming triangulation with P1 elements. Triangles are counter-clockwise.
struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryEdge> boundary_edges;
  double h = 0.0;  // characteristic element size

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_dofs() const { return 2 * num_nodes(); }

  double tri_area(int t) const;
  Eigen::Vector2d tri_centroid(int t) const;
};

/// Structured mesh of the Gamma domain [0,2L]x[0,2L] \ [L,2L]x[0,L].
/// Squares of size h = L/m split bottom-left to top-right. The base
/// (y=0, x in [0,L]) is clamped, the upper-right side (x=2L, y in [L,2L])
/// carries the load.
Mesh build_gamma_mesh(int m, double L);

/// Structured mesh of [0,Lx]x[0,Ly] with mx-by-my squares; the whole
/// boundary is tagged Dirichlet (used for patch tests).
Mesh build_rect_mesh(int mx, int my, double Lx, double Ly);

/// Element-disjoint, node-matching decomposition.
struct Partition {
  int nsd = 0;
  std::vector<int> elem_owner;                  // triangle -> subdomain
  std::vector<std::vector<int>> node_owners;    // node -> sorted owner set

  int multiplicity(int n) const { return static_cast<int>(node_owners[n].size()); }
  bool is_interface_node(int n) const { return multiplicity(n) >= 2; }
};

/// Splits the mesh into nsd edge-connected subdomains of near-equal element
/// count by chunking a row-snake ordering of the structured cells.
Partition partition_mesh(const Mesh& mesh, int nsd);

/// Triangle adjacency through shared edges (index aligned with triangles).
std::vector<std::array<int, 3>> triangle_neighbors(const Mesh& mesh);

/// Writes nodes.csv (id,x,y) and elems.csv (id,n0,n1,n2,owner) into dir.
void export_mesh_csv(const Mesh& mesh, const Partition* partition, const std::string& dir);

}  // namespace ddv
