// SPDX-License-Identifier: Apache-2.0
#include "core/mesh.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace ddv {

double Mesh::tri_area(int t) const {
  const auto& tri = triangles[t];
  const Eigen::Vector2d a = nodes[tri[0]], b = nodes[tri[1]], c = nodes[tri[2]];
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

Eigen::Vector2d Mesh::tri_centroid(int t) const {
  const auto& tri = triangles[t];
  return (nodes[tri[0]] + nodes[tri[1]] + nodes[tri[2]]) / 3.0;
}

namespace {

struct LatticeBuilder {
  int nx, ny;  // cells per direction
  double h;
  std::vector<int> node_id;  // (nx+1)*(ny+1), -1 if absent

  LatticeBuilder(int nx_, int ny_, double h_) : nx(nx_), ny(ny_), h(h_) {
    node_id.assign((nx + 1) * (ny + 1), -1);
  }
  int& nid(int i, int j) { return node_id[j * (nx + 1) + i]; }

  template <class KeepNode, class KeepCell>
  Mesh build(KeepNode keep_node, KeepCell keep_cell) {
    Mesh mesh;
    mesh.h = h;
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        if (keep_node(i, j)) {
          nid(i, j) = mesh.num_nodes();
          mesh.nodes.emplace_back(i * h, j * h);
        }
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (keep_cell(i, j)) {
          const int bl = nid(i, j), br = nid(i + 1, j);
          const int tr = nid(i + 1, j + 1), tl = nid(i, j + 1);
          mesh.triangles.push_back({bl, br, tr});  // lower
          mesh.triangles.push_back({bl, tr, tl});  // upper
        }
    return mesh;
  }
};

void tag_boundary(Mesh& mesh, double dirichlet_xmax, double neumann_x, double neumann_ymin) {
  // Edges with a single incident triangle form the boundary.
  std::map<std::pair<int, int>, std::pair<int, int>> edges;  // (min,max) -> (count, tri)
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      auto key = std::minmax(a, b);
      auto [it, inserted] = edges.try_emplace(key, 0, t);
      it->second.first++;
      it->second.second = t;
    }
  }
  const double tol = 1e-12 * std::max(1.0, mesh.h);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[k], b = tri[(k + 1) % 3];
      auto it = edges.find(std::minmax(a, b));
      if (it->second.first != 1) continue;
      BoundaryEdge e;
      e.n0 = a;
      e.n1 = b;
      e.tri = t;
      const Eigen::Vector2d pa = mesh.nodes[a], pb = mesh.nodes[b];
      if (std::abs(pa.y()) < tol && std::abs(pb.y()) < tol &&
          pa.x() < dirichlet_xmax + tol && pb.x() < dirichlet_xmax + tol) {
        e.tag = EdgeTag::DirichletBase;
      } else if (std::abs(pa.x() - neumann_x) < tol && std::abs(pb.x() - neumann_x) < tol &&
                 pa.y() > neumann_ymin - tol && pb.y() > neumann_ymin - tol) {
        e.tag = EdgeTag::NeumannLoad;
      } else {
        e.tag = EdgeTag::Free;
      }
      mesh.boundary_edges.push_back(e);
    }
  }
}

}  // namespace

Mesh build_gamma_mesh(int m, double L) {
  if (m < 1) throw std::invalid_argument("build_gamma_mesh: m must be >= 1");
  if (L <= 0.0) throw std::invalid_argument("build_gamma_mesh: L must be > 0");
  LatticeBuilder lat(2 * m, 2 * m, L / m);
  Mesh mesh = lat.build(
      [m](int i, int j) { return !(i > m && j < m); },
      [m](int i, int j) { return !(i >= m && j < m); });
  tag_boundary(mesh, /*dirichlet_xmax=*/L, /*neumann_x=*/2 * L, /*neumann_ymin=*/L);
  return mesh;
}

Mesh build_rect_mesh(int mx, int my, double Lx, double Ly) {
  if (mx < 1 || my < 1) throw std::invalid_argument("build_rect_mesh: mx, my must be >= 1");
  if (Lx <= 0.0 || Ly <= 0.0) throw std::invalid_argument("build_rect_mesh: lengths must be > 0");
  const double hx = Lx / mx;
  if (std::abs(Ly / my - hx) > 1e-12 * hx)
    throw std::invalid_argument("build_rect_mesh: cells must be square");
  LatticeBuilder lat(mx, my, hx);
  Mesh mesh = lat.build([](int, int) { return true; }, [](int, int) { return true; });
  // Whole boundary clamped.
  tag_boundary(mesh, /*dirichlet_xmax=*/Lx + 1.0, /*neumann_x=*/-1.0, /*neumann_ymin=*/0.0);
  for (auto& e : mesh.boundary_edges) e.tag = EdgeTag::DirichletBase;
  return mesh;
}

std::vector<std::array<int, 3>> triangle_neighbors(const Mesh& mesh) {
  std::map<std::pair<int, int>, std::array<int, 2>> edges;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      auto key = std::minmax(tri[k], tri[(k + 1) % 3]);
      auto [it, inserted] = edges.try_emplace(key, std::array<int, 2>{-1, -1});
      it->second[inserted ? 0 : 1] = t;
    }
  }
  std::vector<std::array<int, 3>> nbrs(mesh.num_triangles(), {-1, -1, -1});
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const auto& pair = edges[std::minmax(tri[k], tri[(k + 1) % 3])];
      nbrs[t][k] = (pair[0] == t) ? pair[1] : pair[0];
    }
  }
  return nbrs;
}

namespace {

struct CellTris {
  int lower = -1, upper = -1;
};

/// Maps each structured cell (j, i) to its two triangles.
std::map<std::pair<int, int>, CellTris> build_cells(const Mesh& mesh) {
  const double h = mesh.h;
  std::map<std::pair<int, int>, CellTris> cells;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const Eigen::Vector2d c = mesh.tri_centroid(t);
    const int i = static_cast<int>(std::floor(c.x() / h));
    const int j = static_cast<int>(std::floor(c.y() / h));
    auto& ct = cells[{j, i}];
    // Lower triangle lies below the bl-tr diagonal.
    if (c.x() - i * h > c.y() - j * h)
      ct.lower = t;
    else
      ct.upper = t;
  }
  return cells;
}

/// For an L-shaped domain, collects the triangles of a rectangle of whole
/// cells around the reentrant corner holding at least `min_tris` triangles
/// (shrunk to fit `max_tris`). Keeping this patch in a single chunk avoids
/// partition boundaries through the stress concentration at the corner.
/// Returns empty for a rectangular domain.
std::vector<int> corner_patch(const std::map<std::pair<int, int>, CellTris>& cells, int min_tris,
                              int max_tris) {
  std::map<int, size_t> row_width;
  for (const auto& [ji, ct] : cells) ++row_width[ji.first];
  size_t max_width = 0, min_width = SIZE_MAX;
  for (const auto& [j, w] : row_width) {
    max_width = std::max(max_width, w);
    min_width = std::min(min_width, w);
  }
  if (min_width == max_width) return {};
  int n_short = 0;
  for (const auto& [j, w] : row_width)
    if (w < max_width) ++n_short;

  const int ci = static_cast<int>(min_width), cj = n_short;
  // Half-widths grow with a 2:1 aspect: the patch extends twice as far along
  // the arms meeting at the corner (x) as across them (y), following the
  // elongation of the high-gradient zone between the clamped base and the
  // loaded arm. b is the smallest half-height whose patch reaches min_tris.
  int b = 1;
  while (6 * b * (2 * b - 1) < min_tris) ++b;
  int a = 2 * b - 1;
  std::vector<int> patch;
  for (;;) {
    patch.clear();
    for (const auto& [ji, ct] : cells) {
      const int di = (ji.second < ci) ? ci - 1 - ji.second : ji.second - ci;
      const int dj = (ji.first < cj) ? cj - 1 - ji.first : ji.first - cj;
      if (di < a && dj < b) {
        patch.push_back(ct.lower);
        patch.push_back(ct.upper);
      }
    }
    if (static_cast<int>(patch.size()) <= max_tris || (a == 1 && b == 1)) break;
    if (a >= 2 * b) --a;  // shrink toward a unit square, widest side first
    else if (a > 1) --a;
    else --b;
  }
  return patch;
}

/// One unit of partitioning granularity: a whole cell (two triangles) so
/// chunk boundaries follow mesh lines, or a single triangle once a region
/// holds fewer cells than chunks.
struct RcbUnit {
  Eigen::Vector2d c;
  std::vector<int> tris;
};

/// Recursive coordinate bisection: splits `units` into `nchunks` compact
/// boxes by cutting the longer bounding-box axis, assigning owners
/// `label0 .. label0 + nchunks - 1`. Deterministic.
void rcb_assign(std::vector<RcbUnit> units, int nchunks, int label0, std::vector<int>& owner) {
  if (nchunks == 1) {
    for (const auto& u : units)
      for (int t : u.tris) owner[t] = label0;
    return;
  }
  if (units.size() < static_cast<size_t>(nchunks)) {
    std::vector<RcbUnit> split;
    for (const auto& u : units)
      for (int t : u.tris) split.push_back({u.c, {t}});
    units = std::move(split);
  }
  Eigen::Vector2d lo(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
  Eigen::Vector2d hi = -lo;
  int total = 0;
  for (const auto& u : units) {
    lo = lo.cwiseMin(u.c);
    hi = hi.cwiseMax(u.c);
    total += static_cast<int>(u.tris.size());
  }
  const int axis = (hi.y() - lo.y() >= hi.x() - lo.x()) ? 1 : 0;
  std::sort(units.begin(), units.end(), [&](const RcbUnit& a, const RcbUnit& b) {
    if (a.c[axis] != b.c[axis]) return a.c[axis] < b.c[axis];
    if (a.c[1 - axis] != b.c[1 - axis]) return a.c[1 - axis] < b.c[1 - axis];
    return a.tris[0] < b.tris[0];
  });
  const int n1 = nchunks / 2;
  size_t cut = 0;
  int acc = 0;
  while (cut < units.size() - 1) {
    const int w = static_cast<int>(units[cut].tris.size());
    if (std::abs((acc + w) * nchunks - total * n1) > std::abs(acc * nchunks - total * n1) &&
        cut > 0)
      break;
    acc += w;
    ++cut;
  }
  rcb_assign({units.begin(), units.begin() + cut}, n1, label0, owner);
  rcb_assign({units.begin() + cut, units.end()}, nchunks - n1, label0 + n1, owner);
}

/// Moves stray components so every subdomain is edge-connected.
void repair_connectivity(const Mesh& mesh, std::vector<int>& owner, int nsd) {
  const auto nbrs = triangle_neighbors(mesh);
  const int nt = mesh.num_triangles();
  for (int pass = 0; pass < nt; ++pass) {
    bool moved = false;
    for (int s = 0; s < nsd; ++s) {
      std::vector<int> comp(nt, -1);
      std::vector<std::vector<int>> comps;
      for (int t = 0; t < nt; ++t) {
        if (owner[t] != s || comp[t] >= 0) continue;
        const int cid = static_cast<int>(comps.size());
        comps.emplace_back();
        std::queue<int> q;
        q.push(t);
        comp[t] = cid;
        while (!q.empty()) {
          const int u = q.front();
          q.pop();
          comps[cid].push_back(u);
          for (int v : nbrs[u])
            if (v >= 0 && owner[v] == s && comp[v] < 0) {
              comp[v] = cid;
              q.push(v);
            }
        }
      }
      if (comps.size() <= 1) continue;
      // Keep the largest component, hand the others to an adjacent owner.
      size_t keep = 0;
      for (size_t c = 1; c < comps.size(); ++c)
        if (comps[c].size() > comps[keep].size()) keep = c;
      for (size_t c = 0; c < comps.size(); ++c) {
        if (c == keep) continue;
        int target = -1;
        for (int t : comps[c])
          for (int v : nbrs[t])
            if (v >= 0 && owner[v] != s && (target < 0 || owner[v] < target)) target = owner[v];
        if (target < 0) continue;
        for (int t : comps[c]) owner[t] = target;
        moved = true;
      }
    }
    if (!moved) return;
  }
}

}  // namespace

Partition partition_mesh(const Mesh& mesh, int nsd) {
  const int nt = mesh.num_triangles();
  if (nsd < 1) throw std::invalid_argument("partition_mesh: nsd must be >= 1");
  if (nsd > nt) throw std::invalid_argument("partition_mesh: nsd exceeds element count");

  Partition part;
  part.nsd = nsd;
  part.elem_owner.assign(nt, 0);

  if (nsd > 1) {
    const auto cells = build_cells(mesh);
    // The patch holds at least 54 triangles when the mesh affords it, so no
    // chunk boundary comes within a few cells of the stress concentration.
    // The cap leaves every other chunk at least one whole cell: splitting
    // cells produces half-cell slivers the flux recovery cannot equilibrate.
    const int min_patch = std::min(nt / 4, std::max(54, nt / 10));
    const int max_patch =
        std::min(nt - (nsd - 1), 2 * (static_cast<int>(cells.size()) - (nsd - 1)));
    const std::vector<int> patch = corner_patch(cells, min_patch, max_patch);
    std::vector<char> in_patch(nt, 0);
    for (int t : patch) {
      part.elem_owner[t] = 0;
      in_patch[t] = 1;
    }
    std::vector<RcbUnit> rest;
    for (const auto& [ji, ct] : cells) {
      RcbUnit u;
      for (int t : {ct.lower, ct.upper})
        if (!in_patch[t]) u.tris.push_back(t);
      if (u.tris.empty()) continue;
      u.c = Eigen::Vector2d::Zero();
      for (int t : u.tris) u.c += mesh.tri_centroid(t);
      u.c /= static_cast<double>(u.tris.size());
      rest.push_back(std::move(u));
    }
    const int s0 = patch.empty() ? 0 : 1;  // chunk 0 is the corner patch if present
    rcb_assign(std::move(rest), nsd - s0, s0, part.elem_owner);
    repair_connectivity(mesh, part.elem_owner, nsd);
  }

  part.node_owners.assign(mesh.num_nodes(), {});
  for (int t = 0; t < nt; ++t)
    for (int n : mesh.triangles[t]) {
      auto& owners = part.node_owners[n];
      if (std::find(owners.begin(), owners.end(), part.elem_owner[t]) == owners.end())
        owners.push_back(part.elem_owner[t]);
    }
  for (auto& owners : part.node_owners) std::sort(owners.begin(), owners.end());
  return part;
}

void export_mesh_csv(const Mesh& mesh, const Partition* partition, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/nodes.csv");
    f << "id,x,y\n";
    f.precision(17);
    for (int n = 0; n < mesh.num_nodes(); ++n)
      f << n << "," << mesh.nodes[n].x() << "," << mesh.nodes[n].y() << "\n";
  }
  {
    std::ofstream f(dir + "/elems.csv");
    f << "id,n0,n1,n2,owner\n";
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const auto& tri = mesh.triangles[t];
      f << t << "," << tri[0] << "," << tri[1] << "," << tri[2] << ","
        << (partition ? partition->elem_owner[t] : 0) << "\n";
    }
  }
}

}  // namespace ddv
