#include "gdaip/mesh_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <string>

#include "gdaip/common.hpp"

namespace gdaip::mesh {

void validate(const SurfaceMesh& mesh) {
  const auto n = static_cast<long long>(mesh.vertex_count());
  if (n == 0) throw InputError("mesh has no vertices");
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int v : tri) {
      if (v < 0 || v >= n)
        throw InputError("triangle " + std::to_string(t) + " references vertex " + std::to_string(v) +
                         " outside [0, " + std::to_string(n) + ")");
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw InputError("triangle " + std::to_string(t) + " is degenerate");
  }
}

Adjacency::Adjacency(std::vector<std::size_t> offsets, std::vector<int> indices)
    : offsets_(std::move(offsets)), indices_(std::move(indices)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != indices_.size())
    throw InputError("malformed adjacency offsets");
}

Adjacency Adjacency::from_lists(std::vector<std::vector<int>> lists) {
  std::vector<std::size_t> offsets(lists.size() + 1, 0);
  std::vector<int> indices;
  for (std::size_t v = 0; v < lists.size(); ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    indices.insert(indices.end(), l.begin(), l.end());
    offsets[v + 1] = indices.size();
  }
  return Adjacency(std::move(offsets), std::move(indices));
}

bool Adjacency::adjacent(int i, int j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

void validate(const Parcellation& atlas, std::optional<std::size_t> vertex_count) {
  if (atlas.n_roi <= 0) throw InputError("parcellation n_roi must be positive");
  if (vertex_count && atlas.size() != *vertex_count)
    throw InputError("parcellation has " + std::to_string(atlas.size()) + " labels, expected " +
                     std::to_string(*vertex_count));
  for (std::size_t i = 0; i < atlas.size(); ++i) {
    const int l = atlas.labels[i];
    if (l < 0 || l >= atlas.n_roi)
      throw InputError("label " + std::to_string(l) + " at vertex " + std::to_string(i) +
                       " outside [0, " + std::to_string(atlas.n_roi) + ")");
  }
}

Adjacency build_adjacency(const SurfaceMesh& mesh) {
  validate(mesh);
  std::vector<std::vector<int>> lists(mesh.vertex_count());
  for (const auto& tri : mesh.triangles) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        if (a != b) lists[tri[a]].push_back(tri[b]);
      }
    }
  }
  return Adjacency::from_lists(std::move(lists));
}

namespace {

void require_same_size(const Adjacency& adj, const Parcellation& atlas) {
  if (adj.vertex_count() != atlas.size())
    throw InputError("adjacency has " + std::to_string(adj.vertex_count()) +
                     " vertices but parcellation has " + std::to_string(atlas.size()));
}

bool on_boundary(const Adjacency& adj, const Parcellation& atlas, int v) {
  const int l = atlas.labels[v];
  for (int j : adj.neighbors(v)) {
    if (atlas.labels[j] != l) return true;
  }
  return false;
}

}  // namespace

std::vector<int> boundary_vertices(const Adjacency& adj, const Parcellation& atlas) {
  require_same_size(adj, atlas);
  std::vector<int> out;
  for (int v = 0; v < static_cast<int>(adj.vertex_count()); ++v) {
    if (on_boundary(adj, atlas, v)) out.push_back(v);
  }
  return out;
}

RoiDistances distance_to_boundary(const Adjacency& adj, const Parcellation& atlas, int roi) {
  require_same_size(adj, atlas);
  if (roi < 0 || roi >= atlas.n_roi) throw InputError("roi " + std::to_string(roi) + " out of range");

  RoiDistances out;
  const int n = static_cast<int>(adj.vertex_count());
  std::vector<int> slot(n, -1);  // position of a vertex inside out.vertices
  for (int v = 0; v < n; ++v) {
    if (atlas.labels[v] == roi) {
      slot[v] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(v);
    }
  }
  if (out.vertices.empty()) {
    out.empty_roi = true;
    return out;
  }

  out.hops.assign(out.vertices.size(), kInfiniteHops);
  std::deque<int> queue;
  for (std::size_t k = 0; k < out.vertices.size(); ++k) {
    if (on_boundary(adj, atlas, out.vertices[k])) {
      out.hops[k] = 0;
      queue.push_back(out.vertices[k]);
    }
  }
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    const int next = out.hops[slot[v]] + 1;
    for (int j : adj.neighbors(v)) {
      const int s = slot[j];
      if (s >= 0 && out.hops[s] == kInfiniteHops) {
        out.hops[s] = next;
        queue.push_back(j);
      }
    }
  }
  return out;
}

CoreRegionSet core_region(const Adjacency& adj, const Parcellation& atlas, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("core fraction must lie in (0, 1]");
  require_same_size(adj, atlas);
  validate(atlas);

  CoreRegionSet out;
  out.fraction = fraction;
  std::vector<char> selected(adj.vertex_count(), 0);
  for (int roi = 0; roi < atlas.n_roi; ++roi) {
    RoiDistances d = distance_to_boundary(adj, atlas, roi);
    if (d.empty_roi) continue;
    std::vector<std::size_t> order(d.vertices.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (d.hops[a] != d.hops[b]) return d.hops[a] > d.hops[b];
      return d.vertices[a] < d.vertices[b];
    });
    // The small offset keeps products such as 0.05 * 20 from rounding up past an integer.
    const double want = std::ceil(fraction * static_cast<double>(order.size()) - 1e-9);
    const std::size_t count = std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, order.size());
    for (std::size_t k = 0; k < count; ++k) selected[d.vertices[order[k]]] = 1;
  }
  for (int v = 0; v < static_cast<int>(selected.size()); ++v) {
    if (selected[v]) {
      out.labeled.push_back(v);
      out.labels.push_back(atlas.labels[v]);
    } else {
      out.unlabeled.push_back(v);
    }
  }
  return out;
}

SurfaceMesh icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 7)
    throw InputError("icosphere subdivisions must lie in [0, 7], got " + std::to_string(subdivisions));

  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  SurfaceMesh mesh;
  const double base[12][3] = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                              {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                              {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (const auto& p : base) mesh.coordinates.push_back(Eigen::Vector3d(p[0], p[1], p[2]).normalized());
  mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                    {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                    {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                    {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      const int id = static_cast<int>(mesh.coordinates.size());
      mesh.coordinates.push_back((mesh.coordinates[a] + mesh.coordinates[b]).normalized());
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(mesh.triangles.size() * 4);
    for (const auto& t : mesh.triangles) {
      const int ab = midpoint(t[0], t[1]);
      const int bc = midpoint(t[1], t[2]);
      const int ca = midpoint(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.triangles = std::move(next);
  }
  return mesh;
}

bool is_connected(const Adjacency& adj) {
  const std::size_t n = adj.vertex_count();
  if (n == 0) return true;
  std::vector<char> seen(n, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    for (int j : adj.neighbors(v)) {
      if (!seen[j]) {
        seen[j] = 1;
        ++reached;
        queue.push_back(j);
      }
    }
  }
  return reached == n;
}

}  // namespace gdaip::mesh
