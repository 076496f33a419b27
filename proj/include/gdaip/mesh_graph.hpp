#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gdaip::mesh {

/// Triangular surface mesh. Coordinates are only carried along for I/O; topology comes
/// from the triangle list.
struct SurfaceMesh {
  std::vector<Eigen::Vector3d> coordinates;
  std::vector<std::array<int, 3>> triangles;

  std::size_t vertex_count() const { return coordinates.size(); }
};

/// Throws InputError on out-of-range or repeated triangle indices.
void validate(const SurfaceMesh& mesh);

/// Symmetric, irreflexive sparse adjacency in CSR form with sorted neighbor lists.
class Adjacency {
 public:
  Adjacency() = default;
  Adjacency(std::vector<std::size_t> offsets, std::vector<int> indices);

  /// Builds from per-vertex neighbor lists; lists are sorted and deduplicated.
  static Adjacency from_lists(std::vector<std::vector<int>> lists);

  std::size_t vertex_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const int> neighbors(int v) const {
    return {indices_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(int v) const { return offsets_[v + 1] - offsets_[v]; }
  std::size_t edge_count() const { return indices_.size() / 2; }
  bool adjacent(int i, int j) const;

  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<int>& indices() const { return indices_; }

  bool operator==(const Adjacency&) const = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> indices_;
};

/// One ROI label per vertex in [0, n_roi).
struct Parcellation {
  std::vector<int> labels;
  int n_roi = 0;

  std::size_t size() const { return labels.size(); }
  bool operator==(const Parcellation&) const = default;
};

/// Throws InputError when a label is out of range or (if given) the vertex count differs.
void validate(const Parcellation& atlas, std::optional<std::size_t> vertex_count = std::nullopt);

inline constexpr int kInfiniteHops = std::numeric_limits<int>::max();

/// Hop distance of every vertex of one ROI to that ROI's boundary.
struct RoiDistances {
  std::vector<int> vertices;  // ascending vertex indices of the ROI
  std::vector<int> hops;      // aligned with `vertices`; kInfiniteHops if unreachable
  bool empty_roi = false;
};

/// Target-domain vertices that receive atlas labels, plus the unlabeled complement.
struct CoreRegionSet {
  std::vector<int> labeled;    // ascending
  std::vector<int> labels;     // atlas label of each labeled vertex
  std::vector<int> unlabeled;  // ascending complement
  double fraction = 0.0;
};

/// Vertices i, j are adjacent iff some triangle contains both.
Adjacency build_adjacency(const SurfaceMesh& mesh);

/// Vertices with at least one neighbor carrying a different label, ascending.
std::vector<int> boundary_vertices(const Adjacency& adj, const Parcellation& atlas);

/// Multi-source BFS from the ROI's boundary vertices, restricted to edges inside the ROI.
RoiDistances distance_to_boundary(const Adjacency& adj, const Parcellation& atlas, int roi);

/// Per ROI, the max(1, ceil(fraction * size)) vertices farthest from the boundary.
/// Ordering is (distance desc, index asc) with unreachable vertices ranked farthest.
CoreRegionSet core_region(const Adjacency& adj, const Parcellation& atlas, double fraction);

/// Recursively subdivided icosahedron on the unit sphere, 10 * 4^s + 2 vertices.
SurfaceMesh icosphere(int subdivisions);

bool is_connected(const Adjacency& adj);

// Text formats. Mesh: "mesh V T", then V "v x y z" lines, then T "t i j k" lines.
// Labels: one integer per line.
void write_mesh(std::ostream& out, const SurfaceMesh& mesh);
SurfaceMesh read_mesh(std::istream& in, std::string_view source = "<stream>");
SurfaceMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const SurfaceMesh& mesh);

void write_labels(std::ostream& out, const Parcellation& atlas);
/// n_roi defaults to max label + 1.
Parcellation read_labels(std::istream& in, std::string_view source = "<stream>",
                         std::optional<int> n_roi = std::nullopt);
Parcellation load_labels(const std::filesystem::path& path, std::optional<int> n_roi = std::nullopt);
void save_labels(const std::filesystem::path& path, const Parcellation& atlas);

// Adjacency text format: "adjacency V", then one line per vertex "deg j1 j2 ...".
void write_adjacency(std::ostream& out, const Adjacency& adj);
Adjacency read_adjacency(std::istream& in, std::string_view source = "<stream>");

}  // namespace gdaip::mesh
