#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gdaip/common.hpp"
#include "gdaip/fileio.hpp"
#include "gdaip/mesh_graph.hpp"

namespace gdaip::mesh {
namespace {

// Splits a text stream into whitespace tokens per line and reports positions on failure.
class LineReader {
 public:
  LineReader(std::istream& in, std::string_view source) : in_(in), source_(source) {}

  bool next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      tokens_.clear();
      std::istringstream ss(line);
      std::string tok;
      while (ss >> tok) tokens_.push_back(tok);
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  void expect(bool more, std::string_view what) {
    if (!more) fail(std::string("unexpected end of input, expected ") + std::string(what));
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw InputError(std::string(source_) + ":" + std::to_string(line_no_) + ": " + msg);
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  template <class T>
  T parse(std::size_t k) const {
    if (k >= tokens_.size()) fail("missing field " + std::to_string(k + 1));
    const std::string& s = tokens_[k];
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("cannot parse '" + s + "'");
    return value;
  }

  void require(std::string_view tag, std::size_t fields) const {
    if (tokens_.empty() || tokens_[0] != tag)
      fail("expected '" + std::string(tag) + "' record, got '" + (tokens_.empty() ? "" : tokens_[0]) + "'");
    if (tokens_.size() != fields + 1)
      fail("'" + std::string(tag) + "' record needs " + std::to_string(fields) + " fields");
  }

 private:
  std::istream& in_;
  std::string_view source_;
  std::vector<std::string> tokens_;
  std::size_t line_no_ = 0;
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_mesh(std::ostream& out, const SurfaceMesh& mesh) {
  out << "mesh " << mesh.vertex_count() << ' ' << mesh.triangles.size() << '\n';
  for (const auto& p : mesh.coordinates)
    out << "v " << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  for (const auto& t : mesh.triangles) out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

SurfaceMesh read_mesh(std::istream& in, std::string_view source) {
  LineReader r(in, source);
  r.expect(r.next(), "mesh header");
  r.require("mesh", 2);
  const auto nv = r.parse<long long>(1);
  const auto nt = r.parse<long long>(2);
  if (nv <= 0 || nt < 0) r.fail("invalid mesh header counts");
  SurfaceMesh mesh;
  mesh.coordinates.reserve(nv);
  mesh.triangles.reserve(nt);
  for (long long i = 0; i < nv; ++i) {
    r.expect(r.next(), "vertex record");
    r.require("v", 3);
    mesh.coordinates.emplace_back(r.parse<double>(1), r.parse<double>(2), r.parse<double>(3));
  }
  for (long long i = 0; i < nt; ++i) {
    r.expect(r.next(), "triangle record");
    r.require("t", 3);
    std::array<int, 3> t{r.parse<int>(1), r.parse<int>(2), r.parse<int>(3)};
    for (int v : t) {
      if (v < 0 || v >= nv) r.fail("triangle index " + std::to_string(v) + " out of range");
    }
    mesh.triangles.push_back(t);
  }
  if (r.next()) r.fail("trailing content after mesh");
  validate(mesh);
  return mesh;
}

SurfaceMesh load_mesh(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_mesh(in, path.string());
}

void save_mesh(const std::filesystem::path& path, const SurfaceMesh& mesh) {
  std::ostringstream out;
  write_mesh(out, mesh);
  write_file_atomic(path, out.str());
}

void write_labels(std::ostream& out, const Parcellation& atlas) {
  for (int l : atlas.labels) out << l << '\n';
}

Parcellation read_labels(std::istream& in, std::string_view source, std::optional<int> n_roi) {
  LineReader r(in, source);
  Parcellation atlas;
  int max_label = -1;
  while (r.next()) {
    if (r.tokens().size() != 1) r.fail("expected one label per line");
    const int l = r.parse<int>(0);
    if (l < 0) r.fail("negative label");
    max_label = std::max(max_label, l);
    atlas.labels.push_back(l);
  }
  if (atlas.labels.empty()) throw InputError(std::string(source) + ": empty label file");
  atlas.n_roi = n_roi.value_or(max_label + 1);
  validate(atlas);
  return atlas;
}

Parcellation load_labels(const std::filesystem::path& path, std::optional<int> n_roi) {
  auto in = open_in(path);
  return read_labels(in, path.string(), n_roi);
}

void save_labels(const std::filesystem::path& path, const Parcellation& atlas) {
  std::ostringstream out;
  write_labels(out, atlas);
  write_file_atomic(path, out.str());
}

void write_adjacency(std::ostream& out, const Adjacency& adj) {
  out << "adjacency " << adj.vertex_count() << '\n';
  for (int v = 0; v < static_cast<int>(adj.vertex_count()); ++v) {
    out << adj.degree(v);
    for (int j : adj.neighbors(v)) out << ' ' << j;
    out << '\n';
  }
}

Adjacency read_adjacency(std::istream& in, std::string_view source) {
  LineReader r(in, source);
  r.expect(r.next(), "adjacency header");
  r.require("adjacency", 1);
  const auto n = r.parse<long long>(1);
  if (n <= 0) r.fail("invalid vertex count");
  std::vector<std::vector<int>> lists(n);
  for (long long v = 0; v < n; ++v) {
    r.expect(r.next(), "neighbor list");
    const auto deg = r.parse<long long>(0);
    if (deg < 0 || static_cast<std::size_t>(deg) + 1 != r.tokens().size()) r.fail("degree does not match list");
    for (long long k = 0; k < deg; ++k) {
      const int j = r.parse<int>(k + 1);
      if (j < 0 || j >= n || j == v) r.fail("invalid neighbor " + std::to_string(j));
      lists[v].push_back(j);
    }
  }
  Adjacency adj = Adjacency::from_lists(std::move(lists));
  for (int v = 0; v < static_cast<int>(n); ++v) {
    for (int j : adj.neighbors(v)) {
      if (!adj.adjacent(j, v)) throw InputError(std::string(source) + ": adjacency is not symmetric");
    }
  }
  return adj;
}

}  // namespace gdaip::mesh
