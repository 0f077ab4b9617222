#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace reflex {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Face = std::array<int, 3>;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Faces with area below this are treated as degenerate (scene units^2, after
// normalize_scale).
inline constexpr double kDegenerateArea = 1e-12;

// Indexed triangle mesh carrying both the deformed positions and the
// undeformed reference positions over one shared connectivity.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> reference_vertices;
  std::vector<Face> faces;

  [[nodiscard]] int vertex_count() const { return static_cast<int>(vertices.size()); }
  [[nodiscard]] int face_count() const { return static_cast<int>(faces.size()); }
  [[nodiscard]] bool empty() const { return faces.empty(); }
};

// Builds a mesh whose reference copy equals the given positions. Validates.
Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

// Throws MeshError on out-of-range indices, repeated vertices in a face,
// non-manifold edges, inconsistent orientation or mismatched reference copy.
void validate(const Mesh& mesh);

Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text);
void save_obj(const Mesh& mesh, const std::filesystem::path& path);
std::string format_obj(std::span<const Vec3> vertices, std::span<const Face> faces);

double bbox_diagonal(std::span<const Vec3> points);

// Centers the bounding box at the origin and scales so its diagonal is 3.
Mesh normalize_scale(const Mesh& mesh);

std::vector<Vec3> face_normals(std::span<const Vec3> vertices, std::span<const Face> faces);
inline std::vector<Vec3> face_normals(const Mesh& mesh) {
  return face_normals(mesh.vertices, mesh.faces);
}
inline std::vector<Vec3> reference_face_normals(const Mesh& mesh) {
  return face_normals(mesh.reference_vertices, mesh.faces);
}

std::vector<double> face_areas(std::span<const Vec3> vertices, std::span<const Face> faces);
inline std::vector<double> face_areas(const Mesh& mesh) {
  return face_areas(mesh.vertices, mesh.faces);
}
double total_area(const Mesh& mesh);

/// Undirected edge, canonicalized so endpoints[0] < endpoints[1].
/// faces[1] is -1 on boundary edges.
struct EdgeRef {
  std::array<int, 2> endpoints{-1, -1};
  std::array<int, 2> faces{-1, -1};

  [[nodiscard]] bool interior() const { return faces[1] >= 0; }
  [[nodiscard]] int face_count() const { return interior() ? 2 : 1; }
  friend bool operator==(const EdgeRef&, const EdgeRef&) = default;
};

// Edge table of a mesh. Edges are ordered by canonical endpoint pair.
class EdgeMap {
 public:
  explicit EdgeMap(std::span<const Face> faces);
  explicit EdgeMap(const Mesh& mesh) : EdgeMap(std::span<const Face>(mesh.faces)) {}

  [[nodiscard]] const std::vector<EdgeRef>& edges() const { return edges_; }
  [[nodiscard]] int size() const { return static_cast<int>(edges_.size()); }
  [[nodiscard]] const EdgeRef& operator[](int e) const { return edges_[e]; }
  [[nodiscard]] std::optional<int> find(int a, int b) const;
  // Edge index of (faces[f][i], faces[f][(i+1)%3]).
  [[nodiscard]] const std::array<int, 3>& face_edges(int f) const { return face_edges_[f]; }
  // Up to four edges of the adjacent faces other than `e` itself.
  [[nodiscard]] std::vector<int> ring(int e) const;
  [[nodiscard]] int interior_count() const;

 private:
  std::vector<EdgeRef> edges_;
  std::vector<std::array<int, 3>> face_edges_;
  std::vector<std::vector<std::pair<int, int>>> vertex_edges_;  // (other vertex, edge)
};

std::vector<EdgeRef> ring_edges(const Mesh& mesh, const EdgeRef& edge);

// Splits an interior edge at its midpoint in both vertex sets. The first child
// of each adjacent face keeps the parent's index; the second is appended.
Mesh split_edge(const Mesh& mesh, const EdgeRef& edge);

struct SplitBatchResult {
  Mesh mesh;
  std::vector<int> split;        // indices into the requested list that were split
  std::vector<int> new_vertices; // one per split edge
};

// Splits edges in order. Boundary edges and edges whose adjacent faces were
// already modified earlier in the batch are skipped.
SplitBatchResult split_edges(const Mesh& mesh, std::span<const EdgeRef> edges);

}  // namespace reflex
