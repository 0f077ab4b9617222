#include "reflex/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace reflex {

namespace {

int resolve_obj_index(long raw, int vertex_count, int line_no) {
  long idx = raw > 0 ? raw - 1 : vertex_count + raw;
  if (raw == 0 || idx < 0 || idx >= vertex_count) {
    throw MeshError(fmt::format("obj line {}: vertex index {} out of range (have {})", line_no,
                                raw, vertex_count));
  }
  return static_cast<int>(idx);
}

}  // namespace

Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces) {
  Mesh mesh;
  mesh.reference_vertices = vertices;
  mesh.vertices = std::move(vertices);
  mesh.faces = std::move(faces);
  validate(mesh);
  return mesh;
}

void validate(const Mesh& mesh) {
  const int nv = mesh.vertex_count();
  if (mesh.reference_vertices.size() != mesh.vertices.size()) {
    throw MeshError("reference vertex count differs from deformed vertex count");
  }
  std::map<std::pair<int, int>, int> directed;
  std::map<std::pair<int, int>, int> undirected;
  for (int f = 0; f < mesh.face_count(); ++f) {
    const Face& face = mesh.faces[f];
    for (int v : face) {
      if (v < 0 || v >= nv) {
        throw MeshError(fmt::format("face {} references vertex {} (have {})", f, v, nv));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw MeshError(fmt::format("face {} repeats a vertex", f));
    }
    for (int i = 0; i < 3; ++i) {
      int a = face[i], b = face[(i + 1) % 3];
      if (++directed[{a, b}] > 1) {
        throw MeshError(fmt::format("directed edge ({}, {}) used twice: inconsistent orientation",
                                    a, b));
      }
      if (++undirected[{std::min(a, b), std::max(a, b)}] > 2) {
        throw MeshError(fmt::format("edge ({}, {}) has more than two faces", a, b));
      }
    }
  }
}

Mesh parse_obj(const std::string& text) {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw MeshError(fmt::format("obj line {}: malformed vertex", line_no));
      }
      vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // Only the position index matters: "7", "7/1", "7//3", "7/1/3".
        auto slash = tok.find('/');
        std::string head = tok.substr(0, slash);
        long raw = 0;
        auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), raw);
        if (ec != std::errc{} || ptr != head.data() + head.size()) {
          throw MeshError(fmt::format("obj line {}: bad face index '{}'", line_no, tok));
        }
        idx.push_back(resolve_obj_index(raw, static_cast<int>(vertices.size()), line_no));
      }
      if (idx.size() != 3) {
        throw MeshError(
            fmt::format("obj line {}: face has {} vertices, only triangles are supported", line_no,
                        idx.size()));
      }
      faces.push_back({idx[0], idx[1], idx[2]});
    }
    // vt, vn, o, g, s, usemtl, mtllib are ignored.
  }
  return make_mesh(std::move(vertices), std::move(faces));
}

Mesh load_obj(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw MeshError(fmt::format("cannot open mesh file {}", path.string()));
  std::stringstream buf;
  buf << file.rdbuf();
  return parse_obj(buf.str());
}

std::string format_obj(std::span<const Vec3> vertices, std::span<const Face> faces) {
  std::string out;
  out.reserve(vertices.size() * 64 + faces.size() * 24);
  for (const Vec3& v : vertices) {
    out += fmt::format("v {:.17g} {:.17g} {:.17g}\n", v.x(), v.y(), v.z());
  }
  for (const Face& f : faces) {
    out += fmt::format("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1);
  }
  return out;
}

void save_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream file(path);
  if (!file) throw MeshError(fmt::format("cannot write mesh file {}", path.string()));
  file << format_obj(mesh.vertices, mesh.faces);
}

double bbox_diagonal(std::span<const Vec3> points) {
  if (points.empty()) return 0.0;
  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

Mesh normalize_scale(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw MeshError("cannot normalize an empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& p : mesh.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double diag = (hi - lo).norm();
  if (!(diag > 1e-12)) throw MeshError("cannot normalize a zero-extent mesh");
  const Vec3 center = 0.5 * (lo + hi);
  const double s = 3.0 / diag;
  Mesh out = mesh;
  for (auto& p : out.vertices) p = (p - center) * s;
  for (auto& p : out.reference_vertices) p = (p - center) * s;
  return out;
}

std::vector<Vec3> face_normals(std::span<const Vec3> vertices, std::span<const Face> faces) {
  std::vector<Vec3> normals(faces.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& [a, b, c] = faces[f];
    Vec3 cr = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
    const double len = cr.norm();
    if (0.5 * len < kDegenerateArea) {
      throw MeshError(fmt::format("face {} has zero area", f));
    }
    normals[f] = cr / len;
  }
  return normals;
}

std::vector<double> face_areas(std::span<const Vec3> vertices, std::span<const Face> faces) {
  std::vector<double> areas(faces.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& [a, b, c] = faces[f];
    areas[f] = 0.5 * (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).norm();
  }
  return areas;
}

double total_area(const Mesh& mesh) {
  double sum = 0.0;
  for (double a : face_areas(mesh)) sum += a;
  return sum;
}

EdgeMap::EdgeMap(std::span<const Face> faces) {
  int nv = 0;
  for (const Face& f : faces) nv = std::max({nv, f[0] + 1, f[1] + 1, f[2] + 1});

  struct Half {
    int lo, hi, face, slot;
  };
  std::vector<Half> halves;
  halves.reserve(faces.size() * 3);
  for (int f = 0; f < static_cast<int>(faces.size()); ++f) {
    for (int i = 0; i < 3; ++i) {
      int a = faces[f][i], b = faces[f][(i + 1) % 3];
      halves.push_back({std::min(a, b), std::max(a, b), f, i});
    }
  }
  std::sort(halves.begin(), halves.end(), [](const Half& x, const Half& y) {
    return std::tie(x.lo, x.hi, x.face) < std::tie(y.lo, y.hi, y.face);
  });

  face_edges_.assign(faces.size(), {-1, -1, -1});
  vertex_edges_.assign(nv, {});
  for (size_t i = 0; i < halves.size();) {
    EdgeRef e;
    e.endpoints = {halves[i].lo, halves[i].hi};
    const int id = static_cast<int>(edges_.size());
    int k = 0;
    size_t j = i;
    for (; j < halves.size() && halves[j].lo == halves[i].lo && halves[j].hi == halves[i].hi; ++j) {
      if (k < 2) e.faces[k] = halves[j].face;
      ++k;
      face_edges_[halves[j].face][halves[j].slot] = id;
    }
    if (k > 2) {
      throw MeshError(fmt::format("edge ({}, {}) has {} faces", e.endpoints[0], e.endpoints[1], k));
    }
    edges_.push_back(e);
    vertex_edges_[e.endpoints[0]].emplace_back(e.endpoints[1], id);
    vertex_edges_[e.endpoints[1]].emplace_back(e.endpoints[0], id);
    i = j;
  }
}

std::optional<int> EdgeMap::find(int a, int b) const {
  if (a < 0 || a >= static_cast<int>(vertex_edges_.size())) return std::nullopt;
  for (const auto& [other, id] : vertex_edges_[a]) {
    if (other == b) return id;
  }
  return std::nullopt;
}

std::vector<int> EdgeMap::ring(int e) const {
  std::vector<int> out;
  for (int f : edges_[e].faces) {
    if (f < 0) continue;
    for (int fe : face_edges_[f]) {
      if (fe != e) out.push_back(fe);
    }
  }
  return out;
}

int EdgeMap::interior_count() const {
  return static_cast<int>(
      std::count_if(edges_.begin(), edges_.end(), [](const EdgeRef& e) { return e.interior(); }));
}

std::vector<EdgeRef> ring_edges(const Mesh& mesh, const EdgeRef& edge) {
  EdgeMap map(mesh);
  auto id = map.find(edge.endpoints[0], edge.endpoints[1]);
  if (!id) throw MeshError("edge not present in mesh");
  std::vector<EdgeRef> out;
  for (int r : map.ring(*id)) out.push_back(map[r]);
  return out;
}

namespace {

// Splits `edge` in place on `mesh`, returns the new vertex index.
int split_in_place(Mesh& mesh, const EdgeRef& edge) {
  if (!edge.interior()) {
    throw MeshError(fmt::format("cannot split boundary edge ({}, {})", edge.endpoints[0],
                                edge.endpoints[1]));
  }
  const auto [a, b] = edge.endpoints;
  const int m = mesh.vertex_count();
  mesh.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
  mesh.reference_vertices.push_back(0.5 * (mesh.reference_vertices[a] + mesh.reference_vertices[b]));
  for (int f : edge.faces) {
    Face face = mesh.faces[f];
    // Rotate so the split edge is face[0] -> face[1].
    int slot = -1;
    for (int i = 0; i < 3; ++i) {
      int u = face[i], v = face[(i + 1) % 3];
      if ((u == a && v == b) || (u == b && v == a)) slot = i;
    }
    if (slot < 0) throw MeshError("edge adjacency is stale");
    const int u = face[slot], v = face[(slot + 1) % 3], w = face[(slot + 2) % 3];
    mesh.faces[f] = {u, m, w};
    mesh.faces.push_back({m, v, w});
  }
  return m;
}

}  // namespace

Mesh split_edge(const Mesh& mesh, const EdgeRef& edge) {
  Mesh out = mesh;
  split_in_place(out, edge);
  return out;
}

SplitBatchResult split_edges(const Mesh& mesh, std::span<const EdgeRef> edges) {
  SplitBatchResult result{mesh, {}, {}};
  std::vector<char> touched(mesh.faces.size(), 0);
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    const EdgeRef& e = edges[i];
    if (!e.interior() || touched[e.faces[0]] || touched[e.faces[1]]) continue;
    result.new_vertices.push_back(split_in_place(result.mesh, e));
    result.split.push_back(i);
    touched[e.faces[0]] = touched[e.faces[1]] = 1;
  }
  return result;
}

}  // namespace reflex
