#include "reflex/remesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "reflex/parallel.hpp"

namespace reflex {

namespace {

constexpr double kFlatTolerance = 1e-9;

double dihedral(const Vec3& n1, const Vec3& n2) {
  const double d = std::clamp(n1.dot(n2), -1.0, 1.0);
  return d >= 1.0 - kFlatTolerance ? 0.0 : std::acos(d);
}

}  // namespace

double refl_criterion(std::span<const double> per_face_energy, const EdgeRef& edge) {
  double sum = 0.0;
  for (int f : edge.faces) {
    if (f < 0) continue;
    if (f >= static_cast<int>(per_face_energy.size())) {
      throw std::invalid_argument("per-face energy shorter than face count");
    }
    sum += per_face_energy[f];
  }
  return sum;
}

double geom_criterion(const Mesh& mesh, const EdgeMap& edges, std::span<const Vec3> normals,
                      int edge) {
  double sum = 0.0;
  for (int r : edges.ring(edge)) {
    const EdgeRef& ring = edges[r];
    if (!ring.interior()) continue;
    const double len =
        (mesh.vertices[ring.endpoints[0]] - mesh.vertices[ring.endpoints[1]]).norm();
    sum += len * dihedral(normals[ring.faces[0]], normals[ring.faces[1]]);
  }
  return sum;
}

double geom_criterion(const Mesh& mesh, const EdgeRef& edge) {
  EdgeMap edges(mesh);
  const auto id = edges.find(edge.endpoints[0], edge.endpoints[1]);
  if (!id) throw MeshError("edge not present in mesh");
  const auto normals = face_normals(mesh);
  return geom_criterion(mesh, edges, normals, *id);
}

SplitOutcome select_and_split(const Mesh& mesh, std::span<const double> per_face_energy,
                              double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("split fraction must be in (0, 1]");
  }
  if (static_cast<int>(per_face_energy.size()) != mesh.face_count()) {
    throw std::invalid_argument(fmt::format("per-face energy has {} entries for {} faces",
                                            per_face_energy.size(), mesh.face_count()));
  }
  const EdgeMap edges(mesh);
  const auto normals = face_normals(mesh);

  SplitOutcome out;
  SplitReport& rep = out.report;
  rep.scored.resize(edges.size());
  parallel_for(edges.size(), [&](int e) {
    ScoredEdge& s = rep.scored[e];
    s.edge = e;
    s.endpoints = edges[e].endpoints;
    s.c_refl = refl_criterion(per_face_energy, edges[e]);
    s.c_geom = edges[e].interior() ? geom_criterion(mesh, edges, normals, e) : 0.0;
    s.product = s.c_refl * s.c_geom;
  });

  std::vector<int> ranked;
  for (int e = 0; e < edges.size(); ++e) {
    if (edges[e].interior() && rep.scored[e].product > 0.0) ranked.push_back(e);
  }
  // Edge indices follow canonical endpoint order, so a stable sort breaks ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](int a, int b) { return rep.scored[a].product > rep.scored[b].product; });
  const auto quota =
      static_cast<size_t>(std::ceil(fraction * static_cast<double>(edges.interior_count())));
  ranked.resize(std::min(ranked.size(), quota));
  rep.selected = ranked;

  std::vector<EdgeRef> batch;
  batch.reserve(ranked.size());
  for (int e : ranked) batch.push_back(edges[e]);
  SplitBatchResult result = split_edges(mesh, batch);
  for (int i : result.split) rep.split.push_back(ranked[i]);
  rep.new_vertices = std::move(result.new_vertices);
  out.mesh = std::move(result.mesh);
  return out;
}

std::string split_csv_header() { return "batch,edge,v0,v1,c_refl,c_geom,product,split,new_vertex\n"; }

std::string split_csv_rows(const SplitReport& report, int batch) {
  std::string out;
  for (int idx : report.selected) {
    const ScoredEdge& s = report.scored[idx];
    const auto it = std::find(report.split.begin(), report.split.end(), idx);
    const bool done = it != report.split.end();
    const int vertex = done ? report.new_vertices[it - report.split.begin()] : -1;
    out += fmt::format("{},{},{},{},{:.17g},{:.17g},{:.17g},{},{}\n", batch, s.edge,
                       s.endpoints[0], s.endpoints[1], s.c_refl, s.c_geom, s.product,
                       done ? 1 : 0, vertex);
  }
  return out;
}

}  // namespace reflex
