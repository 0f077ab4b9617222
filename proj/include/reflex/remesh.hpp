#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "reflex/mesh.hpp"

namespace reflex {

struct ScoredEdge {
  int edge = -1;  // index into the pre-split EdgeMap
  std::array<int, 2> endpoints{-1, -1};
  double c_refl = 0.0;
  double c_geom = 0.0;
  double product = 0.0;
};

struct SplitReport {
  std::vector<ScoredEdge> scored;  // every edge, canonical order
  std::vector<int> selected;       // indices into `scored`, best first
  std::vector<int> split;          // subset of `selected` actually split
  std::vector<int> new_vertices;   // parallel to `split`

  [[nodiscard]] bool empty() const { return selected.empty(); }
};

// Sum of the adjacent faces' energies (one face for a boundary edge).
double refl_criterion(std::span<const double> per_face_energy, const EdgeRef& edge);

// Sum over the ring edges of |e_i| times the angle between the normals of
// the faces on either side of e_i. Boundary ring edges add nothing; dot
// products within 1e-9 of 1 count as flat.
double geom_criterion(const Mesh& mesh, const EdgeRef& edge);
double geom_criterion(const Mesh& mesh, const EdgeMap& edges, std::span<const Vec3> normals,
                      int edge);

// Splits the top ceil(fraction * interior edges) edges by C_refl * C_geom.
// Zero products are never selected. Edges invalidated by an earlier split
// in the batch are skipped, not replaced.
struct SplitOutcome {
  Mesh mesh;
  SplitReport report;
};
SplitOutcome select_and_split(const Mesh& mesh, std::span<const double> per_face_energy,
                              double fraction = 0.05);

// CSV with one row per selected edge.
std::string split_csv_header();
std::string split_csv_rows(const SplitReport& report, int batch);

}  // namespace reflex
