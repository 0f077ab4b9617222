#include <doctest.h>

#include <cmath>
#include <numbers>

#include <tbb/task_arena.h>

#include "reflex/fixtures.hpp"
#include "reflex/remesh.hpp"
#include "reflex/rng.hpp"

using namespace reflex;

namespace {

// Regular tetrahedron, edge length sqrt(8), outward orientation.
Mesh regular_tetrahedron() {
  return make_mesh({{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}},
                   {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

// Unit square split along (1, 2), plus a flap hinged on (1, 3) at 90 degrees.
Mesh square_with_flap() {
  return make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0.5, -1}},
                   {{0, 1, 2}, {1, 3, 2}, {3, 1, 4}});
}

std::vector<double> ones(const Mesh& m) { return std::vector<double>(m.face_count(), 1.0); }

Mesh jittered(Mesh m, double amount, uint64_t seed) {
  for (int v = 0; v < m.vertex_count(); ++v) {
    Rng rng = Rng::stream(seed, v);
    m.vertices[v] += amount * Vec3(rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5);
  }
  return m;
}

}  // namespace

TEST_CASE("refl_criterion sums adjacent face energies") {
  const std::vector<double> energy{12.97, 12.97, 3.0};
  CHECK(refl_criterion(energy, EdgeRef{{0, 1}, {0, 1}}) == doctest::Approx(25.94));
  CHECK(refl_criterion(energy, EdgeRef{{0, 1}, {2, -1}}) == 3.0);
  const std::vector<double> dark{0.0, 0.0};
  CHECK(refl_criterion(dark, EdgeRef{{0, 1}, {0, 1}}) == 0.0);
}

TEST_CASE("geom_criterion hand oracles") {
  SUBCASE("regular tetrahedron: four ring edges, each at the face-normal angle acos(-1/3)") {
    const Mesh t = regular_tetrahedron();
    const double expected = 4.0 * std::sqrt(8.0) * std::acos(-1.0 / 3.0);
    EdgeMap edges(t);
    for (const EdgeRef& e : edges.edges()) {
      CHECK(geom_criterion(t, e) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("one unit ring edge bent by 90 degrees") {
    const Mesh m = square_with_flap();
    EdgeMap edges(m);
    const EdgeRef& diag = edges[*edges.find(1, 2)];
    CHECK(geom_criterion(m, diag) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  }
  SUBCASE("planar neighbourhoods score zero") {
    const Mesh plate = jittered(fixtures::plate(5), 0.0, 0);
    EdgeMap edges(plate);
    for (const EdgeRef& e : edges.edges()) {
      if (e.interior()) CHECK(geom_criterion(plate, e) == 0.0);
    }
  }
}

TEST_CASE("geom_criterion is non-negative on perturbed meshes") {
  const Mesh m = jittered(fixtures::icosphere(2), 0.05, 4);
  EdgeMap edges(m);
  const auto normals = face_normals(m);
  for (int e = 0; e < edges.size(); ++e) CHECK(geom_criterion(m, edges, normals, e) >= 0.0);
}

TEST_CASE("select_and_split respects the quota") {
  const Mesh m = jittered(fixtures::plate(6), 0.08, 9);
  const EdgeMap edges(m);
  REQUIRE(edges.interior_count() == 96);
  const auto out = select_and_split(m, ones(m), 0.05);
  CHECK(out.report.selected.size() == 5);
  CHECK(out.report.split.size() <= 5);
  CHECK(out.report.new_vertices.size() == out.report.split.size());
  CHECK(out.mesh.vertex_count() == m.vertex_count() + static_cast<int>(out.report.split.size()));
  CHECK(out.mesh.face_count() == m.face_count() + 2 * static_cast<int>(out.report.split.size()));
  CHECK(total_area(out.mesh) == doctest::Approx(total_area(m)).epsilon(1e-12));
  for (int idx : out.report.selected) {
    CHECK(edges[out.report.scored[idx].edge].interior());
    CHECK(out.report.scored[idx].product > 0.0);
  }
  SUBCASE("ranking is by descending product") {
    for (size_t i = 1; i < out.report.selected.size(); ++i) {
      CHECK(out.report.scored[out.report.selected[i - 1]].product >=
            out.report.scored[out.report.selected[i]].product);
    }
  }
}

TEST_CASE("invalidated edges are skipped, not replaced") {
  // On the tetrahedron every edge shares a face with every other except its
  // opposite, so at most two of the six can be split in one batch.
  const Mesh t = regular_tetrahedron();
  const auto out = select_and_split(t, ones(t), 1.0);
  CHECK(out.report.selected.size() == 6);
  CHECK(out.report.split.size() == 2);
  CHECK(out.mesh.face_count() == 8);
}

TEST_CASE("raising the fraction never drops a selected edge") {
  const Mesh m = fixtures::bent_ridge(8);
  std::vector<double> energy(m.face_count());
  for (int f = 0; f < m.face_count(); ++f) energy[f] = 1.0 + 0.1 * (f % 7);
  std::vector<int> prev;
  for (double frac : {0.01, 0.05, 0.1, 0.3, 1.0}) {
    const auto rep = select_and_split(m, energy, frac).report;
    REQUIRE(rep.selected.size() >= prev.size());
    CHECK(std::equal(prev.begin(), prev.end(), rep.selected.begin()));
    prev = rep.selected;
  }
}

TEST_CASE("ties are broken by canonical edge id") {
  // Every interior edge of the regular tetrahedron scores the same.
  const Mesh t = regular_tetrahedron();
  const auto rep = select_and_split(t, ones(t), 1.0).report;
  CHECK(std::is_sorted(rep.selected.begin(), rep.selected.end()));
}

TEST_CASE("selection is deterministic and worker-count independent") {
  const Mesh m = jittered(fixtures::icosphere(3), 0.02, 11);
  std::vector<double> energy(m.face_count());
  for (int f = 0; f < m.face_count(); ++f) energy[f] = std::fmod(f * 0.618, 1.0);
  SplitOutcome one, four;
  tbb::task_arena(1).execute([&] { one = select_and_split(m, energy, 0.05); });
  tbb::task_arena(4).execute([&] { four = select_and_split(m, energy, 0.05); });
  CHECK(one.report.selected == four.report.selected);
  CHECK(one.report.split == four.report.split);
  CHECK(one.mesh.faces == four.mesh.faces);
  CHECK(one.mesh.vertices == four.mesh.vertices);
}

TEST_CASE("nothing splits without both criteria") {
  SUBCASE("planar mesh") {
    const Mesh plate = fixtures::plate(6);
    const auto out = select_and_split(plate, ones(plate), 0.05);
    CHECK(out.report.empty());
    CHECK(out.mesh.faces == plate.faces);
  }
  SUBCASE("zero energy") {
    const Mesh s = fixtures::icosphere(2);
    const auto out = select_and_split(s, std::vector<double>(s.face_count(), 0.0), 0.05);
    CHECK(out.report.empty());
    CHECK(out.mesh.vertex_count() == s.vertex_count());
  }
}

TEST_CASE("split keeps the reference surface in lockstep") {
  const Mesh m = fixtures::bent_ridge(6);
  Mesh deformed = jittered(m, 0.05, 2);
  const auto out = select_and_split(deformed, ones(deformed), 0.1);
  REQUIRE(!out.report.split.empty());
  CHECK(total_area(out.mesh) == doctest::Approx(total_area(deformed)).epsilon(1e-12));
  for (size_t i = 0; i < out.report.split.size(); ++i) {
    const auto [a, b] = out.report.scored[out.report.split[i]].endpoints;
    const int v = out.report.new_vertices[i];
    CHECK((out.mesh.vertices[v] - 0.5 * (deformed.vertices[a] + deformed.vertices[b])).norm() < 1e-15);
    CHECK((out.mesh.reference_vertices[v] -
           0.5 * (deformed.reference_vertices[a] + deformed.reference_vertices[b]))
              .norm() < 1e-15);
  }
}

TEST_CASE("argument checks and csv") {
  const Mesh t = regular_tetrahedron();
  CHECK_THROWS_AS(select_and_split(t, ones(t), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_and_split(t, ones(t), 1.5), std::invalid_argument);
  CHECK_THROWS_AS(select_and_split(t, std::vector<double>(3, 1.0), 0.5), std::invalid_argument);
  const auto rep = select_and_split(t, ones(t), 1.0).report;
  const std::string csv = split_csv_rows(rep, 2);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.rfind("2,0,", 0) == 0);
  CHECK(split_csv_header().find("c_geom") != std::string::npos);
}
