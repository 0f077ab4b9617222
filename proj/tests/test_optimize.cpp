#include <doctest.h>

#include <cmath>
#include <numbers>

#include <tbb/task_arena.h>

#include "reflex/baselines.hpp"
#include "reflex/fixtures.hpp"
#include "reflex/optimize.hpp"

using namespace reflex;

namespace {

HyperParams quick() {
  HyperParams p;
  p.n_gradient = 2;
  p.n_dir = 4;
  p.n_path = 2;
  p.eval_n_dir = 4;
  p.stage_iters = {2, 2, 2};
  p.arap_iters = 4;
  return p;
}

Mesh sphere() { return normalize_scale(fixtures::icosphere(2)); }

Problem problem(uint64_t seed = 3) {
  Problem p;
  p.seed = seed;
  return p;
}

class ScriptedHooks : public RunHooks {
 public:
  int snapshots = 0;
  int updates = 0;
  int stop_after = -1;
  bool request_split_at_first = false;
  std::vector<double> eta_seen;
  std::vector<int> split_faces;

  void on_snapshot(const OptimizerState& s, const HyperParams&) override {
    ++snapshots;
    REQUIRE(s.targets.size() == s.mesh.face_count());
    REQUIRE(static_cast<int>(s.face_energy.size()) == s.mesh.face_count());
  }
  bool before_update(OptimizerState& s, HyperParams& p) override {
    if (updates == stop_after) return false;
    if (updates == 0 && request_split_at_first) s.split_requested = true;
    if (updates == 1) p.eta = 50.0;
    ++updates;
    return true;
  }
  void before_gradient_step(HyperParams& p) override { eta_seen.push_back(p.eta); }
  void on_split(const OptimizerState& s, const SplitReport&) override {
    split_faces.push_back(s.mesh.face_count());
  }
};

}  // namespace

TEST_CASE("hyperparameter defaults and validation") {
  HyperParams p;
  CHECK(p.eta == 200.0);
  CHECK(p.beta == 0.1);
  CHECK(p.lambda_style == 1000.0);
  CHECK(p.tv_alpha == 250.0);
  CHECK(p.n_gradient == 8);
  CHECK(p.n_path == 8);
  CHECK(p.n_dir == 16);
  CHECK(p.theta0_deg == 20.0);
  CHECK(p.stage_iters == std::array<int, 3>{30, 30, 30});
  CHECK(p.split_fraction == 0.05);
  CHECK_NOTHROW(p.validate());
  p.eta = -5;
  try {
    p.validate();
    FAIL("accepted negative eta");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()) == "eta must be positive");
  }
  p = {};
  p.n_gradient = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.stage_iters = {1, -1, 0};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK(p.band(Vec3::UnitZ()).theta0 == doctest::Approx(20.0 * std::numbers::pi / 180.0));
}

TEST_CASE("metrics on known shapes") {
  Mesh cube = fixtures::cube(1);
  CHECK(mean_adjacent_normal_difference(cube) == doctest::Approx(std::numbers::pi / 3));
  Mesh moved = cube;
  for (Vec3& v : moved.vertices) v = 1.5 * v + Vec3(0, 0, 0);
  CHECK(relative_cell_area_difference(moved) == doctest::Approx(1.25));
  for (Vec3& v : moved.vertices) v = v / 1.5 + Vec3(0.3, 0, -0.4);
  CHECK(mean_vertex_displacement(moved) == doctest::Approx(0.5));
  CHECK(relative_cell_area_difference(moved) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sliding medians") {
  const std::vector<double> v{5, 1, 4, 2, 3, 9};
  CHECK(sliding_medians(v, 3) == std::vector<double>{4, 2, 3, 3});
  CHECK(sliding_medians(v, 2) == std::vector<double>{3, 2.5, 3, 2.5, 6});
  CHECK(sliding_medians(v, 7).empty());
}

TEST_CASE("an empty schedule returns the input") {
  HyperParams p = quick();
  p.stage_iters = {0, 0, 0};
  const Mesh m = sphere();
  const RunResult r = run_schedule(m, problem(), p);
  CHECK(r.state.mesh.vertices == m.vertices);
  CHECK(r.state.mesh.faces == m.faces);
  CHECK(r.state.history.size() == 1);
  CHECK(r.splits.empty());
  CHECK(r.state.stage == Stage::Done);
}

TEST_CASE("vertex_update bookkeeping") {
  HyperParams p = quick();
  const Problem pr = problem();
  OptimizerState s = initial_state(sphere(), pr, p);
  REQUIRE(s.history.size() == 1);
  const ArapSystem sys(s.mesh, ElementKind::RimSpoke, p.lambda_style);
  UpdateTrace trace;
  vertex_update(s, sys, pr, p, nullptr, &trace);
  CHECK(s.history.size() == 2);
  CHECK(s.iteration == 1);
  CHECK(s.gradient_steps == 2);
  CHECK(s.targets.normals == face_normals(s.mesh));
  CHECK(trace.style_after <= trace.style_before);
  CHECK(s.history[1].wall_ms >= s.history[0].wall_ms);

  const ArapSystem other(fixtures::icosphere(1), ElementKind::FaceOnly, 1.0);
  CHECK_THROWS_AS(vertex_update(s, other, pr, p), std::logic_error);
}

TEST_CASE("a scene with no retroreflection leaves the shape alone") {
  // Plate facing +z, light confined near the horizon, no diffuse lobe:
  // every retro radiance is zero.
  Problem pr;
  pr.brdf = {0.0, 1.0, 30.0};
  HyperParams p = quick();
  p.beta = 0.0;
  p.theta0_deg = 10.0;
  const Mesh plate = normalize_scale(fixtures::plate(6));
  OptimizerState s = initial_state(plate, pr, p);
  CHECK(s.history[0].e_refl == 0.0);
  const ArapSystem sys(s.mesh, ElementKind::FaceOnly, p.lambda_style);
  vertex_update(s, sys, pr, p);
  for (int v = 0; v < plate.vertex_count(); ++v) {
    CHECK((s.mesh.vertices[v] - plate.vertices[v]).norm() < 1e-9);
  }
}

TEST_CASE("the schedule reduces the stealth energy") {
  HyperParams p = quick();
  p.n_gradient = 4;
  p.n_dir = 8;
  p.eval_n_dir = 32;
  p.stage_iters = {4, 4, 2};
  const RunResult r = run_schedule(sphere(), problem(), p);
  const auto& h = r.state.history;
  REQUIRE(h.size() == 11);
  CHECK(h.back().e_refl < 0.8 * h.front().e_refl);
  CHECK(h.back().mean_vertex_disp < 0.3);
  REQUIRE(r.splits.size() == 1);
  CHECK(h.back().face_count == 320 + 2 * static_cast<int>(r.splits[0].split.size()));
  CHECK(h[4].stage == Stage::CoarseRimSpoke);
  CHECK(h[5].stage == Stage::FineFace);
  CHECK(h[9].stage == Stage::PostSplitFace);
}

TEST_CASE("runs are reproducible across worker counts") {
  const HyperParams p = quick();
  std::string one, two, four;
  tbb::task_arena(1).execute([&] { one = history_csv(run_schedule(sphere(), problem(7), p).state.history); });
  tbb::task_arena(1).execute([&] { two = history_csv(run_schedule(sphere(), problem(7), p).state.history); });
  tbb::task_arena(4).execute([&] { four = history_csv(run_schedule(sphere(), problem(7), p).state.history); });
  CHECK(one == two);
  CHECK(one == four);
  CHECK(one != history_csv(run_schedule(sphere(), problem(8), p).state.history));
  CHECK(std::count(one.begin(), one.end(), '\n') == 8);
  CHECK(timing_csv(run_schedule(sphere(), problem(7), p).state.history).rfind("iteration,stage,wall_ms\n", 0) == 0);
}

TEST_CASE("hooks steer the run") {
  SUBCASE("termination is clean") {
    ScriptedHooks hooks;
    hooks.stop_after = 2;
    const RunResult r = run_schedule(sphere(), problem(), quick(), &hooks);
    CHECK(r.state.terminated);
    CHECK(r.state.history.size() == 3);
    CHECK(hooks.snapshots == 3);
    CHECK(r.splits.empty());
  }
  SUBCASE("parameter changes apply from the next gradient step") {
    ScriptedHooks hooks;
    const RunResult r = run_schedule(sphere(), problem(), quick(), &hooks);
    REQUIRE(hooks.eta_seen.size() == 12);
    CHECK(hooks.eta_seen[0] == 200.0);
    CHECK(hooks.eta_seen[1] == 200.0);
    CHECK(hooks.eta_seen[2] == 50.0);
    CHECK(r.final_params.eta == 50.0);
  }
  SUBCASE("a requested split happens at the next stage boundary") {
    ScriptedHooks hooks;
    hooks.request_split_at_first = true;
    const RunResult r = run_schedule(sphere(), problem(), quick(), &hooks);
    REQUIRE(r.splits.size() == 2);
    CHECK(r.state.history[2].face_count == 320);
    CHECK(r.state.history[3].face_count > 320);
    CHECK(hooks.split_faces.size() == 2);
  }
}

TEST_CASE("vertex gradient matches finite differences of a normal functional") {
  Mesh m = normalize_scale(fixtures::icosphere(1));
  GradientBuffer g(m.face_count());
  for (int k = 0; k < m.face_count(); ++k) g.grad[k] = Vec3(std::sin(k), std::cos(3.0 * k), 0.5);
  auto functional = [&](const Mesh& x) {
    const auto n = face_normals(x);
    double s = 0.0;
    for (int k = 0; k < x.face_count(); ++k) s += g.grad[k].dot(n[k]);
    return s;
  };
  const auto dv = vertex_gradient(m, g);
  const double h = 1e-6;
  for (int v = 0; v < m.vertex_count(); ++v) {
    for (int a = 0; a < 3; ++a) {
      Mesh p = m, q = m;
      p.vertices[v][a] += h;
      q.vertices[v][a] -= h;
      CHECK(dv[v][a] == doctest::Approx((functional(p) - functional(q)) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("baseline limits") {
  const Mesh m = sphere();
  HyperParams p = quick();
  SUBCASE("zero step is the identity") {
    p.baseline_eta = 0.0;
    const BaselineResult r = baseline_vertex_descent(m, problem(), p, 2);
    CHECK(r.mesh.vertices == m.vertices);
    CHECK(r.history.size() == 3);
  }
  SUBCASE("mu = 0 reduces to direct descent") {
    p.baseline_eta = 0.02;
    p.mu = 0.0;
    const BaselineResult a = baseline_vertex_descent(m, problem(), p, 2);
    const BaselineResult b = baseline_preconditioned(m, problem(), p, 1, 2);
    const BaselineResult c = baseline_preconditioned(m, problem(), p, 2, 2);
    CHECK(a.mesh.vertices == b.mesh.vertices);
    CHECK(a.mesh.vertices == c.mesh.vertices);
    CHECK(a.mesh.vertices != m.vertices);
  }
  SUBCASE("collapse stops the run with the history intact") {
    p.baseline_eta = 1e4;
    const BaselineResult r = baseline_vertex_descent(m, problem(), p, 3);
    CHECK(r.collapsed);
    CHECK(!r.failure.empty());
    CHECK(r.history.size() >= 1);
    CHECK_NOTHROW(face_normals(r.mesh));
  }
  SUBCASE("bad arguments") {
    CHECK_THROWS_AS(baseline_preconditioned(m, problem(), p, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(baseline_preconditioned(m, problem(), p, 1, -1), std::invalid_argument);
  }
}

TEST_CASE("bi-Laplacian steps are smoother than Laplacian steps") {
  const Mesh m = sphere();
  HyperParams p = quick();
  p.baseline_eta = 0.2;
  const auto lap = cotangent_laplacian(m.reference_vertices, m.faces);
  auto roughness = [&](const Mesh& out) {
    Eigen::MatrixX3d d(m.vertex_count(), 3);
    for (int v = 0; v < m.vertex_count(); ++v) d.row(v) = out.vertices[v] - m.vertices[v];
    const double disp = d.norm();
    return (lap * d).norm() / disp;
  };
  const BaselineResult one = baseline_preconditioned(m, problem(), p, 1, 2);
  const BaselineResult two = baseline_preconditioned(m, problem(), p, 2, 2);
  CHECK(roughness(two.mesh) < roughness(one.mesh));
}

TEST_CASE("match_reduction finds a step reaching the target") {
  const Mesh m = sphere();
  HyperParams p = quick();
  p.n_dir = 8;
  p.eval_n_dir = 32;
  const double e0 = initial_state(m, problem(), p).history[0].e_refl;
  const MatchedBaseline mb = match_reduction(m, problem(), p, 0, 2, 0.8 * e0);
  CHECK(mb.matched);
  CHECK(mb.result.history.back().e_refl <= 0.8 * e0);
  CHECK(mb.eta > 1e-3);
}
