#include "reflex/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace reflex {

namespace {

// Evaluation passes live in their own stream family, away from gradient steps.
constexpr uint64_t kEvalStream = uint64_t{1} << 62;

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

void HyperParams::validate() const {
  require(eta > 0.0 && std::isfinite(eta), "eta must be positive");
  require(beta >= 0.0 && std::isfinite(beta), "beta must be non-negative");
  require(lambda_style > 0.0 && std::isfinite(lambda_style), "lambda_style must be positive");
  require(tv_alpha > 0.0 && std::isfinite(tv_alpha), "tv_alpha must be positive");
  require(tv_iters >= 1, "tv_iters must be >= 1");
  require(n_gradient >= 1, "n_gradient must be >= 1");
  require(n_path >= 1, "n_path must be >= 1");
  require(n_dir >= 1, "n_dir must be >= 1");
  require(theta0_deg > 0.0 && theta0_deg <= 90.0, "theta0 must be in (0, 90] degrees");
  for (int n : stage_iters) require(n >= 0, "stage_iters must be >= 0");
  require(split_fraction > 0.0 && split_fraction <= 1.0, "split_fraction must be in (0, 1]");
  require(arap_iters >= 1, "arap_iters must be >= 1");
  require(eval_n_dir >= 1, "eval_n_dir must be >= 1");
  require(baseline_eta >= 0.0 && std::isfinite(baseline_eta), "baseline_eta must be >= 0");
  require(mu >= 0.0 && std::isfinite(mu), "mu must be >= 0");
}

SampleSettings HyperParams::sample_settings(uint64_t seed, uint64_t iteration) const {
  SampleSettings s;
  s.n_dir = n_dir;
  s.trace.n_path = n_path;
  s.seed = seed;
  s.iteration = iteration;
  return s;
}

DirectionalBand HyperParams::band(const Vec3& axis) const {
  return {theta0_deg * std::numbers::pi / 180.0, axis};
}

void Problem::validate(const Mesh& mesh) const {
  brdf.validate();
  spec.validate();
  require(emitter_radiance > 0.0, "emitter radiance must be positive");
  require(std::abs(band_axis.norm() - 1.0) < 1e-9, "band axis must be a unit vector");
  for (const PositionConstraint& c : constraints) {
    require(c.vertex >= 0 && c.vertex < mesh.vertex_count(), "constraint vertex out of range");
  }
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::CoarseRimSpoke: return "coarse_rimspoke";
    case Stage::FineFace: return "fine_face";
    case Stage::PostSplitFace: return "post_split_face";
    case Stage::Done: return "done";
  }
  return "?";
}

double OptimizerState::elapsed_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
      .count();
}

EnergyEstimate evaluate(const Mesh& mesh, const Problem& problem, const HyperParams& params,
                        const std::optional<Vec3>& fixed_light) {
  const PhongScene scene =
      build_scene(mesh, problem.brdf, params.band(problem.band_axis), problem.emitter_radiance);
  SampleSettings settings = params.sample_settings(problem.seed, kEvalStream);
  settings.n_dir = params.eval_n_dir;
  if (fixed_light) settings.fixed_light = fixed_light->normalized();
  return total_energy(scene, problem.spec, settings);
}

namespace {

void record(OptimizerState& state, const Problem& problem, const HyperParams& params) {
  const EnergyEstimate e = evaluate(state.mesh, problem, params);
  state.face_energy = e.per_face;
  HistoryRow row;
  row.iteration = state.iteration;
  row.stage = state.stage;
  row.wall_ms = state.elapsed_ms();
  row.e_refl = e.total;
  row.e_std_error = e.std_error;
  row.mean_vertex_disp = mean_vertex_displacement(state.mesh);
  row.mean_adj_normal_diff = mean_adjacent_normal_difference(state.mesh);
  row.rel_cell_area_diff = relative_cell_area_difference(state.mesh);
  row.face_count = state.mesh.face_count();
  state.history.push_back(row);
}

}  // namespace

OptimizerState initial_state(const Mesh& mesh, const Problem& problem, const HyperParams& params) {
  params.validate();
  problem.validate(mesh);
  OptimizerState state;
  state.mesh = mesh;
  state.targets = {face_normals(mesh)};
  record(state, problem, params);
  return state;
}

void vertex_update(OptimizerState& state, const ArapSystem& system, const Problem& problem,
                   HyperParams& params, RunHooks* hooks, UpdateTrace* trace) {
  if (!system.matches(state.mesh)) {
    throw std::logic_error("ARAP system does not match the current mesh");
  }
  const PhongScene scene = build_scene(state.mesh, problem.brdf, params.band(problem.band_axis),
                                       problem.emitter_radiance);
  const auto reference = reference_face_normals(state.mesh);
  TargetNormals t = state.targets;
  for (int s = 0; s < params.n_gradient; ++s) {
    if (hooks) {
      hooks->before_gradient_step(params);
      params.validate();
    }
    const EnergyGradient eg = energy_gradient(
        scene, problem.spec, t, params.sample_settings(problem.seed, state.gradient_steps++));
    t = regularized_step(t, eg.gradient, reference, params.eta, params.beta, scene.areas());
  }
  t = tv_filter(state.mesh, t, TvParams{params.tv_alpha, params.tv_iters});
  std::vector<Vec3> solved = system.solve(t, state.mesh.vertices, params.arap_iters);
  if (trace) {
    trace->style_before =
        system.energy(state.mesh.vertices, system.local_step(state.mesh.vertices, t), t);
    trace->style_after = system.energy(solved, system.local_step(solved, t), t);
    trace->filtered = t;
  }
  state.mesh.vertices = std::move(solved);
  state.targets = {face_normals(state.mesh)};
  ++state.iteration;
  ++state.stage_iteration;
  record(state, problem, params);
}

SplitReport split_step(OptimizerState& state, const Problem& problem, const HyperParams& params) {
  SplitOutcome out = select_and_split(state.mesh, state.face_energy, params.split_fraction);
  if (!out.report.split.empty()) {
    state.mesh = std::move(out.mesh);
    state.targets = {face_normals(state.mesh)};
    state.face_energy = evaluate(state.mesh, problem, params).per_face;
    ++state.topology_revision;
  }
  state.split_requested = false;
  return std::move(out.report);
}

RunResult run_schedule(const Mesh& input, const Problem& problem, HyperParams params,
                       RunHooks* hooks) {
  RunResult result;
  OptimizerState& state = result.state;
  state = initial_state(input, problem, params);
  if (hooks) hooks->on_snapshot(state, params);

  constexpr std::array<Stage, 3> kStages{Stage::CoarseRimSpoke, Stage::FineFace,
                                         Stage::PostSplitFace};
  constexpr std::array<ElementKind, 3> kElements{ElementKind::RimSpoke, ElementKind::FaceOnly,
                                                 ElementKind::FaceOnly};
  auto do_split = [&] {
    SplitReport report = split_step(state, problem, params);
    spdlog::debug("split {} of {} selected edges", report.split.size(), report.selected.size());
    if (hooks) {
      hooks->on_split(state, report);
      hooks->on_snapshot(state, params);
    }
    result.splits.push_back(std::move(report));
  };
  for (int si = 0; si < 3 && !state.terminated; ++si) {
    state.stage = kStages[si];
    state.element = kElements[si];
    state.stage_iteration = 0;
    std::optional<ArapSystem> system;
    while (state.stage_iteration < params.stage_iters[si]) {
      if (hooks && !hooks->before_update(state, params)) {
        state.terminated = true;
        break;
      }
      params.validate();
      if (!system || system->kind() != state.element || !system->matches(state.mesh)) {
        system.emplace(state.mesh, state.element, params.lambda_style, problem.constraints);
      } else if (system->lambda() != params.lambda_style) {
        system->set_lambda(params.lambda_style);
      }
      vertex_update(state, *system, problem, params, hooks);
      if (hooks) hooks->on_snapshot(state, params);
    }
    if (state.terminated) break;
    const bool scheduled = si == 1 && params.stage_iters[2] > 0;
    if (scheduled || state.split_requested) do_split();
  }
  state.stage = Stage::Done;
  result.final_params = params;
  return result;
}

double mean_vertex_displacement(const Mesh& mesh) {
  if (mesh.vertices.empty()) return 0.0;
  double sum = 0.0;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    sum += (mesh.vertices[v] - mesh.reference_vertices[v]).norm();
  }
  return sum / mesh.vertex_count();
}

double mean_adjacent_normal_difference(const Mesh& mesh) {
  const auto normals = face_normals(mesh);
  EdgeMap edges(mesh);
  double sum = 0.0;
  int n = 0;
  for (const EdgeRef& e : edges.edges()) {
    if (!e.interior()) continue;
    sum += std::acos(std::clamp(normals[e.faces[0]].dot(normals[e.faces[1]]), -1.0, 1.0));
    ++n;
  }
  return n ? sum / n : 0.0;
}

double relative_cell_area_difference(const Mesh& mesh) {
  const auto now = face_areas(mesh.vertices, mesh.faces);
  const auto ref = face_areas(mesh.reference_vertices, mesh.faces);
  double sum = 0.0;
  for (size_t k = 0; k < now.size(); ++k) sum += std::abs(now[k] - ref[k]) / ref[k];
  return now.empty() ? 0.0 : sum / static_cast<double>(now.size());
}

std::vector<double> sliding_medians(std::span<const double> values, int window) {
  std::vector<double> out;
  if (window < 1 || static_cast<int>(values.size()) < window) return out;
  for (size_t i = 0; i + window <= values.size(); ++i) {
    std::vector<double> w(values.begin() + i, values.begin() + i + window);
    std::nth_element(w.begin(), w.begin() + window / 2, w.end());
    double m = w[window / 2];
    if (window % 2 == 0) {
      m = 0.5 * (m + *std::max_element(w.begin(), w.begin() + window / 2));
    }
    out.push_back(m);
  }
  return out;
}

std::string history_csv(std::span<const HistoryRow> rows) {
  std::string out =
      "iteration,stage,e_refl,e_std_error,mean_vertex_disp,mean_adj_normal_diff,rel_cell_area_diff,"
      "face_count\n";
  for (const HistoryRow& r : rows) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.iteration,
                       to_string(r.stage), r.e_refl, r.e_std_error, r.mean_vertex_disp,
                       r.mean_adj_normal_diff, r.rel_cell_area_diff, r.face_count);
  }
  return out;
}

std::string timing_csv(std::span<const HistoryRow> rows) {
  std::string out = "iteration,stage,wall_ms\n";
  for (const HistoryRow& r : rows) {
    out += fmt::format("{},{},{:.3f}\n", r.iteration, to_string(r.stage), r.wall_ms);
  }
  return out;
}

}  // namespace reflex
