#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reflex/arap.hpp"
#include "reflex/denoise.hpp"
#include "reflex/energy.hpp"
#include "reflex/remesh.hpp"

namespace reflex {

struct HyperParams {
  double eta = 200.0;
  double beta = 0.1;
  double lambda_style = 1000.0;
  double tv_alpha = 250.0;
  int tv_iters = 20;
  int n_gradient = 8;
  int n_path = 8;
  int n_dir = 16;
  double theta0_deg = 20.0;
  std::array<int, 3> stage_iters{30, 30, 30};
  double split_fraction = 0.05;
  int arap_iters = 10;
  // Light directions per face for the E_refl reported in the history.
  int eval_n_dir = 64;
  // Baseline optimizers only.
  double baseline_eta = 0.05;
  double mu = 10.0;

  void validate() const;
  [[nodiscard]] SampleSettings sample_settings(uint64_t seed, uint64_t iteration) const;
  [[nodiscard]] DirectionalBand band(const Vec3& axis) const;
};

// Everything about the scene that stays fixed during a run.
struct Problem {
  PhongParams brdf{};
  ReflectivitySpec spec{};
  Vec3 band_axis = Vec3::UnitZ();
  double emitter_radiance = 1.0;
  uint64_t seed = 0;
  std::vector<PositionConstraint> constraints;

  void validate(const Mesh& mesh) const;
};

enum class Stage { CoarseRimSpoke, FineFace, PostSplitFace, Done };
const char* to_string(Stage stage);

struct HistoryRow {
  int iteration = 0;  // vertex updates completed; 0 is the input shape
  Stage stage = Stage::CoarseRimSpoke;
  double wall_ms = 0.0;
  double e_refl = 0.0;
  double e_std_error = 0.0;
  double mean_vertex_disp = 0.0;
  double mean_adj_normal_diff = 0.0;
  double rel_cell_area_diff = 0.0;
  int face_count = 0;
};

struct OptimizerState {
  Mesh mesh;
  TargetNormals targets;
  Stage stage = Stage::CoarseRimSpoke;
  ElementKind element = ElementKind::RimSpoke;
  int iteration = 0;
  int stage_iteration = 0;
  uint64_t gradient_steps = 0;
  int topology_revision = 0;
  std::vector<double> face_energy;  // from the last evaluation
  std::vector<HistoryRow> history;
  bool paused = false;
  bool split_requested = false;
  bool terminated = false;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  [[nodiscard]] double elapsed_ms() const;
};

// Extension points for steering. Snapshot delivery must not block; the
// other hooks run at defined points of the loop and may block (pause).
class RunHooks {
 public:
  virtual ~RunHooks() = default;
  // After the initial evaluation, every vertex update and every split.
  virtual void on_snapshot(const OptimizerState&, const HyperParams&) {}
  // Before every vertex update. Returning false ends the run cleanly.
  virtual bool before_update(OptimizerState&, HyperParams&) { return true; }
  // Before every gradient step.
  virtual void before_gradient_step(HyperParams&) {}
  virtual void on_split(const OptimizerState&, const SplitReport&) {}
};

// Fresh state for `mesh`: T = face normals, initial history row.
OptimizerState initial_state(const Mesh& mesh, const Problem& problem, const HyperParams& params);

// E_refl of the current shape. Every call uses the same random streams, so
// successive evaluations differ only through the geometry. `fixed_light`
// replaces the band with one direction.
EnergyEstimate evaluate(const Mesh& mesh, const Problem& problem, const HyperParams& params,
                        const std::optional<Vec3>& fixed_light = std::nullopt);

struct UpdateTrace {
  TargetNormals filtered;  // targets handed to the vertex solve
  double style_before = 0.0;
  double style_after = 0.0;
};

// n_gradient regularized normal steps, TV filter, ARAP solve, T reinit, one
// history row.
void vertex_update(OptimizerState& state, const ArapSystem& system, const Problem& problem,
                   HyperParams& params, RunHooks* hooks = nullptr, UpdateTrace* trace = nullptr);

// Splits the edges chosen by C_refl * C_geom and re-evaluates.
SplitReport split_step(OptimizerState& state, const Problem& problem, const HyperParams& params);

struct RunResult {
  OptimizerState state;
  std::vector<SplitReport> splits;
  HyperParams final_params;
};

// RimSpoke stage, FaceOnly stage, split, FaceOnly stage. The split runs only
// when the last stage has iterations.
RunResult run_schedule(const Mesh& input, const Problem& problem, HyperParams params,
                       RunHooks* hooks = nullptr);

// Mean |V' - V_ref| over vertices.
double mean_vertex_displacement(const Mesh& mesh);
// Mean angle (radians) between normals of faces sharing an edge.
double mean_adjacent_normal_difference(const Mesh& mesh);
// Mean over faces of |A'_k - A_k| / A_k against the reference areas.
double relative_cell_area_difference(const Mesh& mesh);

// Median of each length-`window` run of consecutive entries.
std::vector<double> sliding_medians(std::span<const double> values, int window);

std::string history_csv(std::span<const HistoryRow> rows);
std::string timing_csv(std::span<const HistoryRow> rows);

}  // namespace reflex
