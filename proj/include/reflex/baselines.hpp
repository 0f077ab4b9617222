#pragma once

#include <string>
#include <vector>

#include "reflex/optimize.hpp"

namespace reflex {

// dE/dV from per-face normal gradients through dn_k/dV only; area and
// sample-point dependence are ignored.
std::vector<Vec3> vertex_gradient(const Mesh& mesh, const GradientBuffer& normal_gradient);

struct BaselineResult {
  Mesh mesh;
  std::vector<HistoryRow> history;
  bool collapsed = false;  // a face degenerated or flipped; `mesh` is the last valid shape
  std::string failure;
};

// `updates` rounds of n_gradient steps V <- V - baseline_eta * P^-1 dE/dV with
// P = I (order 0), I + mu L (order 1) or I + mu L^2 (order 2), L being the
// cotangent Laplacian of the reference mesh. Constrained vertices stay put.
// Gradient steps draw the same random streams as run_schedule.
BaselineResult baseline_preconditioned(const Mesh& input, const Problem& problem,
                                       const HyperParams& params, int order, int updates);

inline BaselineResult baseline_vertex_descent(const Mesh& input, const Problem& problem,
                                              const HyperParams& params, int updates) {
  return baseline_preconditioned(input, problem, params, 0, updates);
}

struct MatchedBaseline {
  double eta = 0.0;
  BaselineResult result;
  bool matched = false;  // final E_refl reached the target
};

// Smallest baseline_eta in [eta_lo, eta_hi] whose run ends at or below
// `target_energy`: a geometric grid scan, then bisection between the first
// success and the grid point before it. Collapsed runs never match. Falls
// back to the lowest final energy seen.
MatchedBaseline match_reduction(const Mesh& input, const Problem& problem, HyperParams params,
                                int order, int updates, double target_energy,
                                int grid_points = 9, int refine = 4, double eta_lo = 1e-3,
                                double eta_hi = 10.0);

}  // namespace reflex
