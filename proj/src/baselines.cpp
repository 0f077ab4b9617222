#include "reflex/baselines.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

namespace reflex {

std::vector<Vec3> vertex_gradient(const Mesh& mesh, const GradientBuffer& normal_gradient) {
  if (normal_gradient.size() != mesh.face_count()) {
    throw std::invalid_argument("gradient size does not match the face count");
  }
  std::vector<Vec3> out(mesh.vertex_count(), Vec3::Zero());
  for (int k = 0; k < mesh.face_count(); ++k) {
    const Face& f = mesh.faces[k];
    const Vec3 c = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                       .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
    const double twice_area = c.norm();
    if (twice_area < 2.0 * kDegenerateArea) continue;
    const Vec3 n = c / twice_area;
    const Vec3& g = normal_gradient.grad[k];
    // dn/dv_i = (e_i x n) n^T / 2A, e_i the edge opposite v_i in winding order.
    for (int i = 0; i < 3; ++i) {
      const Vec3 e = mesh.vertices[f[(i + 2) % 3]] - mesh.vertices[f[(i + 1) % 3]];
      out[f[i]] += n * (e.cross(n).dot(g) / twice_area);
    }
  }
  return out;
}

namespace {

// A face whose area vanished, or whose normal flipped within one step and so
// passed through zero area.
bool degenerate(const Mesh& before, const Mesh& after) {
  for (int k = 0; k < after.face_count(); ++k) {
    const Face& f = after.faces[k];
    const Vec3 c1 = (after.vertices[f[1]] - after.vertices[f[0]])
                        .cross(after.vertices[f[2]] - after.vertices[f[0]]);
    const Vec3 c0 = (before.vertices[f[1]] - before.vertices[f[0]])
                        .cross(before.vertices[f[2]] - before.vertices[f[0]]);
    if (!(0.5 * c1.norm() >= kDegenerateArea) || !(c1.dot(c0) > 0.0)) return true;
  }
  return false;
}

HistoryRow row_for(const Mesh& mesh, int iteration, const EnergyEstimate& e,
                   std::chrono::steady_clock::time_point started) {
  HistoryRow row;
  row.iteration = iteration;
  row.stage = Stage::Done;
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                    .count();
  row.e_refl = e.total;
  row.e_std_error = e.std_error;
  row.mean_vertex_disp = mean_vertex_displacement(mesh);
  row.mean_adj_normal_diff = mean_adjacent_normal_difference(mesh);
  row.rel_cell_area_diff = relative_cell_area_difference(mesh);
  row.face_count = mesh.face_count();
  return row;
}

}  // namespace

BaselineResult baseline_preconditioned(const Mesh& input, const Problem& problem,
                                       const HyperParams& params, int order, int updates) {
  if (order < 0 || order > 2) throw std::invalid_argument("preconditioner order must be 0, 1 or 2");
  if (updates < 0) throw std::invalid_argument("updates must be >= 0");
  params.validate();
  problem.validate(input);
  const auto started = std::chrono::steady_clock::now();
  const int nv = input.vertex_count();

  std::optional<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> solver;
  if (order > 0 && params.mu > 0.0) {
    const Eigen::SparseMatrix<double> lap =
        cotangent_laplacian(input.reference_vertices, input.faces);
    Eigen::SparseMatrix<double> id(nv, nv);
    id.setIdentity();
    const Eigen::SparseMatrix<double> p =
        order == 1 ? Eigen::SparseMatrix<double>(id + params.mu * lap)
                   : Eigen::SparseMatrix<double>(id + params.mu * (lap * lap));
    solver.emplace(p);
    if (solver->info() != Eigen::Success) throw std::runtime_error("preconditioner factorization failed");
  }
  std::vector<bool> fixed(nv, false);
  for (const PositionConstraint& c : problem.constraints) fixed[c.vertex] = true;

  BaselineResult result;
  result.mesh = input;
  result.history.push_back(row_for(input, 0, evaluate(input, problem, params), started));
  uint64_t step = 0;
  for (int u = 1; u <= updates && !result.collapsed; ++u) {
    for (int s = 0; s < params.n_gradient; ++s) {
      const PhongScene scene = build_scene(result.mesh, problem.brdf,
                                           params.band(problem.band_axis), problem.emitter_radiance);
      const TargetNormals normals{scene.normals()};
      const EnergyGradient eg = energy_gradient(scene, problem.spec, normals,
                                                params.sample_settings(problem.seed, step++));
      const auto gv = vertex_gradient(result.mesh, eg.gradient);
      Eigen::MatrixX3d g(nv, 3);
      for (int v = 0; v < nv; ++v) g.row(v) = fixed[v] ? Vec3(Vec3::Zero()) : gv[v];
      if (solver) {
        g = solver->solve(g);
        if (solver->info() != Eigen::Success) throw std::runtime_error("preconditioner solve failed");
      }
      Mesh next = result.mesh;
      for (int v = 0; v < nv; ++v) {
        if (!fixed[v]) next.vertices[v] -= params.baseline_eta * g.row(v).transpose();
      }
      if (degenerate(result.mesh, next)) {
        result.collapsed = true;
        result.failure = fmt::format("face collapsed in update {} step {}", u, s + 1);
        break;
      }
      result.mesh = std::move(next);
    }
    if (result.collapsed) break;
    result.history.push_back(row_for(result.mesh, u, evaluate(result.mesh, problem, params), started));
  }
  return result;
}

MatchedBaseline match_reduction(const Mesh& input, const Problem& problem, HyperParams params,
                                int order, int updates, double target_energy, int grid_points,
                                int refine, double eta_lo, double eta_hi) {
  if (!(eta_lo > 0.0 && eta_hi > eta_lo)) throw std::invalid_argument("bad eta bracket");
  if (grid_points < 2 || refine < 0) throw std::invalid_argument("bad search budget");
  MatchedBaseline best;
  double best_energy = std::numeric_limits<double>::infinity();
  auto attempt = [&](double eta) {
    params.baseline_eta = eta;
    BaselineResult r = baseline_preconditioned(input, problem, params, order, updates);
    const double e = r.history.back().e_refl;
    const bool ok = !r.collapsed && e <= target_energy;
    if (ok && (!best.matched || eta < best.eta)) {
      best = {eta, std::move(r), true};
    } else if (!best.matched && !r.collapsed && e < best_energy) {
      best_energy = e;
      best = {eta, std::move(r), false};
    }
    return ok;
  };
  const double ratio = std::pow(eta_hi / eta_lo, 1.0 / (grid_points - 1));
  double below = 0.0;
  for (int i = 0; i < grid_points; ++i) {
    const double eta = eta_lo * std::pow(ratio, i);
    if (attempt(eta)) break;
    below = eta;
  }
  if (!best.matched || below == 0.0) return best;
  double lo = below, hi = best.eta;
  for (int i = 0; i < refine; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (attempt(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return best;
}

}  // namespace reflex
