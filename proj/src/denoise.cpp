#include "reflex/denoise.hpp"

#include <cmath>

#include <Eigen/SparseCholesky>
#include <fmt/format.h>

namespace reflex {

void TvParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("tv alpha must be > 0");
  if (inner_iters < 1) throw std::invalid_argument("tv inner_iters must be >= 1");
  if (!std::isfinite(penalty)) throw std::invalid_argument("tv penalty must be finite");
}

namespace {

struct DualEdge {
  int f0, f1;
  double length;
};

std::vector<DualEdge> dual_edges(const Mesh& mesh) {
  EdgeMap edges(mesh);
  std::vector<DualEdge> out;
  for (const EdgeRef& e : edges.edges()) {
    if (!e.interior()) continue;
    const auto [a, b] = e.endpoints;
    out.push_back({e.faces[0], e.faces[1], (mesh.vertices[a] - mesh.vertices[b]).norm()});
  }
  return out;
}

double objective(const std::vector<double>& areas, const std::vector<DualEdge>& edges,
                 const std::vector<Vec3>& input, const std::vector<Vec3>& x, double alpha) {
  double fid = 0.0, tv = 0.0;
  for (size_t k = 0; k < x.size(); ++k) fid += areas[k] * (x[k] - input[k]).squaredNorm();
  for (const DualEdge& e : edges) tv += e.length * (x[e.f0] - x[e.f1]).norm();
  return 0.5 * alpha * fid + tv;
}

}  // namespace

double tv_objective(const Mesh& mesh, const TargetNormals& input, const std::vector<Vec3>& candidate,
                    double alpha) {
  return objective(face_areas(mesh), dual_edges(mesh), input.normals, candidate, alpha);
}

TargetNormals tv_filter(const Mesh& mesh, const TargetNormals& targets, const TvParams& params,
                        TvTrace* trace) {
  params.validate();
  const int nf = mesh.face_count();
  targets.validate(nf);
  const auto areas = face_areas(mesh);
  const auto edges = dual_edges(mesh);
  if (trace) {
    trace->objective.clear();
    trace->input_objective = objective(areas, edges, targets.normals, targets.normals, params.alpha);
  }
  if (edges.empty()) return targets;

  double mean_area = 0.0, mean_len = 0.0;
  for (double a : areas) mean_area += a;
  for (const DualEdge& e : edges) mean_len += e.length;
  mean_area /= nf;
  mean_len /= static_cast<double>(edges.size());
  const double r = params.penalty > 0.0 ? params.penalty : params.alpha * mean_area / mean_len;

  // (alpha A + r D^T W D) x = alpha A t + r D^T W (p - b)
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nf + 4 * edges.size());
  for (int k = 0; k < nf; ++k) trips.emplace_back(k, k, params.alpha * areas[k]);
  for (const DualEdge& e : edges) {
    const double w = r * e.length;
    trips.emplace_back(e.f0, e.f0, w);
    trips.emplace_back(e.f1, e.f1, w);
    trips.emplace_back(e.f0, e.f1, -w);
    trips.emplace_back(e.f1, e.f0, -w);
  }
  Eigen::SparseMatrix<double> a(nf, nf);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw std::runtime_error("TV system factorization failed");

  Eigen::MatrixX3d fidelity(nf, 3);
  for (int k = 0; k < nf; ++k) fidelity.row(k) = params.alpha * areas[k] * targets[k].transpose();

  const size_t ne = edges.size();
  std::vector<Vec3> p(ne), b(ne, Vec3::Zero());
  for (size_t i = 0; i < ne; ++i) p[i] = targets[edges[i].f0] - targets[edges[i].f1];
  std::vector<Vec3> x = targets.normals;
  std::vector<Vec3> best = x;
  double best_obj = trace ? trace->input_objective
                          : objective(areas, edges, targets.normals, x, params.alpha);

  for (int it = 0; it < params.inner_iters; ++it) {
    Eigen::MatrixX3d rhs = fidelity;
    for (size_t i = 0; i < ne; ++i) {
      const Vec3 g = r * edges[i].length * (p[i] - b[i]);
      rhs.row(edges[i].f0) += g.transpose();
      rhs.row(edges[i].f1) -= g.transpose();
    }
    const Eigen::MatrixX3d sol = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !sol.allFinite()) {
      throw std::runtime_error("TV linear solve failed");
    }
    for (int k = 0; k < nf; ++k) x[k] = sol.row(k).transpose();
    for (size_t i = 0; i < ne; ++i) {
      const Vec3 q = x[edges[i].f0] - x[edges[i].f1] + b[i];
      const double len = q.norm();
      const double shrink = len > 0.0 ? std::max(0.0, 1.0 - 1.0 / (r * len)) : 0.0;
      p[i] = shrink * q;
      b[i] = q - p[i];
    }
    const double obj = objective(areas, edges, targets.normals, x, params.alpha);
    if (trace) trace->objective.push_back(obj);
    if (obj <= best_obj) {
      best_obj = obj;
      best = x;
    }
  }

  TargetNormals out{std::move(best)};
  for (int k = 0; k < nf; ++k) {
    const double len = out[k].norm();
    out[k] = len > 1e-12 ? Vec3(out[k] / len) : targets[k];
  }
  return out;
}

}  // namespace reflex
