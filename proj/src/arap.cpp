#include "reflex/arap.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "reflex/parallel.hpp"

namespace reflex {

const char* to_string(ElementKind kind) {
  return kind == ElementKind::RimSpoke ? "rim_spoke" : "face_only";
}

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Half cotangent of the angle at vertex `c` of triangle (a, b, c).
double half_cot(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 u = a - c, v = b - c;
  const double s = u.cross(v).norm();
  if (s <= 0.0) return std::numeric_limits<double>::infinity();
  return 0.5 * u.dot(v) / s;
}

// Non-positive weights (right and obtuse angles) are raised silently;
// `degenerate` counts slivers whose weight exceeds the upper bound.
double clamp_weight(double w, int& degenerate) {
  if (std::isnan(w) || w > kMaxCotWeight) {
    ++degenerate;
    return kMaxCotWeight;
  }
  return std::max(w, kMinCotWeight);
}

// Weight of the half-edge faces[f][i] -> faces[f][(i+1)%3]: half cotangent
// of the opposite angle.
std::array<double, 3> face_weights(std::span<const Vec3> v, const Face& f, int& clamped) {
  std::array<double, 3> w;
  for (int i = 0; i < 3; ++i) {
    const int a = f[i], b = f[(i + 1) % 3], c = f[(i + 2) % 3];
    w[i] = clamp_weight(half_cot(v[a], v[b], v[c]), clamped);
  }
  return w;
}

std::vector<int> component_labels(int n, std::span<const Face> faces) {
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Face& f : faces) {
    for (int i = 0; i < 3; ++i) {
      const int a = find(f[i]), b = find(f[(i + 1) % 3]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> label(n);
  for (int i = 0; i < n; ++i) label[i] = find(i);
  return label;
}

}  // namespace

struct ArapSystem::Factor {
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  SparseMatrix free_fixed;  // L restricted to (free rows, fixed cols)
};

ArapSystem::~ArapSystem() = default;
ArapSystem::ArapSystem(ArapSystem&&) noexcept = default;
ArapSystem& ArapSystem::operator=(ArapSystem&&) noexcept = default;

ArapSystem::ArapSystem(const Mesh& mesh, ElementKind kind, double lambda,
                       std::vector<PositionConstraint> constraints)
    : kind_(kind),
      lambda_(lambda),
      vertex_count_(mesh.vertex_count()),
      faces_(mesh.faces),
      constraints_(std::move(constraints)) {
  if (mesh.empty()) throw MeshError("ARAP system needs a non-empty mesh");
  set_lambda(lambda);
  const auto& ref = mesh.reference_vertices;
  const int nv = vertex_count_;
  const int nf = mesh.face_count();
  const auto normals = face_normals(ref, mesh.faces);
  const auto areas = face_areas(ref, mesh.faces);

  std::vector<std::array<double, 3>> weights(nf);
  for (int f = 0; f < nf; ++f) weights[f] = face_weights(ref, mesh.faces[f], clamped_);
  if (clamped_ > 0) {
    spdlog::warn("ARAP: {} sliver cotangent weights clamped to {:g}", clamped_, kMaxCotWeight);
  }

  auto face_half_edges = [&](int f, std::vector<HalfEdge>& out) {
    const Face& face = mesh.faces[f];
    for (int i = 0; i < 3; ++i) {
      const int a = face[i], b = face[(i + 1) % 3];
      out.push_back({a, b, weights[f][i], ref[b] - ref[a]});
    }
  };

  if (kind == ElementKind::FaceOnly) {
    elements_.resize(nf);
    for (int f = 0; f < nf; ++f) {
      Element& el = elements_[f];
      face_half_edges(f, el.edges);
      el.faces = {{f, 1.0}};
      el.normal = normals[f];
      el.area = areas[f];
    }
  } else {
    std::vector<std::vector<int>> star(nv);
    for (int f = 0; f < nf; ++f) {
      for (int v : mesh.faces[f]) star[v].push_back(f);
    }
    for (int v = 0; v < nv; ++v) {
      if (star[v].empty()) continue;  // isolated vertex
      Element el;
      Vec3 n = Vec3::Zero();
      double area = 0.0;
      for (int f : star[v]) {
        face_half_edges(f, el.edges);
        el.faces.emplace_back(f, areas[f]);
        n += areas[f] * normals[f];
        area += areas[f];
      }
      el.normal = n.norm() > 0.0 ? Vec3(n.normalized()) : Vec3::UnitZ();
      el.area = area / 3.0;
      elements_.push_back(std::move(el));
    }
  }

  // Fixed set: constraints, then one anchor per unconstrained component.
  std::vector<bool> is_fixed(nv, false);
  for (const auto& c : constraints_) {
    if (c.vertex < 0 || c.vertex >= nv) {
      throw std::invalid_argument(fmt::format("constraint on vertex {} out of range", c.vertex));
    }
    if (is_fixed[c.vertex]) {
      throw std::invalid_argument(fmt::format("vertex {} constrained twice", c.vertex));
    }
    is_fixed[c.vertex] = true;
    fixed_.push_back(c.vertex);
  }
  const auto label = component_labels(nv, mesh.faces);
  std::vector<bool> anchored(nv, false);
  for (int v = 0; v < nv; ++v) {
    if (is_fixed[v]) anchored[label[v]] = true;
  }
  for (int v = 0; v < nv; ++v) {
    if (!anchored[label[v]]) {
      anchored[label[v]] = true;
      is_fixed[v] = true;
      fixed_.push_back(v);
    }
  }
  free_index_.assign(nv, -1);
  int n_free = 0;
  for (int v = 0; v < nv; ++v) {
    if (!is_fixed[v]) free_index_[v] = n_free++;
  }
  std::vector<int> fixed_index(nv, -1);
  for (size_t k = 0; k < fixed_.size(); ++k) fixed_index[fixed_[k]] = static_cast<int>(k);

  std::vector<Triplet> ff, fc;
  auto add = [&](int r, int c, double w) {
    if (free_index_[r] < 0) return;
    if (free_index_[c] >= 0) {
      ff.emplace_back(free_index_[r], free_index_[c], w);
    } else {
      fc.emplace_back(free_index_[r], fixed_index[c], w);
    }
  };
  for (const Element& el : elements_) {
    for (const HalfEdge& h : el.edges) {
      add(h.i, h.i, h.w);
      add(h.j, h.j, h.w);
      add(h.i, h.j, -h.w);
      add(h.j, h.i, -h.w);
    }
  }
  factor_ = std::make_unique<Factor>();
  SparseMatrix a(n_free, n_free);
  a.setFromTriplets(ff.begin(), ff.end());
  factor_->free_fixed.resize(n_free, static_cast<int>(fixed_.size()));
  factor_->free_fixed.setFromTriplets(fc.begin(), fc.end());
  if (n_free > 0) {
    factor_->solver.compute(a);
    if (factor_->solver.info() != Eigen::Success) {
      throw std::runtime_error("ARAP global matrix is not positive definite");
    }
    if ((factor_->solver.vectorD().array() <= 0.0).any()) {
      throw std::runtime_error("ARAP global matrix is singular");
    }
  }
}

void ArapSystem::set_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and non-negative");
  }
  lambda_ = lambda;
}

bool ArapSystem::matches(const Mesh& mesh) const {
  return mesh.vertex_count() == vertex_count_ && mesh.faces == faces_;
}

std::vector<Vec3> ArapSystem::element_targets(const TargetNormals& targets) const {
  if (targets.size() != face_count()) {
    throw std::invalid_argument(
        fmt::format("{} targets for a system with {} faces", targets.size(), face_count()));
  }
  std::vector<Vec3> out(elements_.size());
  for (size_t k = 0; k < elements_.size(); ++k) {
    const Element& el = elements_[k];
    if (el.faces.size() == 1) {
      out[k] = targets[el.faces[0].first];
      continue;
    }
    Vec3 t = Vec3::Zero();
    for (const auto& [f, w] : el.faces) t += w * targets[f];
    out[k] = t.norm() > 0.0 ? Vec3(t.normalized()) : el.normal;
  }
  return out;
}

Mat3 fit_rotation(const Mat3& s) {
  if (s.squaredNorm() == 0.0 || !s.allFinite()) return Mat3::Identity();
  Eigen::JacobiSVD<Mat3> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 r = v * u.transpose();
  if (r.determinant() < 0.0) {
    u.col(2) *= -1.0;
    r = v * u.transpose();
  }
  return r;
}

RotationField ArapSystem::local_step(std::span<const Vec3> deformed,
                                     const TargetNormals& targets) const {
  if (static_cast<int>(deformed.size()) != vertex_count_) {
    throw std::invalid_argument("local_step: vertex count mismatch");
  }
  const auto t = element_targets(targets);
  RotationField out{std::vector<Mat3>(elements_.size())};
  parallel_for(element_count(), [&](int k) {
    const Element& el = elements_[k];
    Mat3 s = Mat3::Zero();
    for (const HalfEdge& h : el.edges) s += h.w * h.e * (deformed[h.j] - deformed[h.i]).transpose();
    s += lambda_ * el.area * el.normal * t[k].transpose();
    out.rotations[k] = fit_rotation(s);
  });
  return out;
}

std::vector<Vec3> ArapSystem::global_step(const RotationField& rotations,
                                          std::span<const Vec3> current) const {
  if (static_cast<int>(rotations.rotations.size()) != element_count()) {
    throw std::invalid_argument("global_step: rotation count mismatch");
  }
  if (static_cast<int>(current.size()) != vertex_count_) {
    throw std::invalid_argument("global_step: vertex count mismatch");
  }
  const int n_free = static_cast<int>(factor_->free_fixed.rows());
  const int n_fixed = static_cast<int>(fixed_.size());

  Eigen::MatrixX3d fixed_pos(n_fixed, 3);
  for (int k = 0; k < n_fixed; ++k) fixed_pos.row(k) = current[fixed_[k]].transpose();
  for (size_t k = 0; k < constraints_.size(); ++k) {
    fixed_pos.row(static_cast<int>(k)) = constraints_[k].position.transpose();
  }

  Eigen::MatrixX3d rhs = Eigen::MatrixX3d::Zero(n_free, 3);
  for (int k = 0; k < element_count(); ++k) {
    const Mat3& r = rotations.rotations[k];
    for (const HalfEdge& h : elements_[k].edges) {
      const Vec3 re = h.w * (r * h.e);
      if (free_index_[h.j] >= 0) rhs.row(free_index_[h.j]) += re.transpose();
      if (free_index_[h.i] >= 0) rhs.row(free_index_[h.i]) -= re.transpose();
    }
  }
  rhs -= factor_->free_fixed * fixed_pos;

  std::vector<Vec3> out(vertex_count_);
  if (n_free > 0) {
    const Eigen::MatrixX3d x = factor_->solver.solve(rhs);
    if (factor_->solver.info() != Eigen::Success || !x.allFinite()) {
      throw std::runtime_error("ARAP global solve failed");
    }
    for (int v = 0; v < vertex_count_; ++v) {
      if (free_index_[v] >= 0) out[v] = x.row(free_index_[v]).transpose();
    }
  }
  for (int k = 0; k < n_fixed; ++k) out[fixed_[k]] = fixed_pos.row(k).transpose();
  return out;
}

double ArapSystem::normal_energy(const RotationField& rotations,
                                 const TargetNormals& targets) const {
  const auto t = element_targets(targets);
  double e = 0.0;
  for (int k = 0; k < element_count(); ++k) {
    const Element& el = elements_[k];
    e += el.area * (rotations.rotations[k] * el.normal - t[k]).squaredNorm();
  }
  return lambda_ * e;
}

double ArapSystem::energy(std::span<const Vec3> deformed, const RotationField& rotations,
                          const TargetNormals& targets) const {
  double e = 0.0;
  for (int k = 0; k < element_count(); ++k) {
    const Mat3& r = rotations.rotations[k];
    for (const HalfEdge& h : elements_[k].edges) {
      e += h.w * (r * h.e - (deformed[h.j] - deformed[h.i])).squaredNorm();
    }
  }
  return e + normal_energy(rotations, targets);
}

std::vector<Vec3> ArapSystem::solve(const TargetNormals& targets, std::span<const Vec3> initial,
                                    int iters, Trace* trace) const {
  if (iters < 1) throw std::invalid_argument("ARAP solve needs at least one iteration");
  std::vector<Vec3> v(initial.begin(), initial.end());
  for (int it = 0; it < iters; ++it) {
    const RotationField r = local_step(v, targets);
    v = global_step(r, v);
    if (trace) trace->energy.push_back(energy(v, r, targets));
  }
  return v;
}

Eigen::SparseMatrix<double> cotangent_laplacian(std::span<const Vec3> vertices,
                                                std::span<const Face> faces) {
  const int n = static_cast<int>(vertices.size());
  std::vector<Triplet> trips;
  trips.reserve(faces.size() * 12);
  int clamped = 0;
  for (const Face& f : faces) {
    const auto w = face_weights(vertices, f, clamped);
    for (int i = 0; i < 3; ++i) {
      const int a = f[i], b = f[(i + 1) % 3];
      trips.emplace_back(a, a, w[i]);
      trips.emplace_back(b, b, w[i]);
      trips.emplace_back(a, b, -w[i]);
      trips.emplace_back(b, a, -w[i]);
    }
  }
  SparseMatrix l(n, n);
  l.setFromTriplets(trips.begin(), trips.end());
  return l;
}

}  // namespace reflex
