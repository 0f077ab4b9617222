#pragma once

#include <memory>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "reflex/gradient.hpp"
#include "reflex/mesh.hpp"

namespace reflex {

enum class ElementKind { RimSpoke, FaceOnly };
const char* to_string(ElementKind kind);

struct PositionConstraint {
  int vertex;
  Vec3 position;
};

inline constexpr double kMinCotWeight = 1e-6;
inline constexpr double kMaxCotWeight = 1e6;

struct RotationField {
  std::vector<Mat3> rotations;  // one per element
};

// Normal-driven ARAP energy
//   sum_k sum_{(i,j) in N_k} w_ij |R_k e_ij - e'_ij|^2 + lambda sum_k a_k |R_k n_k - t_k|^2
// over the reference mesh. RimSpoke elements are vertex stars (every edge of
// every incident face); FaceOnly elements are single triangles. Element
// normals n_k and areas a_k come from the reference mesh; for vertex
// elements they are the area-weighted average of the incident face normals
// and one third of the incident area.
class ArapSystem {
 public:
  ArapSystem(const Mesh& mesh, ElementKind kind, double lambda,
             std::vector<PositionConstraint> constraints = {});
  ~ArapSystem();
  ArapSystem(ArapSystem&&) noexcept;
  ArapSystem& operator=(ArapSystem&&) noexcept;

  [[nodiscard]] ElementKind kind() const { return kind_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  void set_lambda(double lambda);
  [[nodiscard]] int element_count() const { return static_cast<int>(elements_.size()); }
  [[nodiscard]] int vertex_count() const { return vertex_count_; }
  [[nodiscard]] int face_count() const { return static_cast<int>(faces_.size()); }
  // Weights cut down to kMaxCotWeight (sliver triangles).
  [[nodiscard]] int clamped_weights() const { return clamped_; }
  [[nodiscard]] const std::vector<PositionConstraint>& constraints() const { return constraints_; }
  // Vertices held fixed: the constraints plus one anchor per otherwise
  // unconstrained connected component.
  [[nodiscard]] const std::vector<int>& fixed_vertices() const { return fixed_; }
  // True if the system was built for this connectivity.
  [[nodiscard]] bool matches(const Mesh& mesh) const;

  // Per-element target t_k from per-face targets.
  [[nodiscard]] std::vector<Vec3> element_targets(const TargetNormals& targets) const;

  [[nodiscard]] RotationField local_step(std::span<const Vec3> deformed,
                                         const TargetNormals& targets) const;
  // Minimizes the edge term for fixed rotations. Constrained vertices take
  // their prescribed positions; anchors keep their positions in `current`.
  [[nodiscard]] std::vector<Vec3> global_step(const RotationField& rotations,
                                              std::span<const Vec3> current) const;

  [[nodiscard]] double energy(std::span<const Vec3> deformed, const RotationField& rotations,
                              const TargetNormals& targets) const;
  // Normal term alone, lambda sum_k a_k |R_k n_k - t_k|^2.
  [[nodiscard]] double normal_energy(const RotationField& rotations,
                                     const TargetNormals& targets) const;

  struct Trace {
    std::vector<double> energy;  // after each local+global pair
  };
  // `iters` local/global sweeps starting from `initial`.
  [[nodiscard]] std::vector<Vec3> solve(const TargetNormals& targets,
                                        std::span<const Vec3> initial, int iters,
                                        Trace* trace = nullptr) const;

 private:
  struct HalfEdge {
    int i, j;
    double w;
    Vec3 e;  // reference edge vector v_j - v_i
  };
  struct Element {
    std::vector<HalfEdge> edges;
    std::vector<std::pair<int, double>> faces;  // (face, weight) for the target average
    Vec3 normal;
    double area;
  };
  struct Factor;

  ElementKind kind_;
  double lambda_;
  int vertex_count_;
  std::vector<Face> faces_;
  std::vector<Element> elements_;
  std::vector<PositionConstraint> constraints_;
  std::vector<int> fixed_;
  std::vector<int> free_index_;  // vertex -> row among free vertices, -1 if fixed
  int clamped_ = 0;
  std::unique_ptr<Factor> factor_;
};

// Rotation maximizing tr(R S), i.e. minimizing sum |R a - b|^2 for
// S = sum a b^T. Identity when S vanishes.
Mat3 fit_rotation(const Mat3& covariance);

// Cotangent Laplacian (positive semi-definite convention) of the mesh with
// weights clamped to [kMinCotWeight, kMaxCotWeight].
Eigen::SparseMatrix<double> cotangent_laplacian(std::span<const Vec3> vertices,
                                                std::span<const Face> faces);

}  // namespace reflex
