#pragma once

#include <optional>
#include <span>
#include <vector>

#include "reflex/mesh.hpp"

namespace reflex {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  int face_skip = -1;
};

struct Hit {
  int face = -1;
  double t = 0.0;
  Vec3 point;
};

// Self-intersection offset at the normalized (diagonal 3) scale.
inline constexpr double kRayEpsilon = 1e-5;

// Moller-Trumbore. Returns the ray parameter or a negative value on a miss.
double intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& e1,
                          const Vec3& e2);

// Binned-SAH bounding volume hierarchy over triangles. Nearest hits are
// resolved by (t, face index) so results match brute force exactly.
class Bvh {
 public:
  Bvh() = default;
  Bvh(std::span<const Vec3> vertices, std::span<const Face> faces);

  [[nodiscard]] std::optional<Hit> intersect(const Ray& ray, double t_min = kRayEpsilon,
                                             double t_max = 1e300) const;
  // True if anything lies on the ray within (t_min, t_max).
  [[nodiscard]] bool occluded(const Ray& ray, double t_min = kRayEpsilon,
                              double t_max = 1e300) const;
  [[nodiscard]] std::optional<Hit> intersect_brute_force(const Ray& ray,
                                                         double t_min = kRayEpsilon,
                                                         double t_max = 1e300) const;
  [[nodiscard]] int depth() const { return depth_; }
  [[nodiscard]] int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int first = 0;  // first triangle (leaf) or right child (inner)
    int count = 0;  // > 0 for leaves
  };
  struct Tri {
    Vec3 v0, e1, e2;
    int face;
  };

  int build(std::vector<int>& order, std::vector<Vec3>& centroids, std::vector<Vec3>& lo,
            std::vector<Vec3>& hi, int begin, int end, int depth);

  std::vector<Node> nodes_;
  std::vector<Tri> tris_;  // in leaf order
  int depth_ = 0;
};

}  // namespace reflex
