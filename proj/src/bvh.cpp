#include "reflex/bvh.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace reflex {

namespace {

constexpr int kLeafSize = 4;
constexpr int kBins = 16;

struct Box {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Box& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  [[nodiscard]] double area() const {
    if (lo.x() > hi.x()) return 0.0;
    const Vec3 d = hi - lo;
    return 2.0 * (d.x() * d.y() + d.y() * d.z() + d.z() * d.x());
  }
};

// Slab test; returns entry distance or +inf on a miss.
inline double slab(const Vec3& lo, const Vec3& hi, const Vec3& origin, const Vec3& inv_dir,
                   double t_min, double t_max) {
  double t0 = t_min, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double tn = (lo[a] - origin[a]) * inv_dir[a];
    double tf = (hi[a] - origin[a]) * inv_dir[a];
    if (tn > tf) std::swap(tn, tf);
    // NaN from 0 * inf (origin on a slab plane) keeps the interval.
    if (tn > t0) t0 = tn;
    if (tf < t1) t1 = tf;
  }
  // Relative slack so boxes never reject a hit the triangle test would accept.
  return t0 <= t1 * (1.0 + 1e-9) + 1e-12 ? t0 : std::numeric_limits<double>::infinity();
}

}  // namespace

double intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0, const Vec3& e1,
                          const Vec3& e2) {
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-300) return -1.0;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return -1.0;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return -1.0;
  return e2.dot(qvec) * inv_det;
}

Bvh::Bvh(std::span<const Vec3> vertices, std::span<const Face> faces) {
  const int n = static_cast<int>(faces.size());
  std::vector<int> order(n);
  std::vector<Vec3> centroids(n), lo(n), hi(n);
  for (int f = 0; f < n; ++f) {
    order[f] = f;
    const Vec3& a = vertices[faces[f][0]];
    const Vec3& b = vertices[faces[f][1]];
    const Vec3& c = vertices[faces[f][2]];
    centroids[f] = (a + b + c) / 3.0;
    lo[f] = a.cwiseMin(b).cwiseMin(c);
    hi[f] = a.cwiseMax(b).cwiseMax(c);
  }
  nodes_.reserve(2 * n / kLeafSize + 1);
  if (n > 0) build(order, centroids, lo, hi, 0, n, 1);
  tris_.reserve(n);
  for (int f : order) {
    const Vec3& a = vertices[faces[f][0]];
    tris_.push_back({a, vertices[faces[f][1]] - a, vertices[faces[f][2]] - a, f});
  }
}

int Bvh::build(std::vector<int>& order, std::vector<Vec3>& centroids, std::vector<Vec3>& lo,
               std::vector<Vec3>& hi, int begin, int end, int depth) {
  depth_ = std::max(depth_, depth);
  const int index = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Box bounds, cbounds;
  for (int i = begin; i < end; ++i) {
    bounds.grow(lo[order[i]]);
    bounds.grow(hi[order[i]]);
    cbounds.grow(centroids[order[i]]);
  }
  nodes_[index].lo = bounds.lo;
  nodes_[index].hi = bounds.hi;
  const int count = end - begin;

  auto make_leaf = [&] {
    nodes_[index].first = begin;
    nodes_[index].count = count;
    return index;
  };
  if (count <= kLeafSize) return make_leaf();

  int best_axis = -1, best_split = -1;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double extent = cbounds.hi[axis] - cbounds.lo[axis];
    if (extent <= 0.0) continue;
    std::array<Box, kBins> boxes{};
    std::array<int, kBins> counts{};
    for (int i = begin; i < end; ++i) {
      const int f = order[i];
      int b = static_cast<int>(kBins * (centroids[f][axis] - cbounds.lo[axis]) / extent);
      b = std::clamp(b, 0, kBins - 1);
      ++counts[b];
      boxes[b].grow(lo[f]);
      boxes[b].grow(hi[f]);
    }
    std::array<double, kBins> right_cost{};
    Box acc;
    int acc_n = 0;
    for (int b = kBins - 1; b > 0; --b) {
      acc.grow(boxes[b]);
      acc_n += counts[b];
      right_cost[b] = acc.area() * acc_n;
    }
    acc = Box{};
    acc_n = 0;
    for (int b = 0; b < kBins - 1; ++b) {
      acc.grow(boxes[b]);
      acc_n += counts[b];
      const double cost = acc.area() * acc_n + right_cost[b + 1];
      if (acc_n > 0 && acc_n < count && cost < best_cost) {
        best_cost = cost;
        best_axis = axis;
        best_split = b;
      }
    }
  }

  int mid;
  if (best_axis < 0) {
    // All centroids coincide: split by index.
    mid = begin + count / 2;
  } else {
    const double extent = cbounds.hi[best_axis] - cbounds.lo[best_axis];
    auto it = std::partition(order.begin() + begin, order.begin() + end, [&](int f) {
      int b = static_cast<int>(kBins * (centroids[f][best_axis] - cbounds.lo[best_axis]) / extent);
      return std::clamp(b, 0, kBins - 1) <= best_split;
    });
    mid = static_cast<int>(it - order.begin());
    if (mid == begin || mid == end) mid = begin + count / 2;
  }
  build(order, centroids, lo, hi, begin, mid, depth + 1);
  const int right = build(order, centroids, lo, hi, mid, end, depth + 1);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

std::optional<Hit> Bvh::intersect(const Ray& ray, double t_min, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_dir = ray.direction.cwiseInverse();
  double best_t = t_max;
  int best_face = -1;
  std::array<int, 128> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (slab(node.lo, node.hi, ray.origin, inv_dir, t_min, best_t) ==
        std::numeric_limits<double>::infinity()) {
      continue;
    }
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const Tri& tri = tris_[i];
        if (tri.face == ray.face_skip) continue;
        const double t = intersect_triangle(ray.origin, ray.direction, tri.v0, tri.e1, tri.e2);
        if (t > t_min && (t < best_t || (t == best_t && tri.face < best_face))) {
          best_t = t;
          best_face = tri.face;
        }
      }
    } else {
      const int left = static_cast<int>(&node - nodes_.data()) + 1;
      const int right = node.first;
      const double tl = slab(nodes_[left].lo, nodes_[left].hi, ray.origin, inv_dir, t_min, best_t);
      const double tr =
          slab(nodes_[right].lo, nodes_[right].hi, ray.origin, inv_dir, t_min, best_t);
      // Push the farther child first.
      if (tl <= tr) {
        if (tr != std::numeric_limits<double>::infinity()) stack[sp++] = right;
        if (tl != std::numeric_limits<double>::infinity()) stack[sp++] = left;
      } else {
        if (tl != std::numeric_limits<double>::infinity()) stack[sp++] = left;
        if (tr != std::numeric_limits<double>::infinity()) stack[sp++] = right;
      }
    }
  }
  if (best_face < 0) return std::nullopt;
  return Hit{best_face, best_t, ray.origin + best_t * ray.direction};
}

bool Bvh::occluded(const Ray& ray, double t_min, double t_max) const {
  if (nodes_.empty()) return false;
  const Vec3 inv_dir = ray.direction.cwiseInverse();
  std::array<int, 128> stack;
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (slab(node.lo, node.hi, ray.origin, inv_dir, t_min, t_max) ==
        std::numeric_limits<double>::infinity()) {
      continue;
    }
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const Tri& tri = tris_[i];
        if (tri.face == ray.face_skip) continue;
        const double t = intersect_triangle(ray.origin, ray.direction, tri.v0, tri.e1, tri.e2);
        if (t > t_min && t < t_max) return true;
      }
    } else {
      stack[sp++] = node.first;
      stack[sp++] = static_cast<int>(&node - nodes_.data()) + 1;
    }
  }
  return false;
}

std::optional<Hit> Bvh::intersect_brute_force(const Ray& ray, double t_min, double t_max) const {
  double best_t = t_max;
  int best_face = -1;
  for (const Tri& tri : tris_) {
    if (tri.face == ray.face_skip) continue;
    const double t = intersect_triangle(ray.origin, ray.direction, tri.v0, tri.e1, tri.e2);
    if (t > t_min && (t < best_t || (t == best_t && tri.face < best_face))) {
      best_t = t;
      best_face = tri.face;
    }
  }
  if (best_face < 0) return std::nullopt;
  return Hit{best_face, best_t, ray.origin + best_t * ray.direction};
}

}  // namespace reflex
