#include "reflex/fixtures.hpp"

#include "reflex/phong.hpp"
#include "reflex/rng.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace reflex::fixtures {

namespace {

// Quad grid over (u, v) in [0, 1]^2 mapped through `at`. CCW when `at` maps
// +u to +x and +v to +y with the surface facing +z.
enum class Diagonal { Alternate, Rising, Falling };

template <class F>
Mesh grid(int nu, int nv, F at, Diagonal diag = Diagonal::Alternate) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  for (int j = 0; j <= nv; ++j) {
    for (int i = 0; i <= nu; ++i) verts.push_back(at(double(i) / nu, double(j) / nv));
  }
  auto id = [nu](int i, int j) { return j * (nu + 1) + i; };
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if (diag == Diagonal::Falling || (diag == Diagonal::Alternate && (i + j) % 2 == 1)) {
        faces.push_back({a, b, d});
        faces.push_back({b, c, d});
      } else {
        faces.push_back({a, b, c});
        faces.push_back({a, c, d});
      }
    }
  }
  return make_mesh(std::move(verts), std::move(faces));
}

}  // namespace

Mesh tetrahedron() {
  std::vector<Vec3> v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  std::vector<Face> f = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return make_mesh(std::move(v), std::move(f));
}

Mesh octahedron() {
  std::vector<Vec3> v = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Face> f = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                         {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return make_mesh(std::move(v), std::move(f));
}

Mesh icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  return make_mesh(std::move(v), std::move(f));
}

Mesh icosphere(int level, double radius) {
  Mesh base = icosahedron();
  std::vector<Vec3> v = base.vertices;
  std::vector<Face> faces = base.faces;
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      int ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return make_mesh(std::move(v), std::move(faces));
}

Mesh cube(int res) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::map<std::array<long, 3>, int> index;
  auto vid = [&](const Vec3& p) {
    std::array<long, 3> key = {std::lround(p.x() * 2 * res), std::lround(p.y() * 2 * res),
                               std::lround(p.z() * 2 * res)};
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    verts.push_back(p);
    int id = static_cast<int>(verts.size()) - 1;
    index.emplace(key, id);
    return id;
  };
  // Each side: outward normal n, tangent frame (u, v) with u x v = n.
  const std::array<std::array<Vec3, 3>, 6> sides = {{
      {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},
      {Vec3(-1, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0)},
      {Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)},
      {Vec3(0, -1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},
      {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},
      {Vec3(0, 0, -1), Vec3(0, 1, 0), Vec3(1, 0, 0)},
  }};
  for (const auto& [n, u, v] : sides) {
    for (int j = 0; j < res; ++j) {
      for (int i = 0; i < res; ++i) {
        auto at = [&](int ii, int jj) {
          return vid(0.5 * n + (double(ii) / res - 0.5) * u + (double(jj) / res - 0.5) * v);
        };
        int a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
        faces.push_back({a, b, c});
        faces.push_back({a, c, d});
      }
    }
  }
  return make_mesh(std::move(verts), std::move(faces));
}

Mesh plate(int res, double size) {
  return grid(res, res, [size](double u, double v) {
    return Vec3((u - 0.5) * size, (v - 0.5) * size, 0.0);
  });
}

Mesh wall(int nx, int ny, double width, double height) {
  return grid(nx, ny, [=](double u, double v) {
    return Vec3((u - 0.5) * width, (v - 0.5) * height, 0.0);
  });
}

Mesh torus(int major_segments, int minor_segments, double major_radius, double minor_radius) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  const double tau = 2.0 * std::numbers::pi;
  for (int i = 0; i < major_segments; ++i) {
    const double u = tau * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      const double w = tau * j / minor_segments;
      const double r = major_radius + minor_radius * std::cos(w);
      verts.emplace_back(r * std::cos(u), r * std::sin(u), minor_radius * std::sin(w));
    }
  }
  auto id = [&](int i, int j) {
    return (i % major_segments) * minor_segments + (j % minor_segments);
  };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < minor_segments; ++j) {
      int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      faces.push_back({a, b, c});
      faces.push_back({a, c, d});
    }
  }
  return make_mesh(std::move(verts), std::move(faces));
}

Mesh bent_ridge(int res, double size, double height) {
  // Ridge along the line x = y; height falls off linearly with distance to it.
  const double half_diag = size / std::sqrt(2.0);
  return grid(res, res, [=](double u, double v) {
    const double x = (u - 0.5) * size, y = (v - 0.5) * size;
    const double d = std::abs(x - y) / std::sqrt(2.0);
    return Vec3(x, y, height * (1.0 - d / half_diag));
  }, Diagonal::Falling);
}

Mesh v_groove(double half_angle_rad, double depth, double length) {
  const double w = depth * std::tan(half_angle_rad);
  // Cross-section in the yz plane: (-w, depth) -> (0, 0) -> (w, depth), open top.
  std::vector<Vec3> v = {{-length / 2, -w, depth}, {-length / 2, 0, 0}, {-length / 2, w, depth},
                         {length / 2, -w, depth},  {length / 2, 0, 0},  {length / 2, w, depth}};
  // Inner faces look into the groove (toward +z).
  std::vector<Face> f = {{0, 4, 1}, {0, 3, 4}, {1, 4, 5}, {1, 5, 2}};
  return make_mesh(std::move(v), std::move(f));
}

std::vector<Vec3> perturb_normals(std::span<const Vec3> normals, double sigma_rad,
                                  uint64_t seed) {
  std::vector<Vec3> out;
  out.reserve(normals.size());
  for (size_t k = 0; k < normals.size(); ++k) {
    Rng rng = Rng::stream(seed, k);
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    const double angle = sigma_rad * std::sqrt(-2.0 * std::log(u1)) *
                         std::cos(2.0 * std::numbers::pi * u2);
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    Vec3 t, b;
    orthonormal_basis(normals[k], t, b);
    const Vec3 axis = std::cos(phi) * t + std::sin(phi) * b;
    out.push_back(Eigen::AngleAxisd(angle, axis) * normals[k]);
  }
  return out;
}

}  // namespace reflex::fixtures
