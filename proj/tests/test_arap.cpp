#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "reflex/arap.hpp"
#include "reflex/fixtures.hpp"

using namespace reflex;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double deg(double d) { return d * kPi / 180.0; }

Mat3 random_rotation(std::mt19937& gen) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(gen), n(gen), n(gen), n(gen));
  return q.normalized().toRotationMatrix();
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

TargetNormals normals_of(const Mesh& m) { return {face_normals(m)}; }

// Each face normal rotated by `angle` about a random tangent axis.
TargetNormals perturbed(const Mesh& m, double angle, uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
  TargetNormals t = normals_of(m);
  for (Vec3& n : t.normals) {
    Vec3 a, b;
    orthonormal_basis(n, a, b);
    const double phi = u(gen);
    n = axis_angle(std::cos(phi) * a + std::sin(phi) * b, angle) * n;
  }
  return t;
}

std::vector<Mesh> all_fixtures() {
  return {normalize_scale(fixtures::icosphere(3)), normalize_scale(fixtures::cube(4)),
          normalize_scale(fixtures::torus(24, 12, 1.0, 0.4)),
          normalize_scale(fixtures::bent_ridge(8)), normalize_scale(fixtures::plate(6))};
}

double max_diff(std::span<const Vec3> a, std::span<const Vec3> b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, (a[i] - b[i]).norm());
  return d;
}

}  // namespace

TEST_CASE("fit_rotation") {
  std::mt19937 gen(7);
  std::normal_distribution<double> n;
  SUBCASE("beats random rotations on the local objective") {
    for (int trial = 0; trial < 20; ++trial) {
      Mat3 s;
      for (int i = 0; i < 9; ++i) s(i / 3, i % 3) = n(gen);
      const Mat3 r = fit_rotation(s);
      CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-8);
      CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
      const double best = (r * s).trace();
      for (int k = 0; k < 1000; ++k) CHECK((random_rotation(gen) * s).trace() <= best + 1e-12);
    }
  }
  SUBCASE("recovers a rotation from rotated point pairs") {
    const Mat3 q = random_rotation(gen);
    Mat3 s = Mat3::Zero();
    for (int i = 0; i < 5; ++i) {
      const Vec3 a(n(gen), n(gen), n(gen));
      s += a * (q * a).transpose();
    }
    CHECK((fit_rotation(s) - q).norm() < 1e-10);
  }
  SUBCASE("reflection-only covariance still yields a proper rotation") {
    Mat3 s = Mat3::Identity();
    s(2, 2) = -1.0;
    const Mat3 r = fit_rotation(s);
    CHECK(r.determinant() == doctest::Approx(1.0));
  }
  CHECK(fit_rotation(Mat3::Zero()) == Mat3::Identity());
}

TEST_CASE("system construction") {
  Mesh sphere = normalize_scale(fixtures::icosphere(3));
  SUBCASE("unconstrained systems anchor one vertex and factorize") {
    ArapSystem face(sphere, ElementKind::FaceOnly, 1000.0);
    CHECK(face.element_count() == sphere.face_count());
    CHECK(face.fixed_vertices() == std::vector<int>{0});
    ArapSystem rim(sphere, ElementKind::RimSpoke, 1000.0);
    CHECK(rim.element_count() == sphere.vertex_count());
    CHECK(rim.matches(sphere));
    CHECK_FALSE(rim.matches(fixtures::icosphere(2)));
    CHECK(face.clamped_weights() == 0);
  }
  SUBCASE("each connected component gets an anchor") {
    Mesh two = fixtures::tetrahedron();
    const int n = two.vertex_count();
    for (int i = 0; i < n; ++i) two.vertices.push_back(two.vertices[i] + Vec3(5, 0, 0));
    for (int f = 0, nf = two.face_count(); f < nf; ++f) {
      two.faces.push_back({two.faces[f][0] + n, two.faces[f][1] + n, two.faces[f][2] + n});
    }
    two.reference_vertices = two.vertices;
    ArapSystem sys(two, ElementKind::FaceOnly, 1.0);
    CHECK(sys.fixed_vertices() == std::vector<int>{0, n});
  }
  SUBCASE("sliver triangles have their weights clamped") {
    Mesh sliver = make_mesh({{0, 0, 0}, {1, 0, 0}, {0.5, 1e-8, 0}, {0.5, -1, 0}},
                            {{0, 1, 2}, {1, 0, 3}});
    ArapSystem sys(sliver, ElementKind::FaceOnly, 1.0);
    CHECK(sys.clamped_weights() >= 2);
    auto l = cotangent_laplacian(sliver.vertices, sliver.faces);
    for (int k = 0; k < l.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(l, k); it; ++it) {
        CHECK(std::abs(it.value()) <= 2 * 2 * kMaxCotWeight);
        CHECK(std::isfinite(it.value()));
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ArapSystem(Mesh{}, ElementKind::FaceOnly, 1.0), MeshError);
    CHECK_THROWS_AS(ArapSystem(sphere, ElementKind::FaceOnly, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(ArapSystem(sphere, ElementKind::FaceOnly, 1.0, {{99999, Vec3::Zero()}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(ArapSystem(sphere, ElementKind::FaceOnly, 1.0,
                               {{3, Vec3::Zero()}, {3, Vec3::Zero()}}),
                    std::invalid_argument);
    ArapSystem sys(sphere, ElementKind::FaceOnly, 1.0);
    CHECK_THROWS_AS((void)sys.solve(normals_of(sphere), sphere.vertices, 0),
                    std::invalid_argument);
    TargetNormals short_t = normals_of(sphere);
    short_t.normals.pop_back();
    CHECK_THROWS_AS((void)sys.local_step(sphere.vertices, short_t), std::invalid_argument);
  }
}

TEST_CASE("cotangent Laplacian") {
  Mesh plate = fixtures::plate(5, 2.0);
  auto l = cotangent_laplacian(plate.vertices, plate.faces);
  CHECK((Eigen::MatrixXd(l) - Eigen::MatrixXd(l).transpose()).norm() < 1e-12);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(plate.vertex_count());
  CHECK((l * ones).norm() < 1e-10);
  // Linear functions are harmonic at interior vertices of a planar mesh; the
  // right angles of the grid carry the 1e-6 weight floor instead of 0.
  Eigen::VectorXd x(plate.vertex_count());
  for (int i = 0; i < plate.vertex_count(); ++i) {
    x[i] = 2.0 * plate.vertices[i].x() - 0.5 * plate.vertices[i].y();
  }
  const Eigen::VectorXd lx = l * x;
  int interior = 0;
  for (int i = 0; i < plate.vertex_count(); ++i) {
    const auto& v = plate.vertices[i];
    if (std::abs(std::abs(v.x()) - 1.0) > 1e-9 && std::abs(std::abs(v.y()) - 1.0) > 1e-9) {
      CHECK(std::abs(lx[i]) < 1e-5);
      ++interior;
    }
  }
  CHECK(interior == 16);
}

TEST_CASE("local step identity and rigid cases") {
  Mesh sphere = normalize_scale(fixtures::icosphere(2));
  for (ElementKind kind : {ElementKind::FaceOnly, ElementKind::RimSpoke}) {
    ArapSystem sys(sphere, kind, 1000.0);
    const RotationField id = sys.local_step(sphere.vertices, normals_of(sphere));
    for (const Mat3& r : id.rotations) CHECK((r - Mat3::Identity()).norm() < 1e-10);

    std::mt19937 gen(3);
    const Mat3 q = random_rotation(gen);
    std::vector<Vec3> rotated_v;
    for (const Vec3& v : sphere.vertices) rotated_v.push_back(q * v);
    TargetNormals rotated_t = normals_of(sphere);
    for (Vec3& n : rotated_t.normals) n = q * n;
    const RotationField rig = sys.local_step(rotated_v, rotated_t);
    for (const Mat3& r : rig.rotations) CHECK((r - q).norm() < 1e-10);
  }
}

TEST_CASE("global step") {
  Mesh sphere = normalize_scale(fixtures::icosphere(2));
  SUBCASE("identity rotations reproduce the reference mesh") {
    ArapSystem sys(sphere, ElementKind::RimSpoke, 1000.0);
    RotationField id{std::vector<Mat3>(sys.element_count(), Mat3::Identity())};
    const auto v = sys.global_step(id, sphere.reference_vertices);
    CHECK(max_diff(v, sphere.reference_vertices) < 1e-10);
  }
  SUBCASE("positional constraints are honored exactly") {
    const std::vector<PositionConstraint> feet = {
        {3, sphere.vertices[3] + Vec3(0.1, 0, 0)},
        {17, sphere.vertices[17]},
        {40, sphere.vertices[40] - Vec3(0, 0.2, 0.05)}};
    ArapSystem sys(sphere, ElementKind::FaceOnly, 1000.0, feet);
    CHECK(sys.fixed_vertices() == std::vector<int>{3, 17, 40});
    const auto v = sys.solve(perturbed(sphere, deg(10), 2), sphere.vertices, 10);
    for (const auto& c : feet) CHECK((v[c.vertex] - c.position).norm() <= 1e-12);
  }
}

TEST_CASE("E_style is non-increasing over 30 local-global iterations on every fixture") {
  for (const Mesh& m : all_fixtures()) {
    for (ElementKind kind : {ElementKind::RimSpoke, ElementKind::FaceOnly}) {
      ArapSystem sys(m, kind, 1000.0);
      const TargetNormals t = perturbed(m, deg(15), 5);
      ArapSystem::Trace trace;
      const auto start = m.vertices;
      const RotationField r0 = sys.local_step(start, t);
      double prev = sys.energy(start, r0, t);
      (void)sys.solve(t, start, 30, &trace);
      REQUIRE(trace.energy.size() == 30);
      for (double e : trace.energy) {
        CHECK(e <= prev * (1.0 + 1e-12) + 1e-12);
        prev = e;
      }
    }
  }
}

TEST_CASE("consistent targets reproduce the initial mesh") {
  for (const Mesh& m : all_fixtures()) {
    const double diag = bbox_diagonal(m.vertices);
    for (ElementKind kind : {ElementKind::RimSpoke, ElementKind::FaceOnly}) {
      ArapSystem sys(m, kind, 1000.0);
      const auto v = sys.solve(normals_of(m), m.vertices, 30);
      CHECK(max_diff(v, m.vertices) < 1e-6 * diag);
    }
  }
}

TEST_CASE("cube faces reorient toward targets rotated 10 degrees") {
  Mesh cube = normalize_scale(fixtures::cube(4));
  const Mat3 q = axis_angle(Vec3::UnitX(), deg(10));
  TargetNormals t = normals_of(cube);
  for (Vec3& n : t.normals) n = q * n;
  ArapSystem sys(cube, ElementKind::FaceOnly, 1000.0);
  std::vector<Vec3> v = cube.vertices;
  RotationField r = sys.local_step(v, t);
  double prev_normal = sys.normal_energy(r, t);
  const double initial_normal = prev_normal;
  for (int it = 0; it < 30; ++it) {
    v = sys.global_step(r, v);
    r = sys.local_step(v, t);
    const double e = sys.normal_energy(r, t);
    CHECK(e <= prev_normal * (1.0 + 1e-9));
    prev_normal = e;
  }
  CHECK(prev_normal < initial_normal);
  // Deformed face normals moved toward the targets.
  const auto normals = face_normals(v, cube.faces);
  double before = 0.0, after = 0.0;
  const auto orig = face_normals(cube);
  for (int f = 0; f < cube.face_count(); ++f) {
    before += std::acos(std::clamp(orig[f].dot(t[f]), -1.0, 1.0));
    after += std::acos(std::clamp(normals[f].dot(t[f]), -1.0, 1.0));
  }
  CHECK(after < 0.5 * before);
}

TEST_CASE("moderate target perturbations keep edge lengths within 10 percent") {
  Mesh sphere = normalize_scale(fixtures::icosphere(3));
  EdgeMap edges(sphere);
  for (double angle : {5.0, 10.0, 15.0}) {
    // A smooth field: every target rotated by the same angle about a fixed axis
    // scaled by the height, plus small per-face noise.
    TargetNormals t = perturbed(sphere, deg(angle), 9);
    for (ElementKind kind : {ElementKind::RimSpoke, ElementKind::FaceOnly}) {
      ArapSystem sys(sphere, kind, 1000.0);
      const auto v = sys.solve(t, sphere.vertices, 30);
      double worst = 0.0;
      for (const EdgeRef& e : edges.edges()) {
        const auto [a, b] = e.endpoints;
        const double l0 = (sphere.vertices[a] - sphere.vertices[b]).norm();
        const double l1 = (v[a] - v[b]).norm();
        worst = std::max(worst, std::abs(l1 - l0) / l0);
      }
      CHECK(worst < 0.10);
    }
  }
}

TEST_CASE("rigid invariance") {
  Mesh sphere = normalize_scale(fixtures::icosphere(2));
  const TargetNormals t = perturbed(sphere, deg(12), 1);
  ArapSystem sys(sphere, ElementKind::FaceOnly, 1000.0);
  const auto base = sys.solve(t, sphere.vertices, 15);

  SUBCASE("translation") {
    const Vec3 d(0.3, -1.2, 2.0);
    Mesh moved = sphere;
    for (auto& v : moved.vertices) v += d;
    for (auto& v : moved.reference_vertices) v += d;
    ArapSystem msys(moved, ElementKind::FaceOnly, 1000.0);
    const auto out = msys.solve(t, moved.vertices, 15);
    for (size_t i = 0; i < out.size(); ++i) CHECK((out[i] - d - base[i]).norm() < 1e-9);
  }
  SUBCASE("rotation of the start and the targets") {
    std::mt19937 gen(12);
    const Mat3 q = random_rotation(gen);
    std::vector<Vec3> start;
    for (const Vec3& v : sphere.vertices) start.push_back(q * v);
    TargetNormals qt = t;
    for (Vec3& n : qt.normals) n = q * n;
    const auto out = sys.solve(qt, start, 15);
    for (size_t i = 0; i < out.size(); ++i) CHECK((out[i] - q * base[i]).norm() < 1e-9);
  }
}
