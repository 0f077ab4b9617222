#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "reflex/fixtures.hpp"
#include "reflex/scene.hpp"

using namespace reflex;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double deg(double d) { return d * kPi / 180.0; }

Vec3 random_unit(Rng& rng) {
  const double z = 2.0 * rng.uniform() - 1.0;
  const double phi = 2.0 * kPi * rng.uniform();
  const double r = std::sqrt(1.0 - z * z);
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 random_in_hemisphere(const Vec3& n, Rng& rng) {
  Vec3 v = random_unit(rng);
  return v.dot(n) < 0.0 ? -v : v;
}

Mat3 rotation_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

double chi_square(const std::vector<int>& counts, double expected) {
  double chi = 0.0;
  for (int c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

// chi^2 critical value for 9 degrees of freedom at p = 0.001.
constexpr double kChi9 = 27.88;

const PhongParams kMirrorish{0.0, 1.0, 30.0};

}  // namespace

TEST_CASE("build_scene validates and builds a bounded BVH") {
  CHECK_THROWS_AS(build_scene(Mesh{}, {}, {}), MeshError);
  PhongScene s = build_scene(fixtures::icosphere(3), {}, {});
  CHECK(s.face_count() == 1280);
  CHECK(s.bvh().depth() <= 64);
  CHECK_THROWS(build_scene(fixtures::plate(1), PhongParams{0.6, 0.6, 30}, {}));
  CHECK_THROWS(build_scene(fixtures::plate(1), {}, DirectionalBand{0.0, Vec3::UnitZ()}));
}

TEST_CASE("intersect on a floor quad") {
  PhongScene s = build_scene(fixtures::plate(1, 2.0), {}, {});
  auto hit = intersect(s, Ray{Vec3(0.3, -0.2, 2.5), -Vec3::UnitZ()});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(2.5));
  CHECK((hit->point - Vec3(0.3, -0.2, 0)).norm() < 1e-12);
  CHECK_FALSE(intersect(s, Ray{Vec3(0, 0, 1), Vec3::UnitX()}));
  CHECK_FALSE(intersect(s, Ray{Vec3(0, 0, 1), Vec3::UnitZ()}));
  // face_skip excludes the only face on the ray's path.
  CHECK_FALSE(intersect(s, Ray{Vec3(0.3, -0.2, 2.5), -Vec3::UnitZ(), hit->face}));
}

TEST_CASE("BVH nearest hit equals brute force") {
  Rng rng(42);
  SUBCASE("2-face mesh, 1000 rays") {
    PhongScene s = build_scene(fixtures::plate(1, 2.0), {}, {});
    int hits = 0;
    for (int i = 0; i < 1000; ++i) {
      Ray r{Vec3(2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 1.0 + rng.uniform()),
            (-Vec3::UnitZ() + 0.5 * random_unit(rng)).normalized()};
      auto a = s.bvh().intersect(r);
      auto b = s.bvh().intersect_brute_force(r);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        ++hits;
        CHECK(a->face == b->face);
        CHECK(std::abs(a->t - b->t) < 1e-9);
      }
    }
    CHECK(hits > 100);
  }
  SUBCASE("icosphere, 10^4 rays") {
    PhongScene s = build_scene(normalize_scale(fixtures::icosphere(3)), {}, {});
    for (int i = 0; i < 10000; ++i) {
      const Vec3 origin = 2.5 * random_unit(rng) * rng.uniform();
      Ray r{origin, random_unit(rng)};
      auto a = s.bvh().intersect(r);
      auto b = s.bvh().intersect_brute_force(r);
      REQUIRE(a.has_value() == b.has_value());
      if (a) {
        CHECK(a->face == b->face);
        CHECK(std::abs(a->t - b->t) < 1e-9);
      }
      CHECK(s.bvh().occluded(r) == b.has_value());
    }
  }
  SUBCASE("torus with occluding geometry, 5000 rays") {
    PhongScene s = build_scene(normalize_scale(fixtures::torus(24, 12, 1.0, 0.4)), {}, {});
    for (int i = 0; i < 5000; ++i) {
      Ray r{2.0 * random_unit(rng) * rng.uniform(), random_unit(rng)};
      auto a = s.bvh().intersect(r);
      auto b = s.bvh().intersect_brute_force(r);
      REQUIRE(a.has_value() == b.has_value());
      if (a) CHECK(a->face == b->face);
    }
  }
}

TEST_CASE("eval_phong closed forms") {
  const Vec3 n = Vec3::UnitZ();
  SUBCASE("mirror configuration peaks at (n + 2) / (2 pi)") {
    const Vec3 wo = Vec3(std::sin(deg(30)), 0, std::cos(deg(30)));
    const Vec3 wi = reflect(wo, n);
    CHECK(eval_phong(kMirrorish, n, wo, wi) == doctest::Approx(32.0 / (2 * kPi)));
    CHECK(32.0 / (2 * kPi) == doctest::Approx(5.09296).epsilon(1e-5));
  }
  SUBCASE("alpha = 10 degrees") {
    const Vec3 wo = n;
    const Vec3 wi = Vec3(std::sin(deg(10)), 0, std::cos(deg(10)));
    const double expected = 32.0 / (2 * kPi) * std::pow(std::cos(deg(10)), 30);
    CHECK(eval_phong(kMirrorish, n, wo, wi) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(3.218).epsilon(1e-3));
  }
  SUBCASE("pure Lambertian is 1/pi for any admissible pair") {
    Rng rng(5);
    PhongParams lambert{1.0, 0.0, 30.0};
    for (int i = 0; i < 100; ++i) {
      CHECK(eval_phong(lambert, n, random_in_hemisphere(n, rng), random_in_hemisphere(n, rng)) ==
            doctest::Approx(1.0 / kPi));
    }
  }
  SUBCASE("out of hemisphere is zero") {
    CHECK(eval_phong(kMirrorish, n, -n, n) == 0.0);
    CHECK(eval_phong(PhongParams{1, 0, 30}, n, n, -n) == 0.0);
  }
}

TEST_CASE("eval_phong is reciprocal") {
  Rng rng(11);
  PhongParams brdf{0.1, 0.9, 30.0};
  for (int i = 0; i < 10000; ++i) {
    const Vec3 n = random_unit(rng);
    const Vec3 a = random_unit(rng), b = random_unit(rng);
    CHECK(std::abs(eval_phong(brdf, n, a, b) - eval_phong(brdf, n, b, a)) <= 1e-12);
  }
}

TEST_CASE("sample_phong") {
  const Vec3 n = Vec3(0.2, -0.3, 0.9).normalized();
  Rng rng(7);
  SUBCASE("ks = 0 gives cosine-weighted hemisphere samples") {
    // For density cos(theta)/pi, cos^2(theta) is uniform on [0, 1].
    PhongParams lambert{1.0, 0.0, 30.0};
    const int samples = 100000, bins = 10;
    std::vector<int> counts(bins, 0);
    const Vec3 wo = random_in_hemisphere(n, rng);
    for (int i = 0; i < samples; ++i) {
      auto s = sample_phong(lambert, n, wo, rng);
      REQUIRE(s.valid);
      const double c = n.dot(s.wi);
      CHECK(s.pdf == doctest::Approx(c / kPi));
      ++counts[std::min(bins - 1, static_cast<int>(c * c * bins))];
    }
    CHECK(chi_square(counts, double(samples) / bins) < kChi9);
  }
  SUBCASE("large exponent concentrates at the mirror direction") {
    const Vec3 wo = Vec3(0.3, 0.1, 0.95).normalized();
    const Vec3 mirror = reflect(wo, Vec3::UnitZ());
    double prev = 1e9;
    for (double exponent : {10.0, 100.0, 1000.0, 10000.0}) {
      PhongParams brdf{0.0, 1.0, exponent};
      double dev = 0.0;
      for (int i = 0; i < 2000; ++i) {
        auto s = sample_phong(brdf, Vec3::UnitZ(), wo, rng);
        dev += std::acos(std::clamp(s.wi.dot(mirror), -1.0, 1.0));
      }
      dev /= 2000;
      CHECK(dev < prev);
      prev = dev;
    }
    CHECK(prev < deg(1.0));
  }
  SUBCASE("white furnace: integral of f cos stays below kd + ks") {
    PhongParams brdf{0.1, 0.9, 30.0};
    for (int trial = 0; trial < 20; ++trial) {
      const Vec3 wo = random_in_hemisphere(n, rng);
      const int samples = 20000;
      double sum = 0.0, sum_sq = 0.0;
      for (int i = 0; i < samples; ++i) {
        auto s = sample_phong(brdf, n, wo, rng);
        const double v = s.valid ? eval_phong(brdf, n, wo, s.wi) * n.dot(s.wi) / s.pdf : 0.0;
        sum += v;
        sum_sq += v * v;
      }
      const double mean = sum / samples;
      const double sigma = std::sqrt(std::max(0.0, sum_sq / samples - mean * mean) / samples);
      CHECK(mean <= brdf.kd + brdf.ks + 3 * sigma);
    }
  }
  SUBCASE("pdf matches phong_pdf for the sampled direction") {
    PhongParams brdf{0.3, 0.6, 20.0};
    const Vec3 wo = random_in_hemisphere(n, rng);
    for (int i = 0; i < 100; ++i) {
      auto s = sample_phong(brdf, n, wo, rng);
      CHECK(s.pdf == doctest::Approx(phong_pdf(brdf, n, wo, s.wi)));
    }
  }
}

TEST_CASE("visibility") {
  SUBCASE("outward directions on a convex mesh are never blocked") {
    PhongScene s = build_scene(normalize_scale(fixtures::icosphere(3)), {}, {});
    Rng rng(9);
    // Top face along the outward normal.
    int top = 0;
    for (int f = 0; f < s.face_count(); ++f) {
      if (s.normals()[f].z() > s.normals()[top].z()) top = f;
    }
    CHECK(visibility(s, s.sample_point(top, rng), s.normals()[top], top));
    for (int i = 0; i < 2000; ++i) {
      const int f = static_cast<int>(rng.uniform() * s.face_count());
      const Vec3 p = s.sample_point(f, rng);
      const Vec3 w = random_in_hemisphere(s.normals()[f], rng);
      CHECK(visibility(s, p, w, f));
    }
  }
  SUBCASE("bottom of a V-groove cannot see across the wall") {
    PhongScene s = build_scene(fixtures::v_groove(deg(30)), {}, {});
    // Point near the bottom of the -y wall, looking toward the +y wall.
    const Vec3 p = Vec3(0, -0.05 * std::tan(deg(30)), 0.05);
    const Vec3 across = Vec3(0, 1, 0.2).normalized();
    CHECK_FALSE(visibility(s, p, across, 0));
    CHECK(visibility(s, p, Vec3::UnitZ(), 0));
  }
}

TEST_CASE("radiance on a flat plate matches the closed-form direct term") {
  const double peak = 32.0 / (2 * kPi);
  Rng rng(1);
  SUBCASE("normal incidence") {
    PhongScene s = build_scene(fixtures::plate(1), kMirrorish, {});
    const Vec3 up = Vec3::UnitZ();
    const double l = radiance(s, Vec3(0.1, 0.1, 0), 0, up, up, rng);
    // No indirect light can return to a flat plate, so the estimate is exact.
    CHECK(l == doctest::Approx(peak).epsilon(1e-12));
    CHECK(l == doctest::Approx(5.09296).epsilon(1e-5));
  }
  SUBCASE("20 degree incidence, retro direction") {
    Mesh plate = fixtures::plate(1);
    const Mat3 r = rotation_x(deg(20));
    for (auto& v : plate.vertices) v = r * v;
    plate.reference_vertices = plate.vertices;
    PhongScene s = build_scene(plate, kMirrorish, {});
    const Vec3 w = Vec3::UnitZ();
    const double l = radiance(s, Vec3::Zero(), 0, w, w, rng);
    const double expected = std::pow(std::cos(deg(40)), 30) * std::cos(deg(20)) * peak;
    CHECK(l == doctest::Approx(expected).epsilon(1e-10));
    CHECK(expected == doctest::Approx(1.61e-3).epsilon(5e-3));
  }
  SUBCASE("light from below and nothing to bounce off gives zero") {
    PhongScene s = build_scene(fixtures::plate(1), PhongParams{0.5, 0.5, 30}, {});
    CHECK(radiance(s, Vec3(0.1, 0.1, 0), 0, Vec3::UnitZ(), -Vec3::UnitZ(), rng) == 0.0);
  }
  SUBCASE("identical seeds replay bit-identically") {
    PhongScene s = build_scene(normalize_scale(fixtures::torus(24, 12, 1.0, 0.4)),
                               PhongParams{0.3, 0.6, 30}, {});
    const Vec3 wl = Vec3(0.3, 0.2, 0.9).normalized();
    for (int f = 0; f < s.face_count(); f += 37) {
      Rng a = Rng::stream(3, 1, f), b = Rng::stream(3, 1, f);
      const Vec3 wo = s.normals()[f];
      const Vec3 p = s.sample_point(f, a);
      (void)s.sample_point(f, b);
      CHECK(radiance(s, p, f, wo, wl, a) == radiance(s, p, f, wo, wl, b));
    }
  }
}

TEST_CASE("indirect light reaches a face through a second plate") {
  // Floor facing +z and a wall at x = 0.6 facing -x, both lit; the floor
  // picks up extra radiance bounced off the wall.
  std::vector<Vec3> v = {{-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0.5, 0.5, 0}, {-0.5, 0.5, 0},
                         {0.6, -0.5, 0.1}, {0.6, 0.5, 0.1}, {0.6, 0.5, 1.1}, {0.6, -0.5, 1.1}};
  std::vector<Face> f = {{0, 1, 2}, {0, 2, 3}, {4, 6, 5}, {4, 7, 6}};
  PhongScene s = build_scene(make_mesh(v, f), PhongParams{0.5, 0.4, 10}, {});
  // Light from the -x side at a low angle lights the wall (normal -x) and the floor.
  const Vec3 wl = Vec3(-1, 0, 0.3).normalized();
  TraceSettings direct_only{8, 0}, with_bounce{64, 1};
  Rng a(1), b(1);
  const Vec3 p(0.3, 0.0, 0.0);
  const double ld = radiance(s, s.normals(), p, 0, Vec3::UnitZ(), wl, direct_only, a);
  const double lb = radiance(s, s.normals(), p, 0, Vec3::UnitZ(), wl, with_bounce, b);
  CHECK(lb > ld);
}

TEST_CASE("sample_band") {
  Rng rng(13);
  SUBCASE("theta0 = 90 degrees is the uniform sphere") {
    DirectionalBand band{deg(90), Vec3::UnitZ()};
    Vec3 mean = Vec3::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += sample_band(band, rng);
    mean /= n;
    // Each component has standard deviation 1/sqrt(3n).
    CHECK(mean.norm() < 5.0 / std::sqrt(3.0 * n));
  }
  SUBCASE("theta0 = 20 degrees bounds the elevation") {
    DirectionalBand band{deg(20), Vec3(1, 1, 0).normalized()};
    for (int i = 0; i < 10000; ++i) {
      const Vec3 w = sample_band(band, rng);
      CHECK(std::abs(w.norm() - 1.0) < 1e-12);
      CHECK(std::asin(std::clamp(w.dot(band.axis), -1.0, 1.0)) <= deg(20) + 1e-12);
    }
  }
  SUBCASE("elevation density is proportional to cos(theta)") {
    // Uniform solid angle <=> sin(elevation) uniform on [-sin t0, sin t0].
    DirectionalBand band{deg(20), Vec3::UnitZ()};
    const int n = 100000, bins = 10;
    std::vector<int> counts(bins, 0);
    const double s0 = std::sin(deg(20));
    for (int i = 0; i < n; ++i) {
      const double u = (sample_band(band, rng).z() + s0) / (2 * s0);
      ++counts[std::clamp(static_cast<int>(u * bins), 0, bins - 1)];
    }
    CHECK(chi_square(counts, double(n) / bins) < kChi9);
  }
}
