#include "reflex/phong.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace reflex {

namespace {
constexpr double kPi = std::numbers::pi;
}

void PhongParams::validate() const {
  if (kd < 0.0 || ks < 0.0) throw std::invalid_argument("phong weights must be non-negative");
  if (kd + ks > 1.0 + 1e-12) {
    throw std::invalid_argument(fmt::format("phong kd + ks = {} exceeds 1", kd + ks));
  }
  if (!(exponent > 0.0)) throw std::invalid_argument("phong exponent must be positive");
}

double eval_phong(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, const Vec3& wi) {
  const double cos_o = normal.dot(wo), cos_i = normal.dot(wi);
  if (cos_o <= 0.0 || cos_i <= 0.0) return 0.0;
  double f = brdf.kd / kPi;
  if (brdf.ks > 0.0) {
    // cos(alpha) = <wi, 2 (n.wo) n - wo>, symmetric in (wo, wi).
    const double c = std::clamp(2.0 * cos_o * cos_i - wo.dot(wi), 0.0, 1.0);
    f += brdf.ks * (brdf.exponent + 2.0) / (2.0 * kPi) * std::pow(c, brdf.exponent);
  }
  return f;
}

Vec3 phong_normal_derivative(const PhongParams& brdf, const Vec3& normal, const Vec3& wo,
                             const Vec3& wi) {
  const double cos_o = normal.dot(wo), cos_i = normal.dot(wi);
  if (cos_o <= 0.0 || cos_i <= 0.0 || brdf.ks == 0.0) return Vec3::Zero();
  const double c = 2.0 * cos_o * cos_i - wo.dot(wi);
  if (c <= 0.0 || c >= 1.0) return Vec3::Zero();
  const double scale = brdf.ks * (brdf.exponent + 2.0) / (2.0 * kPi) * brdf.exponent *
                       std::pow(c, brdf.exponent - 1.0);
  const Vec3 dc = 2.0 * (cos_i * wo + cos_o * wi);
  const Vec3 g = scale * dc;
  return g - normal.dot(g) * normal;
}

void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b) {
  // Duff et al. 2017, branchless ONB.
  const double sign = std::copysign(1.0, n.z());
  const double a = -1.0 / (sign + n.z());
  const double bb = n.x() * n.y() * a;
  t = Vec3(1.0 + sign * n.x() * n.x() * a, sign * bb, -sign * n.x());
  b = Vec3(bb, sign + n.y() * n.y() * a, -n.y());
}

double phong_pdf(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, const Vec3& wi) {
  const double total = brdf.kd + brdf.ks;
  if (total <= 0.0) return 0.0;
  const double pd = brdf.kd / total, ps = brdf.ks / total;
  double pdf = 0.0;
  const double cos_i = normal.dot(wi);
  if (pd > 0.0 && cos_i > 0.0) pdf += pd * cos_i / kPi;
  if (ps > 0.0) {
    const double c = wi.dot(reflect(wo, normal));
    if (c > 0.0) pdf += ps * (brdf.exponent + 1.0) / (2.0 * kPi) * std::pow(c, brdf.exponent);
  }
  return pdf;
}

PhongSample sample_phong(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, Rng& rng) {
  const double total = brdf.kd + brdf.ks;
  const double u_lobe = rng.uniform(), u1 = rng.uniform(), u2 = rng.uniform();
  PhongSample s;
  if (total <= 0.0) return s;
  const double phi = 2.0 * kPi * u2;
  Vec3 axis = normal;
  double cos_t;
  if (u_lobe * total < brdf.kd) {
    cos_t = std::sqrt(1.0 - u1);
  } else {
    axis = reflect(wo, normal);
    cos_t = std::pow(1.0 - u1, 1.0 / (brdf.exponent + 1.0));
  }
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  Vec3 t, b;
  orthonormal_basis(axis, t, b);
  s.wi = (sin_t * std::cos(phi) * t + sin_t * std::sin(phi) * b + cos_t * axis).normalized();
  s.pdf = phong_pdf(brdf, normal, wo, s.wi);
  s.valid = normal.dot(s.wi) > 0.0 && s.pdf > 0.0;
  return s;
}

}  // namespace reflex
