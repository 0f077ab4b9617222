#pragma once

#include "reflex/mesh.hpp"
#include "reflex/rng.hpp"

namespace reflex {

// Modified (energy-normalized) Phong BRDF:
//   f = kd / pi + ks (n + 2) / (2 pi) cos^n(alpha)
// alpha is the angle between w_i and the mirror reflection of w_o.
struct PhongParams {
  double kd = 0.1;
  double ks = 0.9;
  double exponent = 30.0;

  void validate() const;
};

inline Vec3 reflect(const Vec3& w, const Vec3& n) { return 2.0 * n.dot(w) * n - w; }

// Zero unless both directions lie strictly above the normal's hemisphere.
double eval_phong(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, const Vec3& wi);

// Derivative of eval_phong with respect to the normal, projected onto the
// tangent plane of the unit sphere at `normal`.
Vec3 phong_normal_derivative(const PhongParams& brdf, const Vec3& normal, const Vec3& wo,
                             const Vec3& wi);

struct PhongSample {
  Vec3 wi;
  double pdf = 0.0;
  // False when the drawn direction is below the surface; it then carries no
  // throughput.
  bool valid = false;
};

// Lafortune-Willems sampling: pick the diffuse lobe with probability
// kd / (kd + ks), cosine-weighted; otherwise a cos^n lobe around the mirror
// direction. pdf is the mixture density.
PhongSample sample_phong(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, Rng& rng);
double phong_pdf(const PhongParams& brdf, const Vec3& normal, const Vec3& wo, const Vec3& wi);

// Right-handed orthonormal frame with `n` as the third axis.
void orthonormal_basis(const Vec3& n, Vec3& t, Vec3& b);

}  // namespace reflex
