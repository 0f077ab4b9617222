#include "reflex/scene.hpp"

#include <cmath>

#include <fmt/format.h>

namespace reflex {

void DirectionalBand::validate() const {
  if (!(theta0 > 0.0) || theta0 > std::numbers::pi / 2 + 1e-12) {
    throw std::invalid_argument(fmt::format("band half-angle {} rad outside (0, pi/2]", theta0));
  }
  if (std::abs(axis.norm() - 1.0) > 1e-9) throw std::invalid_argument("band axis must be unit");
}

double DirectionalBand::solid_angle() const { return 4.0 * std::numbers::pi * std::sin(theta0); }

Vec3 sample_band(const DirectionalBand& band, Rng& rng) {
  // d(solid angle) = cos(elev) d(elev) d(phi), so sin(elev) is uniform.
  const double s = std::sin(band.theta0);
  const double sin_e = (2.0 * rng.uniform() - 1.0) * s;
  const double cos_e = std::sqrt(std::max(0.0, 1.0 - sin_e * sin_e));
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  Vec3 t, b;
  orthonormal_basis(band.axis, t, b);
  return (cos_e * std::cos(phi) * t + cos_e * std::sin(phi) * b + sin_e * band.axis).normalized();
}

PhongScene::PhongScene(Mesh mesh, PhongParams brdf, DirectionalBand band, double emitter_radiance)
    : mesh_(std::move(mesh)), brdf_(brdf), band_(band), emitter_radiance_(emitter_radiance) {
  if (mesh_.empty()) throw MeshError("cannot build a scene from an empty mesh");
  brdf_.validate();
  band_.validate();
  if (!(emitter_radiance_ >= 0.0)) throw std::invalid_argument("emitter radiance must be >= 0");
  bvh_ = Bvh(mesh_.vertices, mesh_.faces);
  normals_ = face_normals(mesh_);
  areas_ = face_areas(mesh_);
}

Vec3 PhongScene::sample_point(int face, Rng& rng) const {
  const auto& [a, b, c] = mesh_.faces[face];
  double u = rng.uniform(), v = rng.uniform();
  if (u + v > 1.0) {
    u = 1.0 - u;
    v = 1.0 - v;
  }
  const auto& V = mesh_.vertices;
  return V[a] + u * (V[b] - V[a]) + v * (V[c] - V[a]);
}

PhongScene build_scene(const Mesh& mesh, const PhongParams& brdf, const DirectionalBand& band,
                       double emitter_radiance) {
  return PhongScene(mesh, brdf, band, emitter_radiance);
}

bool visibility(const PhongScene& scene, const Vec3& p, const Vec3& w, int face_skip) {
  // The face_skip guard plus the t > epsilon floor keeps the ray off its
  // own surface; offsetting the origin as well would skip thin neighbours.
  return !scene.bvh().occluded(Ray{p, w, face_skip});
}

double radiance(const PhongScene& scene, std::span<const Vec3> shading_normals, const Vec3& p,
                int face, const Vec3& wo, const Vec3& wl, const TraceSettings& settings, Rng& rng,
                RadianceRecord* record) {
  const PhongParams& brdf = scene.brdf();
  const double e0 = scene.emitter_radiance();
  const Vec3& t_k = shading_normals[face];
  const Vec3& g_k = scene.normals()[face];

  double direct = 0.0;
  double f_direct = 0.0, cos_direct = 0.0;
  const bool lit = g_k.dot(wl) > 0.0 && visibility(scene, p, wl, face);
  if (lit) {
    cos_direct = std::max(0.0, t_k.dot(wl));
    f_direct = eval_phong(brdf, t_k, wo, wl);
    direct = f_direct * cos_direct * e0;
  }
  if (record) {
    record->face = face;
    record->wo = wo;
    record->wl = wl;
    record->direct_lit = lit;
    record->f_direct = f_direct;
    record->cos_direct = cos_direct;
    record->n_path = settings.max_bounces > 0 ? settings.n_path : 0;
    record->bounces.clear();
  }

  double indirect = 0.0;
  if (settings.max_bounces > 0 && settings.n_path > 0) {
    for (int s = 0; s < settings.n_path; ++s) {
      const PhongSample smp = sample_phong(brdf, t_k, wo, rng);
      if (!smp.valid || g_k.dot(smp.wi) <= 0.0) continue;
      const auto hit = scene.intersect(Ray{p, smp.wi, face});
      if (!hit) continue;
      const int j = hit->face;
      const Vec3& g_j = scene.normals()[j];
      if (g_j.dot(smp.wi) >= 0.0 || g_j.dot(wl) <= 0.0) continue;
      if (!visibility(scene, hit->point, wl, j)) continue;
      const Vec3& t_j = shading_normals[j];
      const double f_j = eval_phong(brdf, t_j, -smp.wi, wl);
      const double cos_j = std::max(0.0, t_j.dot(wl));
      const double f_k = eval_phong(brdf, t_k, wo, smp.wi);
      const double cos_k = t_k.dot(smp.wi);
      const double inv_pdf = 1.0 / smp.pdf;
      indirect += f_k * cos_k * inv_pdf * f_j * cos_j * e0;
      if (record) record->bounces.push_back({smp.wi, inv_pdf, j, f_k, cos_k, f_j, cos_j});
    }
    indirect /= settings.n_path;
  }
  const double value = direct + indirect;
  if (record) record->value = value;
  return value;
}

}  // namespace reflex
