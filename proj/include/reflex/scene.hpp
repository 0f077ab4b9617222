#pragma once

#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "reflex/bvh.hpp"
#include "reflex/mesh.hpp"
#include "reflex/phong.hpp"
#include "reflex/rng.hpp"

namespace reflex {

// Light directions with elevation in [-theta0, theta0] about the plane
// orthogonal to `axis`, any azimuth.
struct DirectionalBand {
  double theta0 = 20.0 * std::numbers::pi / 180.0;
  Vec3 axis = Vec3::UnitZ();

  void validate() const;
  // Solid angle of the band: 4 pi sin(theta0).
  [[nodiscard]] double solid_angle() const;
};

// Uniform by solid angle over the band.
Vec3 sample_band(const DirectionalBand& band, Rng& rng);

// Immutable scene: geometry + acceleration structure + material + light band.
class PhongScene {
 public:
  PhongScene(Mesh mesh, PhongParams brdf, DirectionalBand band, double emitter_radiance);

  [[nodiscard]] const Mesh& mesh() const { return mesh_; }
  [[nodiscard]] const PhongParams& brdf() const { return brdf_; }
  [[nodiscard]] const DirectionalBand& band() const { return band_; }
  [[nodiscard]] double emitter_radiance() const { return emitter_radiance_; }
  [[nodiscard]] const Bvh& bvh() const { return bvh_; }
  [[nodiscard]] const std::vector<Vec3>& normals() const { return normals_; }
  [[nodiscard]] const std::vector<double>& areas() const { return areas_; }
  [[nodiscard]] int face_count() const { return mesh_.face_count(); }

  [[nodiscard]] std::optional<Hit> intersect(const Ray& ray) const { return bvh_.intersect(ray); }
  [[nodiscard]] Vec3 sample_point(int face, Rng& rng) const;

 private:
  Mesh mesh_;
  PhongParams brdf_;
  DirectionalBand band_;
  double emitter_radiance_;
  Bvh bvh_;
  std::vector<Vec3> normals_;
  std::vector<double> areas_;
};

PhongScene build_scene(const Mesh& mesh, const PhongParams& brdf, const DirectionalBand& band,
                       double emitter_radiance = 1.0);

inline std::optional<Hit> intersect(const PhongScene& scene, const Ray& ray) {
  return scene.intersect(ray);
}

// 1 if the ray leaving p toward w escapes the mesh.
bool visibility(const PhongScene& scene, const Vec3& p, const Vec3& w, int face_skip);

// One sampled indirect bounce, kept so the adjoint pass can replay it.
struct BounceRecord {
  Vec3 wi;
  double inv_pdf = 0.0;
  int hit_face = -1;
  double f_k = 0.0;      // BRDF at the primary vertex toward wi
  double cos_k = 0.0;    // <t_k, wi>
  double f_j = 0.0;      // BRDF at the hit point toward the light
  double cos_j = 0.0;    // <t_j, w_l>
};

struct RadianceRecord {
  int face = -1;
  Vec3 wo, wl;
  bool direct_lit = false;  // light reaches the point and lies above the geometry
  double f_direct = 0.0;
  double cos_direct = 0.0;
  int n_path = 0;
  std::vector<BounceRecord> bounces;  // only bounces with a lit hit
  double value = 0.0;
};

struct TraceSettings {
  int n_path = 8;
  // 1 = direct + first indirect bounce. 0 disables the indirect estimate.
  int max_bounces = 1;
};

// Radiance leaving point p of `face` toward w_o under a directional light of
// direction w_l (pointing toward the light). Shading uses `shading_normals`
// (one per face); geometry and visibility use the true mesh. Estimates the
// direct term exactly and the first indirect bounce with n_path BRDF samples.
double radiance(const PhongScene& scene, std::span<const Vec3> shading_normals, const Vec3& p,
                int face, const Vec3& wo, const Vec3& wl, const TraceSettings& settings, Rng& rng,
                RadianceRecord* record = nullptr);

inline double radiance(const PhongScene& scene, const Vec3& p, int face, const Vec3& wo,
                       const Vec3& wl, Rng& rng, const TraceSettings& settings = {}) {
  return radiance(scene, scene.normals(), p, face, wo, wl, settings, rng);
}

}  // namespace reflex
