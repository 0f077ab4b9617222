#pragma once

// Internal: the per-face Monte Carlo loop shared by the energy and gradient
// passes, so both consume random numbers identically.

#include <cmath>

#include "reflex/energy.hpp"

namespace reflex::detail {

struct FaceResult {
  double energy = 0.0;     // A_k * mean loss * V
  double variance = 0.0;   // variance of `energy` as an estimator
  double delivered = 0.0;  // A_k * mean L * V
};

// on_sample(record, weight) is called for every visible direction with the
// radiance record and the adjoint weight A_k / N_dir * dloss/dL.
template <class OnSample>
FaceResult run_face(const PhongScene& scene, const ReflectivitySpec& spec,
                    std::span<const Vec3> shading, const SampleSettings& settings, int face,
                    RadianceRecord& record, OnSample&& on_sample) {
  Rng rng = Rng::stream(settings.seed, settings.iteration, static_cast<uint64_t>(face));
  const Vec3 c = scene.sample_point(face, rng);
  const Vec3& g = scene.normals()[face];
  const double area = scene.areas()[face];
  const double w = area / settings.n_dir;
  double sum = 0.0, sum_sq = 0.0, sum_l = 0.0;
  for (int i = 0; i < settings.n_dir; ++i) {
    const Vec3 wl = settings.fixed_light ? *settings.fixed_light : sample_band(scene.band(), rng);
    const Vec3 wo = target_direction(spec, c, wl);
    if (g.dot(wo) <= 0.0 || !visibility(scene, c, wo, face)) continue;
    const double l = radiance(scene, shading, c, face, wo, wl, settings.trace, rng, &record);
    const PointwiseLoss pl = pointwise_loss(spec, l);
    sum += pl.loss;
    sum_sq += pl.loss * pl.loss;
    sum_l += l;
    on_sample(record, w * pl.dloss_dl);
  }
  FaceResult r;
  const double n = settings.n_dir;
  const double mean = sum / n;
  r.energy = area * mean;
  r.delivered = area * sum_l / n;
  if (settings.n_dir > 1) {
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    r.variance = area * area * var / n;
  }
  return r;
}

}  // namespace reflex::detail
