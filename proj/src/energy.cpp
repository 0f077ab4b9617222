#include "reflex/energy.hpp"

#include <cmath>

#include <fmt/format.h>

#include "face_pass.hpp"
#include "reflex/parallel.hpp"

namespace reflex {

const char* to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Stealth: return "stealth";
    case ObjectiveKind::MaximizeTowardTarget: return "maximize_toward_target";
    case ObjectiveKind::DeflectFromPoint: return "deflect_from_point";
  }
  return "?";
}

void ReflectivitySpec::validate() const {
  const bool has_target = !std::holds_alternative<std::monostate>(target);
  switch (kind) {
    case ObjectiveKind::Stealth:
      if (l_star != 0.0) throw std::invalid_argument("stealth objective requires L* = 0");
      break;
    case ObjectiveKind::MaximizeTowardTarget:
      if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
      if (l_star < 0.0) throw std::invalid_argument("L* must be non-negative");
      [[fallthrough]];
    case ObjectiveKind::DeflectFromPoint:
      if (!has_target) {
        throw std::invalid_argument(
            fmt::format("objective '{}' needs a target geometry", to_string(kind)));
      }
      break;
  }
  if (const auto* plane = std::get_if<TargetPlane>(&target)) {
    if (std::abs(plane->normal.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("target plane normal must be unit length");
    }
  }
  if (const auto* seg = std::get_if<TargetSegment>(&target)) {
    if ((seg->q2 - seg->q1).norm() < 1e-12) throw std::invalid_argument("degenerate segment");
  }
}

namespace {

Vec3 closest_point(const TargetGeometry& target, const Vec3& p) {
  if (const auto* pt = std::get_if<TargetPoint>(&target)) return pt->q;
  if (const auto* seg = std::get_if<TargetSegment>(&target)) {
    const Vec3 d = seg->q2 - seg->q1;
    const double s = std::clamp((p - seg->q1).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return seg->q1 + s * d;
  }
  if (const auto* plane = std::get_if<TargetPlane>(&target)) {
    return p - (p - plane->point).dot(plane->normal) * plane->normal;
  }
  throw std::invalid_argument("objective has no target geometry");
}

}  // namespace

Vec3 target_direction(const ReflectivitySpec& spec, const Vec3& p, const Vec3& wl) {
  if (spec.kind == ObjectiveKind::Stealth) return wl;
  const Vec3 d = closest_point(spec.target, p) - p;
  const double len = d.norm();
  if (len < 1e-9) throw std::domain_error("surface point coincides with the target geometry");
  return d / len;
}

PointwiseLoss pointwise_loss(const ReflectivitySpec& spec, double radiance) {
  switch (spec.kind) {
    case ObjectiveKind::Stealth:
    case ObjectiveKind::DeflectFromPoint:
      return {0.5 * radiance * radiance, radiance};
    case ObjectiveKind::MaximizeTowardTarget:
      if (spec.l_star > 0.0) {
        const double d = spec.l_star - radiance;
        return {0.5 * d * d, -d};
      } else {
        const double inv = 1.0 / (radiance + spec.epsilon);
        return {inv, -inv * inv};
      }
  }
  return {};
}

void SampleSettings::validate() const {
  if (n_dir < 1) throw std::invalid_argument("n_dir must be at least 1");
  if (trace.n_path < 0) throw std::invalid_argument("n_path must be non-negative");
  if (trace.max_bounces < 0 || trace.max_bounces > 1) {
    throw std::invalid_argument("only direct lighting plus one indirect bounce is supported");
  }
}

EnergyEstimate total_energy(const PhongScene& scene, const ReflectivitySpec& spec,
                            std::span<const Vec3> shading_normals,
                            const SampleSettings& settings) {
  settings.validate();
  spec.validate();
  const int nf = scene.face_count();
  std::vector<detail::FaceResult> results(nf);
  parallel_for(nf, [&](int f) {
    RadianceRecord record;
    results[f] = detail::run_face(scene, spec, shading_normals, settings, f, record,
                                  [](const RadianceRecord&, double) {});
  });
  EnergyEstimate est;
  est.per_face.resize(nf);
  double var = 0.0;
  for (int f = 0; f < nf; ++f) {
    est.per_face[f] = results[f].energy;
    est.total += results[f].energy;
    var += results[f].variance;
  }
  est.std_error = std::sqrt(var);
  return est;
}

double delivered_radiance(const PhongScene& scene, const ReflectivitySpec& spec,
                          const SampleSettings& settings) {
  settings.validate();
  const int nf = scene.face_count();
  std::vector<double> per_face(nf);
  parallel_for(nf, [&](int f) {
    RadianceRecord record;
    per_face[f] = detail::run_face(scene, spec, scene.normals(), settings, f, record,
                                   [](const RadianceRecord&, double) {})
                      .delivered;
  });
  double total = 0.0;
  for (double v : per_face) total += v;
  return total;
}

}  // namespace reflex
