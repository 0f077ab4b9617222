#include "reflex/gradient.hpp"

#include <cmath>

#include <fmt/format.h>

#include "face_pass.hpp"
#include "reflex/parallel.hpp"

namespace reflex {

void TargetNormals::validate(int face_count) const {
  if (size() != face_count) {
    throw std::invalid_argument(
        fmt::format("{} target normals for {} faces", size(), face_count));
  }
  for (int k = 0; k < size(); ++k) {
    if (std::abs(normals[k].norm() - 1.0) > 1e-9) {
      throw std::invalid_argument(fmt::format("target normal {} is not unit length", k));
    }
  }
}

bool GradientBuffer::finite() const {
  for (const Vec3& g : grad) {
    if (!g.allFinite()) return false;
  }
  return true;
}

namespace {

inline Vec3 tangent(const Vec3& n, const Vec3& v) { return v - n.dot(v) * n; }

// d/dt [f(t; wo, wi) * max(<t, wi>, 0)], tangent at t.
inline Vec3 d_shade(const PhongParams& brdf, const Vec3& t, const Vec3& wo, const Vec3& wi,
                    double f, double cos) {
  Vec3 g = phong_normal_derivative(brdf, t, wo, wi) * cos;
  if (cos > 0.0) g += f * tangent(t, wi);
  return g;
}

// Calls emit(face, dL/dt_face) for every face the recorded path depends on.
template <class Emit>
void adjoint_terms(const PhongScene& scene, std::span<const Vec3> shading,
                   const RadianceRecord& rec, Emit&& emit) {
  const PhongParams& brdf = scene.brdf();
  const double e0 = scene.emitter_radiance();
  const int k = rec.face;
  const Vec3& t_k = shading[k];
  Vec3 g_k = Vec3::Zero();
  if (rec.direct_lit) {
    g_k += e0 * d_shade(brdf, t_k, rec.wo, rec.wl, rec.f_direct, rec.cos_direct);
  }
  const double inv_n = rec.n_path > 0 ? 1.0 / rec.n_path : 0.0;
  for (const BounceRecord& b : rec.bounces) {
    const double scale = b.inv_pdf * inv_n * e0;
    g_k += scale * b.f_j * b.cos_j * d_shade(brdf, t_k, rec.wo, b.wi, b.f_k, b.cos_k);
    const Vec3& t_j = shading[b.hit_face];
    emit(b.hit_face, scale * b.f_k * b.cos_k * d_shade(brdf, t_j, -b.wi, rec.wl, b.f_j, b.cos_j));
  }
  emit(k, g_k);
}

}  // namespace

void accumulate_adjoint(const PhongScene& scene, std::span<const Vec3> shading,
                        const RadianceRecord& record, double weight, GradientBuffer& out) {
  if (weight == 0.0) return;
  adjoint_terms(scene, shading, record, [&](int j, const Vec3& g) { out.add(j, weight * g); });
}

double radiance_adjoint(const PhongScene& scene, const TargetNormals& targets, const Vec3& p,
                        int face, const Vec3& wo, const Vec3& wl, double adjoint_weight,
                        const TraceSettings& settings, Rng& rng, GradientBuffer& out) {
  RadianceRecord record;
  const double l = radiance(scene, targets.normals, p, face, wo, wl, settings, rng, &record);
  accumulate_adjoint(scene, targets.normals, record, adjoint_weight, out);
  return l;
}

EnergyGradient energy_gradient(const PhongScene& scene, const ReflectivitySpec& spec,
                               const TargetNormals& targets, const SampleSettings& settings) {
  settings.validate();
  spec.validate();
  const int nf = scene.face_count();
  targets.validate(nf);

  // Each face task owns its own slot plus a list of contributions to other
  // faces; merging in face order makes the result independent of scheduling.
  struct Local {
    detail::FaceResult result;
    Vec3 own = Vec3::Zero();
    int own_samples = 0;
    std::vector<std::pair<int, Vec3>> foreign;
  };
  std::vector<Local> locals(nf);
  parallel_for(nf, [&](int f) {
    Local& local = locals[f];
    RadianceRecord record;
    local.result = detail::run_face(
        scene, spec, targets.normals, settings, f, record,
        [&](const RadianceRecord& rec, double w) {
          if (w == 0.0) return;
          adjoint_terms(scene, targets.normals, rec, [&](int j, const Vec3& g) {
            if (j == f) {
              local.own += w * g;
            } else {
              local.foreign.emplace_back(j, w * g);
            }
          });
          ++local.own_samples;
        });
  });

  EnergyGradient out{{}, GradientBuffer(nf)};
  out.energy.per_face.resize(nf);
  double var = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Local& local = locals[f];
    out.energy.per_face[f] = local.result.energy;
    out.energy.total += local.result.energy;
    var += local.result.variance;
    out.gradient.grad[f] += local.own;
    out.gradient.samples[f] += local.own_samples;
    for (const auto& [j, g] : local.foreign) out.gradient.add(j, g);
  }
  out.energy.std_error = std::sqrt(var);
  return out;
}

TargetNormals regularized_step(const TargetNormals& targets, const GradientBuffer& gradient,
                               std::span<const Vec3> reference_normals, double eta, double beta,
                               std::span<const double> face_areas) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  const int n = targets.size();
  if (gradient.size() != n || static_cast<int>(reference_normals.size()) != n ||
      static_cast<int>(face_areas.size()) != n) {
    throw std::invalid_argument("regularized_step: size mismatch");
  }
  TargetNormals out = targets;
  for (int k = 0; k < n; ++k) {
    const Vec3& t = targets.normals[k];
    const Vec3 step = gradient.grad[k] + beta * face_areas[k] * (t - reference_normals[k]);
    const Vec3 next = t - eta * step;
    const double len = next.norm();
    if (!(len > 1e-12) || !std::isfinite(len)) {
      throw std::runtime_error(fmt::format("normal step for face {} collapsed to zero", k));
    }
    out.normals[k] = next / len;
  }
  return out;
}

}  // namespace reflex
