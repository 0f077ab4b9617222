#pragma once

#include <span>
#include <utility>
#include <vector>

#include "reflex/energy.hpp"

namespace reflex {

// Per-face unit target normals, the shading variable optimized by gradient
// descent and handed to the vertex solve.
struct TargetNormals {
  std::vector<Vec3> normals;

  [[nodiscard]] int size() const { return static_cast<int>(normals.size()); }
  const Vec3& operator[](int k) const { return normals[k]; }
  Vec3& operator[](int k) { return normals[k]; }
  // Throws if the count mismatches or any vector is not unit length.
  void validate(int face_count) const;
};

struct GradientBuffer {
  std::vector<Vec3> grad;      // dE/dt_k, tangent to the unit sphere at t_k
  std::vector<int> samples;    // adjoint contributions received per face

  explicit GradientBuffer(int faces = 0) : grad(faces, Vec3::Zero()), samples(faces, 0) {}
  [[nodiscard]] int size() const { return static_cast<int>(grad.size()); }
  [[nodiscard]] bool finite() const;
  void add(int face, const Vec3& g) {
    grad[face] += g;
    ++samples[face];
  }
};

// Accumulates weight * dL/dt_j for every face touched by the recorded path
// (the shading face, and the hit face of each indirect bounce). Only the
// continuous part of the derivative is produced; visibility changes are
// ignored. Sampling pdfs are held fixed, which keeps the estimate unbiased.
void accumulate_adjoint(const PhongScene& scene, std::span<const Vec3> shading,
                        const RadianceRecord& record, double weight, GradientBuffer& out);

// Traces L(p, w_o; w_l) with `rng` and accumulates adjoint_weight * dL/dT.
// Returns the radiance.
double radiance_adjoint(const PhongScene& scene, const TargetNormals& targets, const Vec3& p,
                        int face, const Vec3& wo, const Vec3& wl, double adjoint_weight,
                        const TraceSettings& settings, Rng& rng, GradientBuffer& out);

struct EnergyGradient {
  EnergyEstimate energy;
  GradientBuffer gradient;
};

// Energy and its derivative with respect to the target normals, estimated
// from the same samples as total_energy with identical settings.
EnergyGradient energy_gradient(const PhongScene& scene, const ReflectivitySpec& spec,
                               const TargetNormals& targets, const SampleSettings& settings);

// t_k <- normalize(t_k - eta (G_k + beta A_k (t_k - n_k))), n_k being the
// reference (original) face normal.
TargetNormals regularized_step(const TargetNormals& targets, const GradientBuffer& gradient,
                               std::span<const Vec3> reference_normals, double eta, double beta,
                               std::span<const double> face_areas);

}  // namespace reflex
