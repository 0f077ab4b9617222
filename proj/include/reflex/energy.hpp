#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "reflex/scene.hpp"

namespace reflex {

enum class ObjectiveKind { Stealth, MaximizeTowardTarget, DeflectFromPoint };

struct TargetPoint {
  Vec3 q;
};
struct TargetSegment {
  Vec3 q1, q2;
};
struct TargetPlane {
  Vec3 point;
  Vec3 normal;  // unit
};
using TargetGeometry = std::variant<std::monostate, TargetPoint, TargetSegment, TargetPlane>;

// Which reflectivity objective to minimize.
//  - Stealth: w_o* = w_l, loss L^2 / 2.
//  - MaximizeTowardTarget: w_o* toward the closest target point. Loss
//    1 / (L + epsilon) when l_star == 0, else (l_star - L)^2 / 2.
//  - DeflectFromPoint: w_o* toward the avoided geometry, loss L^2 / 2.
struct ReflectivitySpec {
  ObjectiveKind kind = ObjectiveKind::Stealth;
  TargetGeometry target;
  double l_star = 0.0;
  double epsilon = 1e-3;

  void validate() const;
  static ReflectivitySpec stealth() { return {}; }
};

const char* to_string(ObjectiveKind kind);

// Unit direction from p toward the objective's target for light direction w_l.
Vec3 target_direction(const ReflectivitySpec& spec, const Vec3& p, const Vec3& wl);

struct PointwiseLoss {
  double loss = 0.0;
  double dloss_dl = 0.0;
};
PointwiseLoss pointwise_loss(const ReflectivitySpec& spec, double radiance);

// Monte Carlo budget and stream identity for one evaluation pass.
struct SampleSettings {
  int n_dir = 16;
  TraceSettings trace{};
  uint64_t seed = 0;
  // Distinguishes passes; face k of pass `iteration` uses stream (seed, iteration, k).
  uint64_t iteration = 0;
  // When set, every face uses this single light direction instead of the band.
  std::optional<Vec3> fixed_light;

  void validate() const;
};

struct EnergyEstimate {
  double total = 0.0;
  double std_error = 0.0;
  // A_k * mean_i loss_i * V_i, summing to `total`.
  std::vector<double> per_face;
};

// Discretized reflectivity energy: sum_k A_k (1/N_dir) sum_i loss(L_i) V_i,
// with a fresh random point on each face and N_dir light directions per face.
EnergyEstimate total_energy(const PhongScene& scene, const ReflectivitySpec& spec,
                            std::span<const Vec3> shading_normals, const SampleSettings& settings);
inline EnergyEstimate total_energy(const PhongScene& scene, const ReflectivitySpec& spec,
                                   const SampleSettings& settings) {
  return total_energy(scene, spec, scene.normals(), settings);
}

// Radiance delivered toward the objective's target direction,
// sum_k A_k (1/N_dir) sum_i L_i V_i. Used to report objective-independent
// reflection amounts.
double delivered_radiance(const PhongScene& scene, const ReflectivitySpec& spec,
                          const SampleSettings& settings);

}  // namespace reflex
