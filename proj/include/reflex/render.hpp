#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "reflex/scene.hpp"

namespace reflex {

// Pinhole camera for retroreflection renders; the light sits at the eye.
struct RenderOptions {
  int width = 256;
  int height = 256;
  Vec3 eye{0.0, -4.0, 1.0};
  Vec3 target{0.0, 0.0, 0.0};
  Vec3 up{0.0, 0.0, 1.0};
  double fov_deg = 45.0;
  // Radiance mapped to white.
  double exposure = 1.0;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major radiance, top row first
};

// Radiance returned toward the eye from a light at the eye (direction of
// each pixel's ray reversed), one sample at each pixel center.
Image render_retroreflection(const PhongScene& scene, std::span<const Vec3> shading,
                             const RenderOptions& options, const TraceSettings& trace,
                             uint64_t seed);

// 8-bit grayscale, (L / exposure)^(1/2.2) clamped to [0, 1].
void write_png(const Image& image, double exposure, const std::filesystem::path& path);

}  // namespace reflex
