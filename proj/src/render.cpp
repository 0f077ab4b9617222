#include "reflex/render.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>
#include <png.h>

#include "reflex/parallel.hpp"

namespace reflex {

Image render_retroreflection(const PhongScene& scene, std::span<const Vec3> shading,
                             const RenderOptions& options, const TraceSettings& trace,
                             uint64_t seed) {
  const Vec3 forward = (options.target - options.eye).normalized();
  const Vec3 right = forward.cross(options.up).normalized();
  if (!right.allFinite()) throw std::invalid_argument("camera up is parallel to the view direction");
  const Vec3 up = right.cross(forward);
  const double half = std::tan(0.5 * options.fov_deg * std::numbers::pi / 180.0);
  const double aspect = static_cast<double>(options.width) / options.height;

  Image img{options.width, options.height,
            std::vector<float>(static_cast<size_t>(options.width) * options.height, 0.0f)};
  parallel_for(options.height, [&](int y) {
    for (int x = 0; x < options.width; ++x) {
      const double u = (2.0 * (x + 0.5) / options.width - 1.0) * half * aspect;
      const double v = (1.0 - 2.0 * (y + 0.5) / options.height) * half;
      const Vec3 dir = (forward + u * right + v * up).normalized();
      const auto hit = scene.intersect(Ray{options.eye, dir});
      if (!hit) continue;
      const Vec3 p = options.eye + hit->t * dir;
      Rng rng = Rng::stream(seed, static_cast<uint64_t>(y), static_cast<uint64_t>(x));
      const double l = radiance(scene, shading, p, hit->face, -dir, -dir, trace, rng);
      img.pixels[static_cast<size_t>(y) * options.width + x] = static_cast<float>(l);
    }
  }, 1);
  return img;
}

void write_png(const Image& image, double exposure, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialization failed");
  }
  std::vector<png_byte> row(image.width);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(fmt::format("libpng failed writing {}", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double l = image.pixels[static_cast<size_t>(y) * image.width + x] / exposure;
      const double g = std::pow(std::clamp(l, 0.0, 1.0), 1.0 / 2.2);
      row[x] = static_cast<png_byte>(std::lround(255.0 * g));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace reflex
