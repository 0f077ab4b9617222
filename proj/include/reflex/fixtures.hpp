#pragma once

#include <cstdint>

#include "reflex/mesh.hpp"

// Procedural meshes used by tests, the acceptance suite and `reflex fixture`.
namespace reflex::fixtures {

Mesh tetrahedron();
Mesh octahedron();
Mesh icosahedron();
// Loop-style 1:4 subdivision of the icosahedron projected to the sphere.
// level 3 gives 1280 faces.
Mesh icosphere(int level, double radius = 1.0);
// Axis-aligned cube [-0.5, 0.5]^3 with `res` x `res` quads per side.
Mesh cube(int res);
// Flat square in the z = 0 plane facing +z, side `size`, `res` x `res` quads.
Mesh plate(int res, double size = 1.0);
// Rectangular wall in the z = 0 plane facing +z, `nx` x `ny` quads, alternate
// diagonals.
Mesh wall(int nx, int ny, double width, double height);
// Closed torus around the z axis.
Mesh torus(int major_segments, int minor_segments, double major_radius, double minor_radius);
// Open gable roof: two slopes meeting at a ridge that runs diagonally across
// the grid, so the ridge cuts through triangles instead of following edges.
Mesh bent_ridge(int res, double size = 2.0, double height = 0.5);
// Open V-shaped groove along x: two walls of slope `half_angle` from vertical.
Mesh v_groove(double half_angle_rad, double depth = 1.0, double length = 2.0);

// Each normal rotated by an angle ~ N(0, sigma) about a uniformly random
// tangent axis. Deterministic in `seed`.
std::vector<Vec3> perturb_normals(std::span<const Vec3> normals, double sigma_rad, uint64_t seed);

}  // namespace reflex::fixtures
