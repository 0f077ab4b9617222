#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "reflex/config.hpp"

namespace reflex {

// Runs the `reflex` command line; args exclude the program name. Returns the
// exit code: 0 success, 1 runtime error, 2 usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Writes config.toml, input.obj, final.obj, history.csv, timing.csv and
// splits.csv into `dir`.
void write_run_artifacts(const std::filesystem::path& dir, const RunConfig& config, const Mesh& input,
                         const RunResult& result);

// Ends a running `serve` cleanly (final artifacts are still written).
void interrupt_active_session();

// Procedural fixture by name (icosphere, bent_ridge, wall, plate, cube, torus,
// octahedron, tetrahedron) at a size chosen by `resolution`; 0 picks the
// bundled default.
Mesh named_fixture(const std::string& name, int resolution = 0);

}  // namespace reflex
