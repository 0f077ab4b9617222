#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflex/optimize.hpp"
#include "reflex/render.hpp"

namespace reflex {

// Bad configuration or usage. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string> kStrategies{"ours", "direct", "laplacian", "bilaplacian"};

struct BaselineOptions {
  int updates = 15;
  std::vector<std::string> strategies = kStrategies;
  // Per-strategy seed overrides; a comparison refuses differing seeds.
  std::map<std::string, uint64_t> seeds;
  // Calibrate each baseline's step to reach our E_refl reduction.
  bool match_reduction = true;
};

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path output = "runs/out";
  bool normalize = true;
  uint64_t seed = 1;
  int checkpoint_every = 10;  // 0 disables checkpoints
  std::vector<int> fixed_vertices;
  Problem problem;  // seed and constraints are filled from the fields above
  HyperParams params;
  RenderOptions render;
  BaselineOptions baselines;

  // Checks ranges and that the input exists. Throws ConfigError.
  void validate() const;
  // Problem with the seed set and fixed vertices pinned at `mesh` positions.
  [[nodiscard]] Problem problem_for(const Mesh& mesh) const;
};

// Relative input paths resolve against `base_dir`. Unknown keys are errors.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
// Every field, defaults included.
std::string to_toml(const RunConfig& config);

// Loads the input mesh, normalized when configured.
Mesh load_input(const RunConfig& config);

}  // namespace reflex
