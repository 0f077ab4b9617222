#include "reflex/parallel.hpp"

#include <cstdlib>
#include <string>

namespace reflex {

WorkerLimit::WorkerLimit(int threads) {
  if (threads > 0) {
    control_ = std::make_unique<tbb::global_control>(
        tbb::global_control::max_allowed_parallelism, static_cast<size_t>(threads));
  }
}

WorkerLimit WorkerLimit::from_env() {
  const char* env = std::getenv("STEALTH_THREADS");
  if (!env) return WorkerLimit(0);
  try {
    return WorkerLimit(std::stoi(env));
  } catch (const std::exception&) {
    return WorkerLimit(0);
  }
}

}  // namespace reflex
