#pragma once

#include <memory>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

namespace reflex {

// Runs body(i) for i in [0, n). Bodies must only write state owned by i.
template <class Body>
void parallel_for(int n, Body&& body, int grain = 16) {
  tbb::parallel_for(tbb::blocked_range<int>(0, n, grain), [&](const tbb::blocked_range<int>& r) {
    for (int i = r.begin(); i != r.end(); ++i) body(i);
  });
}

// Caps the worker pool for the lifetime of the object. threads <= 0 keeps
// the default.
class WorkerLimit {
 public:
  explicit WorkerLimit(int threads);
  // Reads STEALTH_THREADS.
  static WorkerLimit from_env();

 private:
  std::unique_ptr<tbb::global_control> control_;
};

}  // namespace reflex
