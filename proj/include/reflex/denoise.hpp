#pragma once

#include <vector>

#include "reflex/gradient.hpp"
#include "reflex/mesh.hpp"

namespace reflex {

// alpha is the fidelity weight: larger alpha keeps the output closer to the
// input. penalty <= 0 picks alpha * mean(A) / mean(l), which balances the
// two blocks of the linear system.
struct TvParams {
  double alpha = 250.0;
  int inner_iters = 20;
  double penalty = 0.0;

  void validate() const;
};

struct TvTrace {
  double input_objective = 0.0;
  std::vector<double> objective;  // per inner iteration, before renormalization
};

// Minimizes (alpha/2) sum_k A_k |t'_k - t_k|^2 + sum_e l_e |t'_e1 - t'_e2| over
// the dual graph of `mesh` (current vertex positions) by alternating a
// sparse solve with edge-wise shrinkage. Returns unit vectors.
TargetNormals tv_filter(const Mesh& mesh, const TargetNormals& targets, const TvParams& params,
                        TvTrace* trace = nullptr);

// The objective above evaluated at `candidate`.
double tv_objective(const Mesh& mesh, const TargetNormals& input, const std::vector<Vec3>& candidate,
                    double alpha);

}  // namespace reflex
