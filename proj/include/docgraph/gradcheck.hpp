#pragma once

#include <functional>
#include <span>

#include "docgraph/autodiff.hpp"

namespace docgraph::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Builds the scalar loss on the given tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

// Compares reverse-mode gradients with central differences
// (f(x+eps) - f(x-eps)) / (2 eps) on every coordinate of `params`.
// Per-coordinate error is |a - n| / max(1e-8, |a| + |n|). Parameter values
// are restored on return; Tensor::grad is not touched.
GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params,
                           double eps = 1e-3);

}  // namespace docgraph::ad
