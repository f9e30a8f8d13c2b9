#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "docgraph/autodiff.hpp"

namespace docgraph::ad {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One bias-corrected Adam update of every parameter from its `grad`.
// Moment buffers are created on the first call; the step counter is
// incremented before bias correction.
void adam_step(std::span<Tensor* const> params, AdamState& state);

// Convenience wrapper owning the parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamOptions options = {});

  void step() { adam_step(params_, state_); }
  void zero_grad();
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor*> params_;
  AdamState state_;
};

}  // namespace docgraph::ad
