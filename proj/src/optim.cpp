#include "docgraph/optim.hpp"

#include <cmath>

#include "docgraph/error.hpp"

namespace docgraph::ad {

void adam_step(std::span<Tensor* const> params, AdamState& state) {
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = *params[i];
    if (!p.grad.same_shape(p.value) || !state.m[i].same_shape(p.value))
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
  }

  const auto& o = state.options;
  ++state.t;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (!p.requires_grad) continue;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double g = p.grad.data[k];
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value.data[k] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

Adam::Adam(std::vector<Tensor*> params, AdamOptions options) : params_(std::move(params)) {
  state_.options = options;
}

void Adam::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

}  // namespace docgraph::ad
