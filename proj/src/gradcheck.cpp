#include "docgraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace docgraph::ad {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape(Tape::Mode::NoGrad);
  return loss(tape).scalar();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, std::span<Tensor* const> params, double eps) {
  std::vector<Matrix> analytic;
  {
    Tape tape(Tape::Mode::Detached);
    tape.backward(loss(tape));
    for (const Tensor* p : params) {
      const Matrix* g = tape.param_grad(*p);
      analytic.push_back(g ? *g : Matrix(p->rows(), p->cols()));
    }
  }

  GradCheckResult r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t k = 0; k < p.value.data.size(); ++k) {
      const double saved = p.value.data[k];
      p.value.data[k] = saved + eps;
      const double up = evaluate(loss);
      p.value.data[k] = saved - eps;
      const double down = evaluate(loss);
      p.value.data[k] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi].data[k];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++r.coordinates;
      if (err > r.max_rel_error || r.coordinates == 1) {
        r.max_rel_error = std::max(err, r.max_rel_error);
        r.worst_param = pi;
        r.worst_index = k;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace docgraph::ad
