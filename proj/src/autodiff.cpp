#include "docgraph/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "docgraph/error.hpp"
#include "docgraph/rng.hpp"

namespace docgraph::ad {

Matrix::Matrix(std::size_t r, std::size_t c, std::initializer_list<double> values)
    : rows(r), cols(c), data(values) {
  if (data.size() != r * c)
    throw ShapeError("Matrix: " + std::to_string(values.size()) + " values for a " +
                     std::to_string(r) + "x" + std::to_string(c) + " matrix");
}

std::string Matrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* ci = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeError("matmul_nt: " + a.shape_str() + " * (" + b.shape_str() + ")^T");
  Matrix c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* bj = b.data.data() + j * b.cols;
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeError("matmul_tn: (" + a.shape_str() + ")^T * " + b.shape_str());
  Matrix c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* ak = a.data.data() + k * a.cols;
    const double* bk = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

void add_inplace(Matrix& dst, const Matrix& src) {
  if (!dst.same_shape(src)) throw ShapeError("add_inplace: " + dst.shape_str() + " vs " + src.shape_str());
  for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += src.data[k];
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const auto& v = value();
  if (v.rows != 1 || v.cols != 1) throw ShapeError("scalar() on a " + v.shape_str() + " value");
  return v.data[0];
}

Var Tape::constant(Matrix value) {
  if (!all_finite(value)) throw NumericError("constant: non-finite input");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Tensor& t) {
  if (auto it = leaves_.find(&t); it != leaves_.end()) return Var{this, it->second};
  if (!all_finite(t.value)) throw NumericError("param: non-finite parameter value");
  const bool trainable = t.requires_grad && mode_ != Mode::NoGrad;
  nodes_.push_back(Node{t.value, {}, {}, trainable ? &t : nullptr, trainable});
  leaves_.emplace(&t, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Matrix value, std::span<const Var> parents,
                 BackwardFn backward) {
  if (!all_finite(value)) throw NumericError(std::string(op) + ": non-finite result");
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape != this) throw Error(std::string(op) + ": operand recorded on another tape");
    needs = needs || nodes_[p.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
  return Var{this, nodes_.size() - 1};
}

Matrix& Tape::adjoint(std::size_t id) {
  auto& n = nodes_[id];
  if (n.adj.empty() && !n.value.empty()) n.adj = Matrix(n.value.rows, n.value.cols);
  return n.adj;
}

const Matrix& Tape::grad(Var v) const { return nodes_[v.id].adj; }

const Matrix* Tape::param_grad(const Tensor& t) const {
  auto it = leaves_.find(&t);
  if (it == leaves_.end() || nodes_[it->second].adj.empty()) return nullptr;
  return &nodes_[it->second].adj;
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw Error("backward: empty tape");
  if (loss.tape != this) throw Error("backward: loss belongs to another tape");
  const auto& lv = nodes_[loss.id].value;
  if (lv.rows != 1 || lv.cols != 1)
    throw ShapeError("backward: loss must be a scalar, got " + lv.shape_str());
  for (auto& n : nodes_) n.adj = Matrix();
  if (!nodes_[loss.id].needs_grad) return;
  adjoint(loss.id).data[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.needs_grad || n.adj.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  if (mode_ == Mode::Accumulate) {
    for (auto& n : nodes_)
      if (n.param && !n.adj.empty()) add_inplace(n.param->grad, n.adj);
  }
}

// ---------------------------------------------------------------------------

namespace {

// Adds g into parent's adjoint when the parent participates in differentiation.
void push(Tape& t, Var p, const Matrix& g) {
  if (t.needs_grad(p.id)) add_inplace(t.adjoint(p.id), g);
}

template <class F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows, a.cols);
  for (std::size_t k = 0; k < a.data.size(); ++k) out.data[k] = f(a.data[k]);
  return out;
}

// Elementwise op whose derivative depends only on the input value.
template <class F, class DF>
Var unary(const char* op, Var a, F f, DF df) {
  Tape& t = *a.tape;
  return t.record(op, map(a.value(), f), {a}, [a, df](Tape& tp, std::size_t self) {
    const auto& x = tp.value(a.id);
    const auto& g = tp.adjoint(self);
    Matrix dx(x.rows, x.cols);
    for (std::size_t k = 0; k < x.data.size(); ++k) dx.data[k] = g.data[k] * df(x.data[k]);
    push(tp, a, dx);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record("matmul", matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    if (tp.needs_grad(a.id)) push(tp, a, matmul_nt(g, tp.value(b.id)));
    if (tp.needs_grad(b.id)) push(tp, b, matmul_tn(tp.value(a.id), g));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.record("transpose", transpose(a.value()), {a}, [a](Tape& tp, std::size_t self) {
    push(tp, a, transpose(tp.adjoint(self)));
  });
}

Var add(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows == 1 && bv.cols == av.cols))
    throw ShapeError("add: " + av.shape_str() + " + " + bv.shape_str());
  Matrix out = av;
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) += broadcast ? bv(0, j) : bv(i, j);
  return a.tape->record("add", std::move(out), {a, b}, [a, b, broadcast](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    push(tp, a, g);
    if (!tp.needs_grad(b.id)) return;
    if (!broadcast) {
      push(tp, b, g);
      return;
    }
    Matrix gb(1, g.cols);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) gb(0, j) += g(i, j);
    push(tp, b, gb);
  });
}

Var mul(Var a, Var b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mul: " + av.shape_str() + " * " + bv.shape_str());
  Matrix out(av.rows, av.cols);
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = av.data[k] * bv.data[k];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    const auto& x = tp.value(a.id);
    const auto& y = tp.value(b.id);
    Matrix dx(g.rows, g.cols), dy(g.rows, g.cols);
    for (std::size_t k = 0; k < g.data.size(); ++k) {
      dx.data[k] = g.data[k] * y.data[k];
      dy.data[k] = g.data[k] * x.data[k];
    }
    push(tp, a, dx);
    push(tp, b, dy);
  });
}

Var scale(Var a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double) { return c; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var elu(Var a, double alpha) {
  return unary("elu", a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
               [alpha](double x) { return x > 0.0 ? 1.0 : alpha * std::exp(x); });
}

namespace {

Matrix softmax_forward(const Matrix& x, const Matrix* mask) {
  Matrix y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.cols; ++j)
      if (!mask || (*mask)(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (mx == -INFINITY) throw Error("masked_softmax_rows: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      y(i, j) = std::exp(x(i, j) - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols; ++j) y(i, j) /= z;
  }
  return y;
}

void softmax_backward(Tape& tp, std::size_t self, Var a) {
  const auto& y = tp.value(self);
  const auto& g = tp.adjoint(self);
  Matrix dx(y.rows, y.cols);
  for (std::size_t i = 0; i < y.rows; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols; ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
  }
  push(tp, a, dx);
}

}  // namespace

Var softmax_rows(Var a) {
  return a.tape->record("softmax_rows", softmax_forward(a.value(), nullptr), {a},
                        [a](Tape& tp, std::size_t self) { softmax_backward(tp, self, a); });
}

Var masked_softmax_rows(Var a, const Matrix& mask) {
  if (!mask.same_shape(a.value()))
    throw ShapeError("masked_softmax_rows: mask " + mask.shape_str() + " vs " + a.value().shape_str());
  return a.tape->record("masked_softmax_rows", softmax_forward(a.value(), &mask), {a},
                        [a](Tape& tp, std::size_t self) { softmax_backward(tp, self, a); });
}

Var mean_rows(Var a) {
  const auto& x = a.value();
  if (x.rows == 0) throw ShapeError("mean_rows: no rows");
  Matrix out(1, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(0, j) += x(i, j);
  const double inv = 1.0 / static_cast<double>(x.rows);
  for (auto& v : out.data) v *= inv;
  return a.tape->record("mean_rows", std::move(out), {a}, [a, inv](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    const auto& x = tp.value(a.id);
    Matrix dx(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) dx(i, j) = g(0, j) * inv;
    push(tp, a, dx);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape->record("sum", Matrix(1, 1, s), {a}, [a](Tape& tp, std::size_t self) {
    const auto& x = tp.value(a.id);
    push(tp, a, Matrix(x.rows, x.cols, tp.adjoint(self).data[0]));
  });
}

Var add_outer(Var col, Var row) {
  const auto& c = col.value();
  const auto& r = row.value();
  if (c.cols != 1 || r.rows != 1)
    throw ShapeError("add_outer: " + c.shape_str() + " (+) " + r.shape_str());
  Matrix out(c.rows, r.cols);
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < r.cols; ++j) out(i, j) = c(i, 0) + r(0, j);
  return col.tape->record("add_outer", std::move(out), {col, row}, [col, row](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    Matrix dc(g.rows, 1), dr(1, g.cols);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) {
        dc(i, 0) += g(i, j);
        dr(0, j) += g(i, j);
      }
    push(tp, col, dc);
    push(tp, row, dr);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const auto& x = a.value();
  if (begin + count > x.cols || count == 0)
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") of " + x.shape_str());
  Matrix out(x.rows, count);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  return a.tape->record("slice_cols", std::move(out), {a}, [a, begin](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    const auto& x = tp.value(a.id);
    Matrix dx(x.rows, x.cols);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) dx(i, begin + j) = g(i, j);
    push(tp, a, dx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& x = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < x.cols; ++j) out(i, off + j) = x(i, j);
    off += x.cols;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record("concat_cols", std::move(out), parts, [ps](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    std::size_t off = 0;
    for (const auto& p : ps) {
      const auto& x = tp.value(p.id);
      if (tp.needs_grad(p.id)) {
        Matrix dx(x.rows, x.cols);
        for (std::size_t i = 0; i < x.rows; ++i)
          for (std::size_t j = 0; j < x.cols; ++j) dx(i, j) = g(i, off + j);
        push(tp, p, dx);
      }
      off += x.cols;
    }
  });
}

Var dropout(Var a, double keep_prob, std::uint64_t seed, bool training) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw Error("dropout: keep_prob must be in (0, 1]");
  if (!training || keep_prob == 1.0) return a;
  const auto& x = a.value();
  Matrix mask(x.rows, x.cols);
  SplitMix64 rng(seed);
  const double inv = 1.0 / keep_prob;
  for (auto& m : mask.data) m = rng.uniform() < keep_prob ? inv : 0.0;
  Matrix out(x.rows, x.cols);
  for (std::size_t k = 0; k < x.data.size(); ++k) out.data[k] = x.data[k] * mask.data[k];
  return a.tape->record("dropout", std::move(out), {a}, [a, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const auto& g = tp.adjoint(self);
    Matrix dx(g.rows, g.cols);
    for (std::size_t k = 0; k < g.data.size(); ++k) dx.data[k] = g.data[k] * mask.data[k];
    push(tp, a, dx);
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const auto& z = logits.value();
  if (z.rows != 1) throw ShapeError("cross_entropy: logits must be 1 x K, got " + z.shape_str());
  if (label >= z.cols)
    throw Error("cross_entropy: label " + std::to_string(label) + " >= K=" + std::to_string(z.cols));
  const double mx = *std::max_element(z.data.begin(), z.data.end());
  double s = 0.0;
  for (double v : z.data) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  return logits.tape->record("cross_entropy", Matrix(1, 1, lse - z(0, label)), {logits},
                             [logits, label, lse](Tape& tp, std::size_t self) {
                               const auto& z = tp.value(logits.id);
                               const double g = tp.adjoint(self).data[0];
                               Matrix dz(1, z.cols);
                               for (std::size_t j = 0; j < z.cols; ++j)
                                 dz(0, j) = g * (std::exp(z(0, j) - lse) - (j == label ? 1.0 : 0.0));
                               push(tp, logits, dz);
                             });
}

}  // namespace docgraph::ad
