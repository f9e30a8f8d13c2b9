#pragma once

// Tape-based reverse-mode automatic differentiation over dense row-major
// matrices. Every op records a node holding its value and a closure that
// pushes the node's adjoint to its parents; Tape::backward walks the tape
// once in reverse insertion order, which is a topological order.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace docgraph::ad {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::initializer_list<double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Plain (untaped) kernels, shared by the ops below.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix transpose(const Matrix& a);
void add_inplace(Matrix& dst, const Matrix& src);
bool all_finite(const Matrix& m);

// A trainable parameter: value plus a gradient accumulator of the same shape.
struct Tensor {
  Matrix value;
  // Accumulator written by Tape::backward, hence mutable: taping a const
  // model still lets gradients flow into it.
  mutable Matrix grad;
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Matrix v, bool trainable = true)
      : value(std::move(v)), grad(value.rows, value.cols), requires_grad(trainable) {}

  std::size_t rows() const { return value.rows; }
  std::size_t cols() const { return value.cols; }
  void zero_grad() const { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  double scalar() const;
};

class Tape {
 public:
  // Where parameter adjoints go after backward():
  //  Accumulate  add into Tensor::grad (grads build up until zeroed)
  //  Detached    keep them on the tape only; read back with param_grad()
  //  NoGrad      parameters are recorded as constants, nothing is differentiated
  enum class Mode { Accumulate, Detached, NoGrad };

  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(Mode mode = Mode::Accumulate) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // One leaf per tensor; repeated calls return the same node.
  Var param(const Tensor& t);

  // Records an op result. `backward` is dropped when no parent needs a grad.
  Var record(const char* op, Matrix value, std::span<const Var> parents, BackwardFn backward);
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                  std::move(backward));
  }

  void backward(Var loss);

  Mode mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Adjoint storage for backward closures; allocated on first touch.
  Matrix& adjoint(std::size_t id);
  const Matrix& grad(Var v) const;
  // Adjoint of the leaf bound to `t` from the last backward(); nullptr if unused.
  const Matrix* param_grad(const Tensor& t) const;

 private:
  struct Node {
    Matrix value;
    Matrix adj;
    BackwardFn backward;
    const Tensor* param = nullptr;
    bool needs_grad = false;
  };
  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> leaves_;
};

// Forward ops. Each validates shapes (ShapeError) and rejects non-finite
// results (NumericError).
Var matmul(Var a, Var b);
Var transpose(Var a);
// b has a's shape, or is a 1 x cols row broadcast over a's rows.
Var add(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var relu(Var a);  // subgradient 0 at 0
Var leaky_relu(Var a, double slope);
Var elu(Var a, double alpha = 1.0);
Var softmax_rows(Var a);
// Softmax over the entries of each row where mask(r, c) != 0; others are 0.
// Every row must allow at least one entry.
Var masked_softmax_rows(Var a, const Matrix& mask);
Var mean_rows(Var a);  // column means, 1 x cols
Var sum(Var a);        // 1 x 1
// (n x 1) + (1 x m) -> n x m with out(i, j) = col(i) + row(j).
Var add_outer(Var col, Var row);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
// Inverted dropout: kept entries scaled by 1/keep_prob. Identity when !training.
Var dropout(Var a, double keep_prob, std::uint64_t seed, bool training);
// Softmax cross-entropy of a 1 x K logit row against `label`.
Var cross_entropy(Var logits, std::size_t label);

}  // namespace docgraph::ad
