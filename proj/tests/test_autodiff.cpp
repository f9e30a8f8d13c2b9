#include <cmath>
#include <limits>

#include "docgraph/autodiff.hpp"
#include "docgraph/checkpoint.hpp"
#include "docgraph/error.hpp"
#include "docgraph/gradcheck.hpp"
#include "docgraph/optim.hpp"
#include "support.hpp"

using namespace docgraph;
using namespace docgraph::ad;
using testing::random_matrix;

namespace {

constexpr double kGradTol = 1e-3;
constexpr double kKink = 1e-2;

// Resamples until no entry sits within kKink of zero.
Matrix away_from_zero(SplitMix64& rng, std::size_t r, std::size_t c) {
  for (;;) {
    auto m = random_matrix(rng, r, c);
    bool ok = true;
    for (double v : m.data) ok = ok && std::fabs(v) >= kKink;
    if (ok) return m;
  }
}

// sum(op(...) .* R) with a fixed random R, so every output entry matters.
Var weighted_sum(Tape& t, Var y, const Matrix& r) { return sum(mul(y, t.constant(r))); }

double check_unary(const std::function<Var(Var)>& op, Matrix x, std::size_t out_r, std::size_t out_c,
                   std::uint64_t seed) {
  SplitMix64 rng(seed);
  const auto r = random_matrix(rng, out_r, out_c);
  Tensor p(std::move(x));
  std::vector<Tensor*> ps{&p};
  return grad_check([&](Tape& t) { return weighted_sum(t, op(t.param(p)), r); }, ps).max_rel_error;
}

}  // namespace

TEST_CASE("forward op examples") {
  Tape t(Tape::Mode::NoGrad);
  CHECK(relu(t.constant(Matrix(1, 2, {-1, 2}))).value() == Matrix(1, 2, {0, 2}));
  testing::check_close(softmax_rows(t.constant(Matrix(1, 2, {0, 0}))).value(), Matrix(1, 2, {0.5, 0.5}), 1e-15);
  const Matrix a(2, 3, {1, 2, 3, 4, 5, 6}), b(3, 1, {1, 0, -1});
  CHECK(matmul(t.constant(a), t.constant(b)).value() == Matrix(2, 1, {-2, -2}));
  CHECK(transpose(t.constant(a)).value() == Matrix(3, 2, {1, 4, 2, 5, 3, 6}));
  CHECK(add(t.constant(a), t.constant(Matrix(1, 3, {1, 1, 1}))).value() == Matrix(2, 3, {2, 3, 4, 5, 6, 7}));
  CHECK(mean_rows(t.constant(a)).value() == Matrix(1, 3, {2.5, 3.5, 4.5}));
  CHECK(scale(t.constant(a), 2).value() == Matrix(2, 3, {2, 4, 6, 8, 10, 12}));
  CHECK(leaky_relu(t.constant(Matrix(1, 2, {-1, 3})), 0.2).value() == Matrix(1, 2, {-0.2, 3}));
  CHECK(elu(t.constant(Matrix(1, 2, {0, 2}))).value() == Matrix(1, 2, {0, 2}));
  CHECK(elu(t.constant(Matrix(1, 1, {-1}))).scalar() == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(add_outer(t.constant(Matrix(2, 1, {1, 2})), t.constant(Matrix(1, 2, {10, 20}))).value() ==
        Matrix(2, 2, {11, 21, 12, 22}));
  CHECK(slice_cols(t.constant(a), 1, 2).value() == Matrix(2, 2, {2, 3, 5, 6}));
  const Var parts[] = {t.constant(Matrix(1, 1, {7})), t.constant(Matrix(1, 2, {8, 9}))};
  CHECK(concat_cols(parts).value() == Matrix(1, 3, {7, 8, 9}));
  const Matrix mask(1, 3, {1, 0, 1});
  testing::check_close(masked_softmax_rows(t.constant(Matrix(1, 3, {0, 5, 0})), mask).value(),
                       Matrix(1, 3, {0.5, 0, 0.5}), 1e-15);
  CHECK(cross_entropy(t.constant(Matrix(1, 2, {0, 0})), 1).scalar() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("shape and numeric errors") {
  Tape t(Tape::Mode::NoGrad);
  const auto a = t.constant(Matrix(2, 3));
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(add(a, t.constant(Matrix(1, 2))), ShapeError);
  CHECK_THROWS_AS(mul(a, t.constant(Matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(cross_entropy(t.constant(Matrix(1, 2)), 2), Error);
  CHECK_THROWS_AS(masked_softmax_rows(a, Matrix(2, 3)), Error);  // fully masked rows
  CHECK_THROWS_AS(slice_cols(a, 2, 2), ShapeError);
  CHECK_THROWS_AS(t.constant(Matrix(1, 1, {std::numeric_limits<double>::infinity()})), NumericError);
  CHECK_THROWS_AS(scale(t.constant(Matrix(1, 1, {1e300})), 1e300), NumericError);
  CHECK_THROWS_AS((Matrix(2, 2, {1, 2, 3})), ShapeError);
}

TEST_CASE("backward basics") {
  Tensor x(Matrix(2, 2, {1, 2, 3, 4}));
  {
    Tape t;
    t.backward(sum(scale(t.param(x), 3)));
  }
  CHECK(x.grad == Matrix(2, 2, 3.0));
  {
    Tape t;
    t.backward(sum(scale(t.param(x), 3)));
  }
  CHECK(x.grad == Matrix(2, 2, 6.0));  // accumulates until zeroed
  x.zero_grad();
  CHECK(x.grad == Matrix(2, 2, 0.0));

  Tape t;
  CHECK_THROWS_AS(t.backward(scale(t.param(x), 1)), ShapeError);  // non-scalar loss

  Tensor frozen(Matrix(1, 1, {2}), false), y(Matrix(1, 1, {5}));
  Tape t2;
  t2.backward(sum(mul(t2.param(frozen), t2.param(y))));
  CHECK(frozen.grad == Matrix(1, 1, 0.0));
  CHECK(y.grad == Matrix(1, 1, 2.0));
}

TEST_CASE("detached tapes leave Tensor::grad alone") {
  Tensor x(Matrix(1, 2, {1, 2}));
  Tape t(Tape::Mode::Detached);
  t.backward(sum(scale(t.param(x), 2)));
  CHECK(x.grad == Matrix(1, 2, 0.0));
  REQUIRE(t.param_grad(x) != nullptr);
  CHECK(*t.param_grad(x) == Matrix(1, 2, 2.0));
}

TEST_CASE("cross-entropy gradient is softmax minus one-hot") {
  SplitMix64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor z(random_matrix(rng, 1, 4, -3, 3));
    const std::size_t y = rng.below(4);
    Tape t;
    t.backward(cross_entropy(t.param(z), y));
    double mx = *std::max_element(z.value.data.begin(), z.value.data.end()), s = 0;
    for (double v : z.value.data) s += std::exp(v - mx);
    for (std::size_t k = 0; k < 4; ++k) {
      const double p = std::exp(z.value.data[k] - mx) / s;
      CHECK(z.grad.data[k] == doctest::Approx(p - (k == y ? 1.0 : 0.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul adjoint identities") {
  SplitMix64 rng(2);
  Tensor a(random_matrix(rng, 3, 4)), b(random_matrix(rng, 4, 2));
  const auto dc = random_matrix(rng, 3, 2);
  Tape t;
  t.backward(weighted_sum(t, matmul(t.param(a), t.param(b)), dc));
  testing::check_close(a.grad, ad::matmul_nt(dc, b.value), 1e-12);
  testing::check_close(b.grad, ad::matmul_tn(a.value, dc), 1e-12);
  std::vector<Tensor*> ps{&a, &b};
  CHECK(grad_check([&](Tape& tp) { return weighted_sum(tp, matmul(tp.param(a), tp.param(b)), dc); }, ps)
            .max_rel_error <= kGradTol);
}

TEST_CASE("every differentiable op passes the finite-difference check") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(4);
    const auto seed = rng.next();
    auto x = [&] { return away_from_zero(rng, r, c); };
    CHECK(check_unary([](Var v) { return relu(v); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return leaky_relu(v, 0.2); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return elu(v); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return softmax_rows(v); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return scale(v, -1.7); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return transpose(v); }, x(), c, r, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return mean_rows(v); }, x(), 1, c, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return mul(v, v); }, x(), r, c, seed) <= kGradTol);
    CHECK(check_unary([&](Var v) { return slice_cols(v, c - 1, 1); }, x(), r, 1, seed) <= kGradTol);
    CHECK(check_unary([](Var v) { return cross_entropy(mean_rows(v), 0); }, x(), 1, 1, seed) <= kGradTol);
    Matrix mask(r, c, 1.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 1; j < c; ++j) mask(i, j) = double(rng.below(2));
    CHECK(check_unary([&](Var v) { return masked_softmax_rows(v, mask); }, x(), r, c, seed) <= kGradTol);

    Tensor col(x()), row(away_from_zero(rng, 1, c)), bias(away_from_zero(rng, 1, c));
    Tensor col1(away_from_zero(rng, r, 1));
    const auto w = random_matrix(rng, r, c);
    std::vector<Tensor*> ps{&col, &bias};
    CHECK(grad_check([&](Tape& t) { return weighted_sum(t, add(t.param(col), t.param(bias)), w); }, ps)
              .max_rel_error <= kGradTol);
    std::vector<Tensor*> po{&col1, &row};
    CHECK(grad_check([&](Tape& t) { return weighted_sum(t, add_outer(t.param(col1), t.param(row)), w); }, po)
              .max_rel_error <= kGradTol);
    std::vector<Tensor*> pc{&col, &col1};
    const auto w2 = random_matrix(rng, r, c + 1);
    CHECK(grad_check(
              [&](Tape& t) {
                const Var parts[] = {t.param(col), t.param(col1)};
                return weighted_sum(t, concat_cols(parts), w2);
              },
              pc)
              .max_rel_error <= kGradTol);
  }
}

TEST_CASE("grad_check examples") {
  Tensor x(Matrix(1, 1, {3}));
  std::vector<Tensor*> ps{&x};
  const auto r = grad_check([&](Tape& t) { return sum(mul(t.param(x), t.param(x))); }, ps);
  CHECK(r.max_rel_error <= 1e-10);
  CHECK(std::fabs(r.worst_analytic - 6.0) <= 1e-4);
  CHECK(std::fabs(r.worst_numeric - 6.0) <= 1e-4);
  CHECK(x.value(0, 0) == 3.0);  // restored

  Tensor v(Matrix(1, 3, {0.5, -2, 4}));
  std::vector<Tensor*> pv{&v};
  const auto id = grad_check([&](Tape& t) { return slice_cols(t.param(v), 0, 1); }, pv);
  CHECK(id.max_rel_error <= 1e-10);
  CHECK(id.coordinates == 3);
  CHECK(v.grad == Matrix(1, 3, 0.0));

  Tape t(Tape::Mode::Detached);
  t.backward(slice_cols(t.param(v), 0, 1));
  CHECK(*t.param_grad(v) == Matrix(1, 3, {1, 0, 0}));
}

TEST_CASE("dropout") {
  Tape t(Tape::Mode::NoGrad);
  SplitMix64 rng(4);
  const auto x = random_matrix(rng, 100, 100, 0.5, 1.5);
  CHECK(dropout(t.constant(x), 0.8, 1, false).value() == x);
  const auto y = dropout(t.constant(x), 0.8, 1, true).value();
  double sx = 0, sy = 0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x.data[i];
    sy += y.data[i];
    if (y.data[i] == 0.0) ++zeros;
    else CHECK(y.data[i] == doctest::Approx(x.data[i] / 0.8));
  }
  CHECK(std::fabs(sy / sx - 1.0) <= 0.02);
  CHECK(std::fabs(double(zeros) / 1e4 - 0.2) <= 0.02);
  CHECK(dropout(t.constant(x), 0.8, 1, true).value() == y);
  CHECK(dropout(t.constant(x), 0.8, 2, true).value() != y);
  CHECK_THROWS_AS(dropout(t.constant(x), 0.0, 1, true), Error);
}

TEST_CASE("adam") {
  Tensor p(Matrix(1, 3, {1, 2, 3}));
  p.grad = Matrix(1, 3, {0.5, -4, 1e-3});
  AdamState s;
  std::vector<Tensor*> ps{&p};
  adam_step(ps, s);
  CHECK(s.t == 1);
  CHECK(std::fabs((1 - p.value.data[0]) - 0.001) <= 1e-6);
  CHECK(std::fabs((p.value.data[1] - 2) - 0.001) <= 1e-6);
  CHECK(std::fabs((3 - p.value.data[2]) - 0.001) <= 1e-6);
  CHECK(AdamOptions{}.lr == 0.001);

  Tensor q(Matrix(2, 2, {1, 2, 3, 4}));
  const auto before = q.value;
  AdamState s2;
  std::vector<Tensor*> qs{&q};
  for (int i = 0; i < 3; ++i) adam_step(qs, s2);
  CHECK(q.value == before);

  // Two hand-computed steps with a constant gradient g.
  Tensor r(Matrix(1, 1, {0}));
  r.grad = Matrix(1, 1, {2});
  AdamState s3;
  s3.options.lr = 0.1;
  std::vector<Tensor*> rs{&r};
  adam_step(rs, s3);
  adam_step(rs, s3);
  const double m2 = 0.1 * 2 * 0.9 + 0.1 * 2, v2 = 0.001 * 4 * 0.999 + 0.001 * 4;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  const double step1 = 0.1 * 2 / (2 + 1e-8);
  CHECK(r.value(0, 0) == doctest::Approx(-step1 - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));

  Tensor bad(Matrix(1, 2));
  std::vector<Tensor*> bs{&bad};
  CHECK_THROWS_AS(adam_step(bs, s), ShapeError);  // state sized for a 1x3 parameter
}

TEST_CASE("checkpoint container") {
  testing::TempDir dir("ckpt");
  Checkpoint c;
  c.input_dim = 7;
  c.params.push_back({"w", Matrix(2, 3, {1, 2, 3, 4, 5, 6.5})});
  c.params.push_back({"b", Matrix(1, 1, {-0.25})});
  write_checkpoint(c, dir.file("c.dgpt"));
  const auto back = read_checkpoint(dir.file("c.dgpt"));
  CHECK(back.input_dim == 7);
  CHECK(back.at("w") == c.params[0].value);
  CHECK(back.at("b") == c.params[1].value);
  CHECK_THROWS_AS(back.at("missing"), Error);
  const auto bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "DGPT");
  CHECK(bytes.size() == 18 + (2 + 1 + 8 + 24) + (2 + 1 + 8 + 4));
  CHECK(encode_checkpoint(decode_checkpoint(bytes)) == bytes);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  auto nan = c;
  nan.params[1].value.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(encode_checkpoint(nan), FormatError);
}
