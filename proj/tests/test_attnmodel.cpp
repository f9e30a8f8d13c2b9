#include <algorithm>
#include <cmath>

#include "docgraph/attnmodel.hpp"
#include "docgraph/error.hpp"
#include "docgraph/evalstats.hpp"
#include "docgraph/gradcheck.hpp"
#include "docgraph/synthetic.hpp"
#include "docgraph/training.hpp"
#include "support.hpp"

using namespace docgraph;
using namespace docgraph::attn;
using ad::Matrix;
using testing::random_matrix;

namespace {

attn::AttnConfig tiny_config(std::size_t heads = 2, std::size_t d = 8, std::size_t k = 3) {
  AttnConfig c;
  c.heads = heads;
  c.d_model = d;
  c.num_classes = k;
  c.seed = 42;
  return c;
}

void randomize(AttnModel& m, SplitMix64& rng) {
  for (auto* p : m.parameters()) p->value = random_matrix(rng, p->rows(), p->cols());
}

// Loop-only forward pass, written independently of the tape ops.
std::vector<double> straight_line_logits(const AttnModel& m, const Matrix& x) {
  const auto& c = m.config();
  const std::size_t n = x.rows, d = c.d_model, dh = c.d_head();
  auto mm = [](const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
      for (std::size_t j = 0; j < b.cols; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
        out(i, j) = s;
      }
    return out;
  };
  Matrix h = x;
  for (const auto& l : m.layers) {
    const auto q = mm(h, l.wq.value), k = mm(h, l.wk.value), v = mm(h, l.wv.value);
    Matrix cat(n, d);
    for (std::size_t hd = 0; hd < c.heads; ++hd)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += q(i, hd * dh + e) * k(j, hd * dh + e);
          const double a = std::max(0.0, s / std::sqrt(double(dh))) / double(n);
          for (std::size_t e = 0; e < dh; ++e) cat(i, hd * dh + e) += a * v(j, hd * dh + e);
        }
    h = mm(mm(cat, l.wo.value), l.wff.value);
    for (auto& e : h.data) e = std::max(0.0, e);
  }
  std::vector<double> logits(c.num_classes);
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    double s = m.classifier_b.value(0, k);
    for (std::size_t e = 0; e < d; ++e) {
      double mean = 0;
      for (std::size_t i = 0; i < n; ++i) mean += h(i, e);
      s += mean / double(n) * m.classifier_w.value(e, k);
    }
    logits[k] = s;
  }
  return logits;
}

embed::EmbeddedDocument as_doc(const Matrix& x, std::uint32_t label = 0) {
  embed::EmbeddedDocument d{"x", label, x.rows, x.cols, {}};
  for (double v : x.data) d.values.push_back(static_cast<float>(v));
  return d;
}

}  // namespace

TEST_CASE("relu_attention examples") {
  CHECK(relu_attention(Matrix(3, 2), Matrix(3, 2), 3) == Matrix(3, 3));
  const auto one = relu_attention(Matrix(1, 4, {1, 2, 0, 1}), Matrix(1, 4, {1, 0, 5, 3}), 1);
  CHECK(one(0, 0) == doctest::Approx(4.0 / 2.0));
  const auto a = relu_attention(Matrix(2, 2, {1, 0, 0, 1}), Matrix(2, 2, {2, 0, 0, -2}), 2);
  CHECK(std::fabs(a(0, 0) - 0.7071) <= 1e-4);
  CHECK(a(0, 1) == 0.0);
  CHECK(a(1, 0) == 0.0);
  CHECK(a(1, 1) == 0.0);
  CHECK_THROWS_AS(relu_attention(Matrix(0, 2), Matrix(0, 2), 0), Error);
}

TEST_CASE("relu_attention is non-negative and scales as 1/n") {
  SplitMix64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(6), dh = 1 + rng.below(5);
    const auto q = random_matrix(rng, n, dh), k = random_matrix(rng, n, dh);
    const auto a = relu_attention(q, k, n);
    for (double v : a.data) CHECK(v >= 0.0);
    Matrix q2(2 * n, dh), k2(2 * n, dh);
    for (std::size_t i = 0; i < 2 * n; ++i)
      for (std::size_t e = 0; e < dh; ++e) {
        q2(i, e) = q(i % n, e);
        k2(i, e) = k(i % n, e);
      }
    const auto a2 = relu_attention(q2, k2, 2 * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) CHECK(a2(i, j) == a(i, j) / 2.0);
  }
}

TEST_CASE("forward matches a straight-line implementation") {
  SplitMix64 rng(2);
  for (std::size_t layers : {1, 2}) {
    auto cfg = tiny_config();
    cfg.layers = layers;
    AttnModel m(cfg);
    randomize(m, rng);
    const auto x = random_matrix(rng, 5, 8);
    ad::Tape t(ad::Tape::Mode::NoGrad);
    const auto r = forward(t, m, x);
    const auto want = straight_line_logits(m, x);
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.logits.value()(0, k) == doctest::Approx(want[k]).epsilon(1e-10));
    CHECK(r.attention.size() == layers);
    CHECK(r.attention.back().size() == 2);
    CHECK(r.attention.back().front().rows() == 5);
  }
}

TEST_CASE("zero input gives the classifier bias; one sentence works") {
  SplitMix64 rng(3);
  AttnModel m(tiny_config());
  randomize(m, rng);
  ad::Tape t(ad::Tape::Mode::NoGrad);
  CHECK(forward(t, m, Matrix(4, 8)).logits.value() == m.classifier_b.value);
  const auto r = forward(t, m, random_matrix(rng, 1, 8));
  CHECK(r.attention[0][0].rows() == 1);
  CHECK(r.attention[0][0].cols() == 1);
  CHECK_THROWS_AS(forward(t, m, Matrix(3, 7)), ShapeError);
  CHECK_THROWS_AS(forward(t, m, Matrix(0, 8)), Error);
}

TEST_CASE("permuting sentences permutes attention and keeps logits") {
  SplitMix64 rng(4);
  AttnModel m(tiny_config());
  randomize(m, rng);
  const auto x = random_matrix(rng, 5, 8);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Matrix px(5, 8);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t e = 0; e < 8; ++e) px(i, e) = x(perm[i], e);
  const auto a = extract_attention(m, as_doc(x)).a, pa = extract_attention(m, as_doc(px)).a;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(pa(i, j) == doctest::Approx(a(perm[i], perm[j])).epsilon(1e-5));
  const auto p = predict_proba(m, as_doc(x)), pp = predict_proba(m, as_doc(px));
  for (std::size_t k = 0; k < 3; ++k) CHECK(pp[k] == doctest::Approx(p[k]).epsilon(1e-6));
}

TEST_CASE("full-model gradient check on a tiny instance") {
  SplitMix64 rng(5);
  AttnModel m(tiny_config());
  randomize(m, rng);
  const auto x = random_matrix(rng, 4, 8);
  auto params = m.parameters();
  const auto r = ad::grad_check([&](ad::Tape& t) { return ad::cross_entropy(forward(t, m, x).logits, 1); }, params);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("head averaging and attention extraction") {
  const Matrix a(2, 2, {1, 2, 3, 4}), b(2, 2, {3, 2, 1, 0});
  const Matrix hs[] = {a, b};
  CHECK(average_heads(hs) == Matrix(2, 2, {2, 2, 2, 2}));
  const Matrix same[] = {a, a, a, a};
  CHECK(average_heads(same) == a);
  const Matrix four[] = {Matrix(1, 2, {0, 4}), Matrix(1, 2, {4, 0}), Matrix(1, 2, {1, 1}), Matrix(1, 2, {3, 3})};
  CHECK(average_heads(four) == Matrix(1, 2, {2, 2}));

  AttnModel zero(tiny_config());
  for (auto* p : zero.parameters()) p->value = Matrix(p->rows(), p->cols());
  SplitMix64 rng(6);
  const auto ex = extract_attention(zero, as_doc(random_matrix(rng, 3, 8)));
  CHECK(ex.a == Matrix(3, 3));
  CHECK(ex.n() == 3);

  AttnModel m(tiny_config());
  randomize(m, rng);
  const auto doc = as_doc(random_matrix(rng, 6, 8));
  const auto e1 = extract_attention(m, doc), e2 = extract_attention(m, doc);
  CHECK(e1.a == e2.a);
  for (double v : e1.a.data) CHECK(v >= 0.0);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.heads = 3;
  CHECK_THROWS_AS(AttnModel{c}, Error);
  c = tiny_config();
  c.layers = 3;
  CHECK_THROWS_AS(AttnModel{c}, Error);
  c = tiny_config();
  c.patience = 30;
  CHECK_THROWS_AS(AttnModel{c}, Error);
  AttnConfig defaults;
  CHECK(defaults.heads == 4);
  CHECK(defaults.batch_size == 32);
  CHECK(defaults.max_epochs == 20);
  CHECK(defaults.lr == 0.001);
  CHECK(defaults.patience == 5);
}

TEST_CASE("checkpoint round trip") {
  SplitMix64 rng(7);
  auto cfg = tiny_config();
  cfg.layers = 2;
  AttnModel m(cfg);
  randomize(m, rng);
  const auto back = AttnModel::from_checkpoint(decode_checkpoint(encode_checkpoint(m.to_checkpoint())));
  CHECK(back.config().layers == 2);
  CHECK(back.config().heads == 2);
  const auto doc = as_doc(random_matrix(rng, 4, 8));
  const auto p = predict_proba(m, doc), q = predict_proba(back, doc);
  for (std::size_t k = 0; k < 3; ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-5));
}

TEST_CASE("early stopping counts strict improvements") {
  EarlyStopping s(5);
  const double scores[] = {0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6};
  std::size_t stop_at = 0;
  for (std::size_t e = 0; e < 7 && !stop_at; ++e) {
    s.update(scores[e]);
    if (s.should_stop()) stop_at = e + 1;
  }
  CHECK(s.best_epoch() == 2);
  CHECK(stop_at == 2 + 5);
}

TEST_CASE("batch gradients do not depend on the thread count") {
  SplitMix64 rng(8);
  AttnModel m(tiny_config());
  std::vector<Matrix> xs;
  for (int i = 0; i < 9; ++i) xs.push_back(random_matrix(rng, 2 + rng.below(4), 8));
  const std::vector<std::size_t> batch{0, 3, 5, 1, 8, 2};
  const ExampleLoss loss = [&](ad::Tape& t, std::size_t i) {
    return ad::cross_entropy(forward(t, m, xs[i]).logits, i % 3);
  };
  auto params = m.parameters();
  const double l1 = batch_gradient(params, batch, loss, 1);
  std::vector<Matrix> g1;
  for (auto* p : params) g1.push_back(p->grad);
  const double l4 = batch_gradient(params, batch, loss, 4);
  CHECK(l1 == l4);
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->grad == g1[i]);
}

TEST_CASE("training on cluster-separated documents") {
  synth::ClusterOptions opts;
  opts.seed = 11;
  const auto c = synth::make_clustered_corpus(opts);
  std::vector<embed::EmbeddedDocument> tr(c.embeddings.begin(), c.embeddings.begin() + 72),
      va(c.embeddings.begin() + 72, c.embeddings.begin() + 80), te(c.embeddings.begin() + 80, c.embeddings.end());
  AttnConfig cfg;
  cfg.d_model = 64;
  cfg.batch_size = 8;
  cfg.seed = 11;
  const auto r = train(tr, va, cfg);
  CHECK(r.history.best_val_macro_f1 >= 0.95);
  CHECK(r.history.epochs.size() <= 20);
  CHECK(r.history.epochs.front().epoch == 1);
  CHECK(r.history.epochs.back().train_loss < r.history.epochs.front().train_loss);
  std::vector<std::uint32_t> preds, labels;
  for (const auto& d : te) {
    preds.push_back(predict(r.model, d));
    labels.push_back(d.label);
  }
  CHECK(stats::compute_metrics(preds, labels, 2).accuracy >= 0.8);

  const auto again = train(tr, va, cfg);
  CHECK(history_to_jsonl(again.history) == history_to_jsonl(r.history));
  const auto line = history_to_jsonl(r.history).substr(0, history_to_jsonl(r.history).find('\n'));
  CHECK(line.find("\"epoch\":1") != std::string::npos);
  CHECK(line.find("\"train_loss\":") != std::string::npos);
  CHECK(line.find("\"val_macro_f1\":") != std::string::npos);
}

TEST_CASE("training input errors") {
  auto cfg = tiny_config(2, 4, 2);
  const embed::EmbeddedDocument a{"a", 0, 1, 4, {1, 0, 0, 0}}, b{"b", 1, 1, 4, {0, 1, 0, 0}};
  CHECK_THROWS_AS(train({}, {a}, cfg), Error);
  CHECK_THROWS_AS(train({a}, {}, cfg), Error);
  CHECK_THROWS_AS(train({a, a}, {b}, cfg), Error);  // class 1 missing from training
  embed::EmbeddedDocument wide{"w", 1, 1, 5, {0, 0, 0, 0, 1}};
  CHECK_THROWS_AS(train({a, wide}, {b}, cfg), ShapeError);
}
