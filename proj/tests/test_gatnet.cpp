#include <cmath>

#include "docgraph/error.hpp"
#include "docgraph/evalstats.hpp"
#include "docgraph/gatnet.hpp"
#include "docgraph/gradcheck.hpp"
#include "docgraph/synthetic.hpp"
#include "support.hpp"

using namespace docgraph;
using namespace docgraph::gat;
using ad::Matrix;
using testing::random_matrix;

namespace {

GatConfig small_config(std::size_t layers = 2, std::size_t hidden = 8, std::size_t k = 3) {
  GatConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.num_classes = k;
  c.seed = 9;
  return c;
}

void randomize(GatModel& m, SplitMix64& rng) {
  for (auto* p : m.parameters()) p->value = random_matrix(rng, p->rows(), p->cols());
}

graph::DocumentGraph make_graph(const Matrix& feats, std::vector<graph::Edge> edges, std::uint32_t label = 0) {
  graph::DocumentGraph g;
  g.doc_id = "g";
  g.label = label;
  g.scheme = "test";
  for (std::size_t i = 0; i < feats.rows; ++i) {
    graph::Node n;
    n.text = "node " + std::to_string(i);
    for (double v : feats.row(i)) n.feature.push_back(static_cast<float>(v));
    g.nodes.push_back(n);
  }
  g.edges = std::move(edges);
  return g;
}

double elu(double x) { return x > 0 ? x : std::exp(x) - 1; }

// Loop-only single GAT layer.
Matrix straight_line_layer(const Matrix& h, const Matrix& mask, const GatLayer& l, double slope) {
  const std::size_t n = h.rows, out = l.w.cols();
  Matrix wh(n, out);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t k = 0; k < h.cols; ++k) wh(i, o) += h(i, k) * l.w.value(k, o);
  Matrix res(n, out);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<double> e(n, -INFINITY);
    double mx = -INFINITY;
    for (std::size_t v = 0; v < n; ++v) {
      if (mask(u, v) == 0.0) continue;
      double s = 0;
      for (std::size_t o = 0; o < out; ++o) s += l.a_src.value(o, 0) * wh(u, o) + l.a_dst.value(o, 0) * wh(v, o);
      e[v] = s > 0 ? s : slope * s;
      mx = std::max(mx, e[v]);
    }
    double z = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (mask(u, v) != 0.0) z += std::exp(e[v] - mx);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0;
      for (std::size_t v = 0; v < n; ++v)
        if (mask(u, v) != 0.0) acc += std::exp(e[v] - mx) / z * wh(v, o);
      res(u, o) = elu(acc);
    }
  }
  return res;
}

}  // namespace

TEST_CASE("single node: the layer reduces to ELU(hW)") {
  SplitMix64 rng(1);
  GatModel m(small_config(1, 4), 3);
  randomize(m, rng);
  const auto h = random_matrix(rng, 1, 3);
  ad::Tape t(ad::Tape::Mode::NoGrad);
  const auto out = gat_layer(t, t.constant(h), Matrix(1, 1, {1}), m.layers[0], 0.2);
  CHECK(out.attention.value()(0, 0) == 1.0);
  const auto wh = ad::matmul(h, m.layers[0].w.value);
  for (std::size_t o = 0; o < 4; ++o) CHECK(out.h.value()(0, o) == doctest::Approx(elu(wh(0, o))).epsilon(1e-12));
}

TEST_CASE("identical connected nodes get identical outputs") {
  SplitMix64 rng(2);
  GatModel m(small_config(1, 5), 4);
  randomize(m, rng);
  const auto row = random_matrix(rng, 1, 4);
  Matrix h(2, 4);
  for (std::size_t k = 0; k < 4; ++k) h(0, k) = h(1, k) = row(0, k);
  ad::Tape t(ad::Tape::Mode::NoGrad);
  const auto out = gat_layer(t, t.constant(h), Matrix(2, 2, 1.0), m.layers[0], 0.2).h.value();
  for (std::size_t o = 0; o < 5; ++o) CHECK(out(0, o) == out(1, o));
}

TEST_CASE("layer matches a straight-line implementation; attention rows sum to 1") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    GatModel m(small_config(1, 6), 4);
    randomize(m, rng);
    const auto h = random_matrix(rng, 3, 4);
    const Matrix mask(3, 3, {1, 1, 0, 1, 1, 1, 0, 1, 1});  // 3-node path plus self-loops
    ad::Tape t(ad::Tape::Mode::NoGrad);
    const auto out = gat_layer(t, t.constant(h), mask, m.layers[0], 0.2);
    testing::check_close(out.h.value(), straight_line_layer(h, mask, m.layers[0], 0.2), 1e-12);
    const auto& a = out.attention.value();
    for (std::size_t u = 0; u < 3; ++u) {
      double s = 0;
      for (std::size_t v = 0; v < 3; ++v) s += a(u, v);
      CHECK(std::fabs(s - 1.0) <= 1e-6);
    }
    CHECK(a(0, 2) == 0.0);
  }
}

TEST_CASE("readout") {
  ad::Tape t(ad::Tape::Mode::NoGrad);
  CHECK(readout(t.constant(Matrix(1, 3, {1, 2, 3}))).value() == Matrix(1, 3, {1, 2, 3}));
  CHECK(readout(t.constant(Matrix(2, 2, {1, -2, -1, 2}))).value() == Matrix(1, 2, {0, 0}));
  const Matrix r(4, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  CHECK(readout(t.constant(r)).value() == Matrix(1, 3, {5.5, 6.5, 7.5}));
  CHECK_THROWS_AS(readout(t.constant(Matrix(0, 3))), Error);
}

TEST_CASE("prediction on a hand-set one-node model") {
  GatConfig cfg = small_config(1, 2, 2);
  GatModel m(cfg, 2);
  m.layers[0].w.value = Matrix(2, 2, {1, 0, 0, 1});
  m.layers[0].a_src.value = Matrix(2, 1, {0.3, -0.7});
  m.layers[0].a_dst.value = Matrix(2, 1, {0.1, 0.2});
  m.classifier_w.value = Matrix(2, 2, {1, 0, 0, 1});
  m.classifier_b.value = Matrix(1, 2, {0.5, 0});
  const auto g = make_graph(Matrix(1, 2, {1.0, -1.0}), {});
  const auto p = predict(m, g);
  // h' = ELU([1, -1]) = [1, e^-1 - 1]; logits = [1.5, e^-1 - 1]
  const double l0 = 1.5, l1 = std::exp(-1.0) - 1.0;
  const double p0 = 1.0 / (1.0 + std::exp(l1 - l0));
  CHECK(p.probabilities[0] == doctest::Approx(p0).epsilon(1e-12));
  CHECK(p.label == 0);
  CHECK(p.probabilities[0] + p.probabilities[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("predictions: normalized, deterministic, invariant to relabeling and edge weights") {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    GatModel m(small_config(2, 8, 3), 5);
    randomize(m, rng);
    const auto feats = random_matrix(rng, 5, 5);
    std::vector<graph::Edge> edges{{0, 1, 0.3f}, {1, 2, 0.5f}, {2, 3, 0.1f}, {3, 4, 0.9f}, {0, 4, 0.2f}};
    const auto g = make_graph(feats, edges);
    const auto p = predict(m, g);
    double s = 0;
    for (double v : p.probabilities) s += v;
    CHECK(std::fabs(s - 1.0) <= 1e-6);
    CHECK(predict(m, g).probabilities == p.probabilities);

    const std::vector<std::uint32_t> perm{2, 4, 0, 1, 3};  // old index -> new index
    Matrix pf(5, 5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = 0; k < 5; ++k) pf(perm[i], k) = feats(i, k);
    std::vector<graph::Edge> pe;
    for (const auto& e : edges) {
      auto u = perm[e.u], v = perm[e.v];
      pe.push_back({std::min(u, v), std::max(u, v), e.weight});
    }
    const auto pp = predict(m, make_graph(pf, pe)).probabilities;
    for (std::size_t k = 0; k < 3; ++k) CHECK(pp[k] == doctest::Approx(p.probabilities[k]).epsilon(1e-6));

    auto scaled = g;
    for (auto& e : scaled.edges) e.weight *= 7.5f;
    CHECK(predict(m, scaled).probabilities == p.probabilities);
  }
}

TEST_CASE("full-model gradient check on a 4-node graph") {
  SplitMix64 rng(5);
  GatModel m(small_config(2, 8, 3), 6);
  randomize(m, rng);
  const auto in = to_input(make_graph(random_matrix(rng, 4, 6), {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}}, 2));
  auto params = m.parameters();
  const auto r = ad::grad_check([&](ad::Tape& t) { return ad::cross_entropy(forward(t, m, in, false), in.label); },
                                params);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("input conversion and errors") {
  const auto g = make_graph(Matrix(3, 2, {1, 2, 3, 4, 5, 6}), {{0, 2, 0.5f}});
  const auto in = to_input(g);
  CHECK(in.mask == Matrix(3, 3, {1, 0, 1, 0, 1, 0, 1, 0, 1}));
  auto bad = g;
  bad.edges.push_back({0, 5, 1.0f});
  CHECK_THROWS_AS(to_input(bad), Error);
  GatModel m(small_config(1, 4, 2), 3);
  CHECK_THROWS_AS(predict(m, g), ShapeError);
  GatConfig c = small_config();
  c.layers = 4;
  CHECK_THROWS_AS(GatModel(c, 3), Error);
  c = small_config();
  c.keep_prob = 0.0;
  CHECK_THROWS_AS(GatModel(c, 3), Error);
  GatConfig defaults;
  CHECK(defaults.keep_prob == 0.8);
  CHECK(defaults.batch_size == 64);
  CHECK(defaults.max_epochs == 50);
  CHECK(defaults.hidden == 64);
  CHECK(defaults.leaky_slope == 0.2);
}

TEST_CASE("dropout only in training mode") {
  SplitMix64 rng(6);
  GatModel m(small_config(2, 8, 2), 4);
  const auto in = to_input(make_graph(random_matrix(rng, 3, 4), {{0, 1, 1}, {1, 2, 1}}));
  ad::Tape t(ad::Tape::Mode::NoGrad);
  const auto eval1 = forward(t, m, in, false, 1).value();
  CHECK(forward(t, m, in, false, 2).value() == eval1);
  CHECK(forward(t, m, in, true, 1).value() == forward(t, m, in, true, 1).value());
  CHECK(forward(t, m, in, true, 1).value() != forward(t, m, in, true, 2).value());
}

TEST_CASE("checkpoint round trip") {
  SplitMix64 rng(7);
  GatModel m(small_config(3, 8, 4), 5);
  randomize(m, rng);
  const auto back = GatModel::from_checkpoint(decode_checkpoint(encode_checkpoint(m.to_checkpoint())));
  CHECK(back.config().layers == 3);
  CHECK(back.config().hidden == 8);
  CHECK(back.config().num_classes == 4);
  CHECK(back.input_dim() == 5);
  const auto g = make_graph(random_matrix(rng, 3, 5), {{0, 1, 1}, {1, 2, 1}});
  const auto p = predict(m, g).probabilities, q = predict(back, g).probabilities;
  for (std::size_t k = 0; k < 4; ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-5));
}

TEST_CASE("training on separable complete graphs") {
  SplitMix64 rng(8);
  auto make_split = [&](std::size_t count, std::size_t offset) {
    std::vector<graph::DocumentGraph> out;
    for (std::size_t i = 0; i < count; ++i) {
      const auto label = std::uint32_t((i + offset) % 2);
      const std::size_t n = 2 + rng.below(5);
      auto feats = random_matrix(rng, n, 6, -0.5, 0.5);
      for (std::size_t r = 0; r < n; ++r) feats(r, 0) += label ? 1.0 : -1.0;
      std::vector<graph::Edge> edges;
      for (std::uint32_t u = 0; u < n; ++u)
        for (std::uint32_t v = u + 1; v < n; ++v) edges.push_back({u, v, 1.0f});
      auto g = make_graph(feats, edges, label);
      g.doc_id = "g" + std::to_string(offset + i);
      out.push_back(g);
    }
    return out;
  };
  const auto tr = make_split(60, 0), va = make_split(20, 1000);
  auto cfg = small_config(2, 16, 2);
  cfg.batch_size = 8;
  const auto r = train_gat(tr, va, cfg);
  CHECK(r.history.best_val_macro_f1 >= 0.9);
  CHECK(r.history.epochs.size() <= 50);
  CHECK(r.history.best_epoch >= 1);
  std::vector<std::uint32_t> preds, labels;
  for (const auto& g : va) {
    preds.push_back(predict(r.model, g).label);
    labels.push_back(g.label);
  }
  CHECK(stats::compute_metrics(preds, labels, 2).macro_f1 == doctest::Approx(r.history.best_val_macro_f1));
  CHECK(history_to_jsonl(train_gat(tr, va, cfg).history) == history_to_jsonl(r.history));

  CHECK_THROWS_AS(train_gat({}, va, cfg), Error);
  CHECK_THROWS_AS(train_gat(tr, {}, cfg), Error);
  auto one_class = tr;
  for (auto& g : one_class) g.label = 0;
  CHECK_THROWS_AS(train_gat(one_class, va, cfg), Error);
}
