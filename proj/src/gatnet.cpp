#include "docgraph/gatnet.hpp"

#include <algorithm>

#include "docgraph/error.hpp"
#include "docgraph/evalstats.hpp"
#include "docgraph/optim.hpp"
#include "docgraph/rng.hpp"

namespace docgraph::gat {

void GatConfig::validate() const {
  if (layers < 1 || layers > 3) throw Error("GAT config: layers must be in [1, 3]");
  if (hidden == 0) throw Error("GAT config: hidden size must be > 0");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw Error("GAT config: keep_prob must be in (0, 1]");
  if (num_classes < 2) throw Error("GAT config: need at least 2 classes");
  if (batch_size == 0 || max_epochs == 0) throw Error("GAT config: batch size and epochs must be > 0");
  if (patience == 0 || patience > max_epochs) throw Error("GAT config: patience must be in [1, max_epochs]");
  if (!(lr > 0.0)) throw Error("GAT config: learning rate must be positive");
}

GatModel::GatModel(const GatConfig& cfg, std::size_t input_dim) : cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  if (input_dim == 0) throw Error("GAT: input dimension must be > 0");
  std::uint64_t stream = 0;
  auto init = [&](std::size_t r, std::size_t c) {
    return ad::Tensor(xavier_uniform(r, c, mix_seed(cfg.seed, 0x6A7000ULL + ++stream)));
  };
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    layers.push_back({init(in, cfg.hidden), init(cfg.hidden, 1), init(cfg.hidden, 1)});
    in = cfg.hidden;
  }
  classifier_w = init(cfg.hidden, cfg.num_classes);
  classifier_b = ad::Tensor(ad::Matrix(1, cfg.num_classes));
}

std::vector<ad::Tensor*> GatModel::parameters() {
  std::vector<ad::Tensor*> ps;
  for (auto& l : layers) ps.insert(ps.end(), {&l.w, &l.a_src, &l.a_dst});
  ps.push_back(&classifier_w);
  ps.push_back(&classifier_b);
  return ps;
}

Checkpoint GatModel::to_checkpoint() const {
  Checkpoint ck;
  ck.input_dim = static_cast<std::uint32_t>(input_dim_);
  ck.params.push_back({"config", ad::Matrix(1, 5, {double(cfg_.layers), double(cfg_.hidden),
                                                   double(cfg_.num_classes), cfg_.keep_prob,
                                                   cfg_.leaky_slope})});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = "gat" + std::to_string(l) + ".";
    ck.params.push_back({p + "w", layers[l].w.value});
    ck.params.push_back({p + "a_src", layers[l].a_src.value});
    ck.params.push_back({p + "a_dst", layers[l].a_dst.value});
  }
  ck.params.push_back({"classifier.w", classifier_w.value});
  ck.params.push_back({"classifier.b", classifier_b.value});
  return ck;
}

GatModel GatModel::from_checkpoint(const Checkpoint& ck) {
  const auto& c = ck.at("config");
  if (c.size() != 5) throw FormatError(FormatErrc::Malformed, "GAT checkpoint config row has wrong size");
  GatConfig cfg;
  cfg.layers = static_cast<std::size_t>(c.data[0]);
  cfg.hidden = static_cast<std::size_t>(c.data[1]);
  cfg.num_classes = static_cast<std::size_t>(c.data[2]);
  cfg.keep_prob = c.data[3];
  cfg.leaky_slope = c.data[4];
  GatModel m(cfg, ck.input_dim);
  auto load = [&](ad::Tensor& t, const std::string& name) {
    const auto& v = ck.at(name);
    if (!v.same_shape(t.value))
      throw FormatError(FormatErrc::Malformed, "checkpoint parameter '" + name + "' has shape " +
                                                   v.shape_str() + ", expected " + t.value.shape_str());
    t = ad::Tensor(v);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto p = "gat" + std::to_string(l) + ".";
    load(m.layers[l].w, p + "w");
    load(m.layers[l].a_src, p + "a_src");
    load(m.layers[l].a_dst, p + "a_dst");
  }
  load(m.classifier_w, "classifier.w");
  load(m.classifier_b, "classifier.b");
  return m;
}

GraphInput to_input(const graph::DocumentGraph& g) {
  if (g.nodes.empty()) throw Error("graph '" + g.doc_id + "' is empty");
  const std::size_t n = g.nodes.size();
  const std::size_t d = g.feature_dim();
  GraphInput in{ad::Matrix(n, d), ad::Matrix(n, n), g.label};
  for (std::size_t i = 0; i < n; ++i) {
    if (g.nodes[i].feature.size() != d) throw ShapeError("graph '" + g.doc_id + "': ragged node features");
    for (std::size_t k = 0; k < d; ++k) in.features(i, k) = g.nodes[i].feature[k];
    in.mask(i, i) = 1.0;
  }
  for (const auto& e : g.edges) {
    if (e.u >= n || e.v >= n) throw Error("graph '" + g.doc_id + "': edge endpoint out of range");
    in.mask(e.u, e.v) = 1.0;
    in.mask(e.v, e.u) = 1.0;
  }
  return in;
}

LayerOutput gat_layer(ad::Tape& tape, ad::Var h, const ad::Matrix& mask, const GatLayer& layer,
                      double leaky_slope) {
  if (mask.rows != h.rows() || mask.cols != h.rows())
    throw ShapeError("gat_layer: mask " + mask.shape_str() + " for " + std::to_string(h.rows()) + " nodes");
  auto wh = ad::matmul(h, tape.param(layer.w));
  auto src = ad::matmul(wh, tape.param(layer.a_src));                   // n x 1
  auto dst = ad::transpose(ad::matmul(wh, tape.param(layer.a_dst)));    // 1 x n
  auto scores = ad::leaky_relu(ad::add_outer(src, dst), leaky_slope);
  auto alpha = ad::masked_softmax_rows(scores, mask);
  return {ad::elu(ad::matmul(alpha, wh)), alpha};
}

ad::Var readout(ad::Var h) {
  if (h.rows() == 0) throw Error("readout: empty graph");
  return ad::mean_rows(h);
}

ad::Var forward(ad::Tape& tape, const GatModel& model, const GraphInput& input, bool training,
                std::uint64_t dropout_seed) {
  const auto& cfg = model.config();
  if (input.features.cols != model.input_dim())
    throw ShapeError("GAT forward: feature dim " + std::to_string(input.features.cols) + " != " +
                     std::to_string(model.input_dim()));
  ad::Var h = tape.constant(input.features);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = gat_layer(tape, h, input.mask, model.layers[l], cfg.leaky_slope).h;
    h = ad::dropout(h, cfg.keep_prob, mix_seed(dropout_seed, l), training);
  }
  return ad::add(ad::matmul(readout(h), tape.param(model.classifier_w)), tape.param(model.classifier_b));
}

Prediction predict(const GatModel& model, const GraphInput& input) {
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  auto p = ad::softmax_rows(forward(tape, model, input, false)).value();
  Prediction out;
  out.probabilities = p.data;
  out.label = static_cast<std::uint32_t>(std::max_element(p.data.begin(), p.data.end()) - p.data.begin());
  return out;
}

Prediction predict(const GatModel& model, const graph::DocumentGraph& g) { return predict(model, to_input(g)); }

TrainResult train_gat(const std::vector<graph::DocumentGraph>& train_graphs,
                      const std::vector<graph::DocumentGraph>& val_graphs, const GatConfig& cfg) {
  cfg.validate();
  if (train_graphs.empty() || val_graphs.empty()) throw Error("train_gat: empty training or validation split");
  const std::size_t dim = train_graphs.front().feature_dim();
  std::vector<GraphInput> train_in, val_in;
  std::vector<bool> present(cfg.num_classes, false);
  for (const auto* split : {&train_graphs, &val_graphs}) {
    auto& dst = split == &train_graphs ? train_in : val_in;
    for (const auto& g : *split) {
      if (g.feature_dim() != dim) throw ShapeError("train_gat: graph '" + g.doc_id + "' feature dim differs");
      if (g.label >= cfg.num_classes) throw Error("train_gat: graph '" + g.doc_id + "' label out of range");
      dst.push_back(to_input(g));
    }
  }
  for (const auto& in : train_in) present[in.label] = true;
  for (std::size_t k = 0; k < cfg.num_classes; ++k)
    if (!present[k]) throw Error("train_gat: class " + std::to_string(k) + " absent from training data");

  GatModel model(cfg, dim);
  auto params = model.parameters();
  ad::AdamState adam;
  adam.options.lr = cfg.lr;
  TrainResult result{model, {}};
  EarlyStopping stopper(cfg.patience);
  std::vector<std::size_t> order(train_in.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::uint64_t epoch_seed = 0;
  const ExampleLoss loss = [&](ad::Tape& tape, std::size_t i) {
    return ad::cross_entropy(forward(tape, model, train_in[i], true, mix_seed(epoch_seed, i)), train_in[i].label);
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    epoch_seed = mix_seed(cfg.seed, 0xD0000ULL + epoch);
    SplitMix64 rng(mix_seed(cfg.seed, 0x5A0000ULL + epoch));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto len = std::min(cfg.batch_size, order.size() - b);
      total += batch_gradient(params, std::span(order).subspan(b, len), loss, cfg.threads);
      ad::adam_step(params, adam);
    }
    std::vector<std::uint32_t> preds, labels;
    for (const auto& in : val_in) {
      preds.push_back(predict(model, in).label);
      labels.push_back(in.label);
    }
    const double f1 = stats::compute_metrics(preds, labels, cfg.num_classes).macro_f1;
    result.history.epochs.push_back({epoch, total / static_cast<double>(order.size()), f1});
    if (stopper.update(f1)) result.model = model;
    if (stopper.should_stop()) {
      result.history.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  result.history.best_epoch = stopper.best_epoch();
  result.history.best_val_macro_f1 = stopper.best_score();
  return result;
}

}  // namespace docgraph::gat
