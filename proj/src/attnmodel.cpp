#include "docgraph/attnmodel.hpp"

#include <algorithm>
#include <cmath>

#include "docgraph/error.hpp"
#include "docgraph/evalstats.hpp"
#include "docgraph/optim.hpp"
#include "docgraph/rng.hpp"

namespace docgraph::attn {

void AttnConfig::validate() const {
  if (heads == 0 || d_model == 0 || d_model % heads != 0)
    throw Error("attention config: d_model=" + std::to_string(d_model) +
                " must be a positive multiple of heads=" + std::to_string(heads));
  if (layers < 1 || layers > 2) throw Error("attention config: layers must be 1 or 2");
  if (num_classes < 2) throw Error("attention config: need at least 2 classes");
  if (batch_size == 0 || max_epochs == 0) throw Error("attention config: batch size and epochs must be > 0");
  if (patience == 0 || patience > max_epochs) throw Error("attention config: patience must be in [1, max_epochs]");
  if (!(lr > 0.0)) throw Error("attention config: learning rate must be positive");
}

AttnModel::AttnModel(const AttnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.d_model;
  std::uint64_t stream = 0;
  auto init = [&](std::size_t r, std::size_t c) {
    return ad::Tensor(xavier_uniform(r, c, mix_seed(cfg.seed, ++stream)));
  };
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    AttnLayer layer{init(d, d), init(d, d), init(d, d), init(d, d), init(d, d)};
    layers.push_back(std::move(layer));
  }
  classifier_w = init(d, cfg.num_classes);
  classifier_b = ad::Tensor(ad::Matrix(1, cfg.num_classes));
}

std::vector<ad::Tensor*> AttnModel::parameters() {
  std::vector<ad::Tensor*> ps;
  for (auto& l : layers) ps.insert(ps.end(), {&l.wq, &l.wk, &l.wv, &l.wo, &l.wff});
  ps.push_back(&classifier_w);
  ps.push_back(&classifier_b);
  return ps;
}

std::vector<const ad::Tensor*> AttnModel::parameters() const {
  auto ps = const_cast<AttnModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

Checkpoint AttnModel::to_checkpoint() const {
  Checkpoint ck;
  ck.input_dim = static_cast<std::uint32_t>(cfg_.d_model);
  ck.params.push_back({"config", ad::Matrix(1, 4, {double(cfg_.heads), double(cfg_.layers),
                                                   double(cfg_.d_model), double(cfg_.num_classes)})});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto p = "layer" + std::to_string(l) + ".";
    ck.params.push_back({p + "wq", layers[l].wq.value});
    ck.params.push_back({p + "wk", layers[l].wk.value});
    ck.params.push_back({p + "wv", layers[l].wv.value});
    ck.params.push_back({p + "wo", layers[l].wo.value});
    ck.params.push_back({p + "wff", layers[l].wff.value});
  }
  ck.params.push_back({"classifier.w", classifier_w.value});
  ck.params.push_back({"classifier.b", classifier_b.value});
  return ck;
}

AttnModel AttnModel::from_checkpoint(const Checkpoint& ck) {
  const auto& c = ck.at("config");
  if (c.size() != 4) throw FormatError(FormatErrc::Malformed, "attention checkpoint config row has wrong size");
  AttnConfig cfg;
  cfg.heads = static_cast<std::size_t>(c.data[0]);
  cfg.layers = static_cast<std::size_t>(c.data[1]);
  cfg.d_model = static_cast<std::size_t>(c.data[2]);
  cfg.num_classes = static_cast<std::size_t>(c.data[3]);
  AttnModel m(cfg);
  auto load = [&](ad::Tensor& t, const std::string& name) {
    const auto& v = ck.at(name);
    if (!v.same_shape(t.value))
      throw FormatError(FormatErrc::Malformed, "checkpoint parameter '" + name + "' has shape " +
                                                   v.shape_str() + ", expected " + t.value.shape_str());
    t = ad::Tensor(v);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto p = "layer" + std::to_string(l) + ".";
    load(m.layers[l].wq, p + "wq");
    load(m.layers[l].wk, p + "wk");
    load(m.layers[l].wv, p + "wv");
    load(m.layers[l].wo, p + "wo");
    load(m.layers[l].wff, p + "wff");
  }
  load(m.classifier_w, "classifier.w");
  load(m.classifier_b, "classifier.b");
  return m;
}

ad::Var relu_attention(ad::Var q, ad::Var k, std::size_t n) {
  if (n == 0) throw Error("relu_attention: empty sequence");
  if (q.cols() != k.cols() || q.rows() != k.rows())
    throw ShapeError("relu_attention: Q " + q.value().shape_str() + " vs K " + k.value().shape_str());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
  return ad::scale(ad::relu(scores), 1.0 / static_cast<double>(n));
}

ad::Matrix relu_attention(const ad::Matrix& q, const ad::Matrix& k, std::size_t n) {
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  return relu_attention(tape.constant(q), tape.constant(k), n).value();
}

ForwardResult forward(ad::Tape& tape, const AttnModel& model, const ad::Matrix& x) {
  const auto& cfg = model.config();
  if (x.rows == 0) throw Error("attention forward: document has no sentences");
  if (x.cols != cfg.d_model)
    throw ShapeError("attention forward: input dim " + std::to_string(x.cols) + " != d_model " +
                     std::to_string(cfg.d_model));
  const std::size_t n = x.rows;
  const std::size_t dh = cfg.d_head();

  ForwardResult out;
  ad::Var h = tape.constant(x);
  for (const auto& layer : model.layers) {
    auto q = ad::matmul(h, tape.param(layer.wq));
    auto k = ad::matmul(h, tape.param(layer.wk));
    auto v = ad::matmul(h, tape.param(layer.wv));
    std::vector<ad::Var> heads_out;
    std::vector<ad::Var> heads_attn;
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      auto alpha = relu_attention(ad::slice_cols(q, hd * dh, dh), ad::slice_cols(k, hd * dh, dh), n);
      heads_attn.push_back(alpha);
      heads_out.push_back(ad::matmul(alpha, ad::slice_cols(v, hd * dh, dh)));
    }
    auto z = ad::matmul(ad::concat_cols(heads_out), tape.param(layer.wo));
    h = ad::relu(ad::matmul(z, tape.param(layer.wff)));
    out.attention.push_back(std::move(heads_attn));
  }
  auto pooled = ad::mean_rows(h);
  out.logits = ad::add(ad::matmul(pooled, tape.param(model.classifier_w)), tape.param(model.classifier_b));
  return out;
}

ad::Matrix to_matrix(const embed::EmbeddedDocument& doc) {
  ad::Matrix m(doc.n, doc.d);
  for (std::size_t k = 0; k < doc.values.size(); ++k) m.data[k] = doc.values[k];
  return m;
}

ad::Matrix average_heads(std::span<const ad::Matrix> heads) {
  if (heads.empty()) throw Error("average_heads: no heads");
  ad::Matrix avg(heads.front().rows, heads.front().cols);
  for (const auto& h : heads) ad::add_inplace(avg, h);
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (auto& v : avg.data) v *= inv;
  return avg;
}

AttentionMatrix extract_attention(const AttnModel& model, const embed::EmbeddedDocument& doc) {
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  auto fr = forward(tape, model, to_matrix(doc));
  std::vector<ad::Matrix> heads;
  for (const auto& v : fr.attention.back()) heads.push_back(v.value());
  return {doc.id, average_heads(heads)};
}

std::vector<double> predict_proba(const AttnModel& model, const embed::EmbeddedDocument& doc) {
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  auto p = ad::softmax_rows(forward(tape, model, to_matrix(doc)).logits);
  return p.value().data;
}

std::uint32_t predict(const AttnModel& model, const embed::EmbeddedDocument& doc) {
  const auto p = predict_proba(model, doc);
  return static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

TrainResult train(const std::vector<embed::EmbeddedDocument>& train_docs,
                  const std::vector<embed::EmbeddedDocument>& val_docs, const AttnConfig& cfg) {
  cfg.validate();
  if (train_docs.empty() || val_docs.empty()) throw Error("train: empty training or validation split");
  std::vector<bool> present(cfg.num_classes, false);
  for (const auto* split : {&train_docs, &val_docs})
    for (const auto& d : *split) {
      if (d.d != cfg.d_model)
        throw ShapeError("train: document '" + d.id + "' has d=" + std::to_string(d.d) +
                         ", model expects " + std::to_string(cfg.d_model));
      if (d.label >= cfg.num_classes) throw Error("train: document '" + d.id + "' label out of range");
    }
  for (const auto& d : train_docs) present[d.label] = true;
  for (std::size_t k = 0; k < cfg.num_classes; ++k)
    if (!present[k]) throw Error("train: class " + std::to_string(k) + " absent from training data");

  std::vector<ad::Matrix> xs;
  xs.reserve(train_docs.size());
  for (const auto& d : train_docs) xs.push_back(to_matrix(d));

  AttnModel model(cfg);
  auto params = model.parameters();
  ad::AdamState adam;
  adam.options.lr = cfg.lr;

  TrainResult result{model, {}};
  EarlyStopping stopper(cfg.patience);
  std::vector<std::size_t> order(train_docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const ExampleLoss loss = [&](ad::Tape& tape, std::size_t i) {
    return ad::cross_entropy(forward(tape, model, xs[i]).logits, train_docs[i].label);
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    SplitMix64 rng(mix_seed(cfg.seed, 0xA77E0000ULL + epoch));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto len = std::min(cfg.batch_size, order.size() - b);
      total += batch_gradient(params, std::span(order).subspan(b, len), loss, cfg.threads);
      ad::adam_step(params, adam);
    }

    std::vector<std::uint32_t> preds, labels;
    for (const auto& d : val_docs) {
      preds.push_back(predict(model, d));
      labels.push_back(d.label);
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

}  // namespace docgraph::attn
