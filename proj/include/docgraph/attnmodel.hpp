#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "docgraph/autodiff.hpp"
#include "docgraph/checkpoint.hpp"
#include "docgraph/embedstore.hpp"
#include "docgraph/training.hpp"

namespace docgraph::attn {

struct AttnConfig {
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t d_model = 384;
  std::size_t num_classes = 2;
  double lr = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  // Worker threads for per-document gradients; results do not depend on it.
  std::size_t threads = 1;

  std::size_t d_head() const { return d_model / heads; }
  void validate() const;
};

// Projections of one self-attention block. W_Q, W_K, W_V and W_O are
// d_model x d_model; head h uses columns [h*d_head, (h+1)*d_head) of the
// Q/K/V projections. The feed-forward layer is d_model x d_model with ReLU.
struct AttnLayer {
  ad::Tensor wq, wk, wv, wo, wff;
};

class AttnModel {
 public:
  // Xavier-initialized from cfg.seed; classifier bias starts at zero.
  explicit AttnModel(const AttnConfig& cfg);

  const AttnConfig& config() const { return cfg_; }
  std::vector<ad::Tensor*> parameters();
  std::vector<const ad::Tensor*> parameters() const;

  // Parameters, plus a "config" row [heads, layers, d_model, K].
  Checkpoint to_checkpoint() const;
  static AttnModel from_checkpoint(const Checkpoint& ckpt);

  std::vector<AttnLayer> layers;
  ad::Tensor classifier_w;  // d_model x K
  ad::Tensor classifier_b;  // 1 x K

 private:
  AttnConfig cfg_;
};

// relu(Q K^T / sqrt(d_head)) / n with d_head = Q.cols.
ad::Var relu_attention(ad::Var q, ad::Var k, std::size_t n);
ad::Matrix relu_attention(const ad::Matrix& q, const ad::Matrix& k, std::size_t n);

struct ForwardResult {
  ad::Var logits;                              // 1 x K
  std::vector<std::vector<ad::Var>> attention;  // [layer][head], each n x n
};

ForwardResult forward(ad::Tape& tape, const AttnModel& model, const ad::Matrix& x);

ad::Matrix to_matrix(const embed::EmbeddedDocument& doc);

struct AttentionMatrix {
  std::string doc_id;
  ad::Matrix a;  // n x n, non-negative
  std::size_t n() const { return a.rows; }
};

// Elementwise mean of equally-shaped matrices.
ad::Matrix average_heads(std::span<const ad::Matrix> heads);

// Eval-mode forward; the last layer's heads averaged elementwise.
AttentionMatrix extract_attention(const AttnModel& model, const embed::EmbeddedDocument& doc);

std::vector<double> predict_proba(const AttnModel& model, const embed::EmbeddedDocument& doc);
std::uint32_t predict(const AttnModel& model, const embed::EmbeddedDocument& doc);

struct TrainResult {
  AttnModel model;  // best validation macro-F1 checkpoint
  TrainHistory history;
};

// Adam + cross-entropy with mini-batches of documents (each document is its
// own sequence, so no padding), validation macro-F1 early stopping.
TrainResult train(const std::vector<embed::EmbeddedDocument>& train_docs,
                  const std::vector<embed::EmbeddedDocument>& val_docs, const AttnConfig& cfg);

}  // namespace docgraph::attn
