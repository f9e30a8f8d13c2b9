#pragma once

#include <cstdint>
#include <vector>

#include "docgraph/autodiff.hpp"
#include "docgraph/checkpoint.hpp"
#include "docgraph/graphgen.hpp"
#include "docgraph/training.hpp"

namespace docgraph::gat {

struct GatConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  double keep_prob = 0.8;
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t num_classes = 2;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

// Single-head attention layer: W is in x out, a = [a_src; a_dst] split into
// two out x 1 halves.
struct GatLayer {
  ad::Tensor w, a_src, a_dst;
};

class GatModel {
 public:
  GatModel(const GatConfig& cfg, std::size_t input_dim);

  const GatConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return input_dim_; }
  std::vector<ad::Tensor*> parameters();

  // Parameters, plus a "config" row [layers, hidden, K, keep_prob, slope].
  Checkpoint to_checkpoint() const;
  static GatModel from_checkpoint(const Checkpoint& ckpt);

  std::vector<GatLayer> layers;
  ad::Tensor classifier_w;  // hidden x K
  ad::Tensor classifier_b;  // 1 x K

 private:
  GatConfig cfg_;
  std::size_t input_dim_;
};

// Node features plus the attention mask (edges in both directions and the
// diagonal). Edge weights are not part of the input.
struct GraphInput {
  ad::Matrix features;
  ad::Matrix mask;
  std::uint32_t label = 0;
};

GraphInput to_input(const graph::DocumentGraph& g);

struct LayerOutput {
  ad::Var h;          // nodes x out, after ELU
  ad::Var attention;  // nodes x nodes, rows sum to 1 over the neighbourhood
};

// e_uv = LeakyReLU(a_src . W h_u + a_dst . W h_v) over v in N(u) and u itself,
// softmax-normalized per u; h'_u = ELU(sum_v alpha_uv W h_v).
LayerOutput gat_layer(ad::Tape& tape, ad::Var h, const ad::Matrix& mask, const GatLayer& layer,
                      double leaky_slope);

// Column-wise mean over nodes.
ad::Var readout(ad::Var h);

// Logits (1 x K). Dropout with keep_prob follows every attention layer when
// `training`; `dropout_seed` selects the masks.
ad::Var forward(ad::Tape& tape, const GatModel& model, const GraphInput& input, bool training = false,
                std::uint64_t dropout_seed = 0);

struct Prediction {
  std::uint32_t label = 0;
  std::vector<double> probabilities;
};

Prediction predict(const GatModel& model, const graph::DocumentGraph& g);
Prediction predict(const GatModel& model, const GraphInput& input);

struct TrainResult {
  GatModel model;
  TrainHistory history;
};

TrainResult train_gat(const std::vector<graph::DocumentGraph>& train_graphs,
                      const std::vector<graph::DocumentGraph>& val_graphs, const GatConfig& cfg);

}  // namespace docgraph::gat
