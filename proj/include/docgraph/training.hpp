#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "docgraph/autodiff.hpp"

namespace docgraph {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_macro_f1 = 0.0;
  bool stopped_early = false;
};

// JSON-lines, one {epoch, train_loss, val_macro_f1} object per epoch.
std::string history_to_jsonl(const TrainHistory& h);
void write_history_jsonl(const TrainHistory& h, const std::string& path);

// Patience-based stopping on a score to maximize. Only strict improvements
// reset the counter.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Feeds the next epoch's score; returns true if it is a new best.
  bool update(double score);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

using ExampleLoss = std::function<ad::Var(ad::Tape&, std::size_t example)>;

// Mean gradient of `loss` over the examples in `batch`, written into each
// parameter's grad (overwriting it). Each example runs on its own detached
// tape; per-example gradients are reduced in batch order, so the result is
// bit-identical for any thread count. Returns the summed loss.
double batch_gradient(std::span<ad::Tensor* const> params, std::span<const std::size_t> batch,
                      const ExampleLoss& loss, std::size_t threads = 1);

// Glorot/Xavier uniform initialization.
ad::Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace docgraph
