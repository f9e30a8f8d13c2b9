#include "docgraph/training.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "docgraph/detail/binio.hpp"
#include "docgraph/rng.hpp"

namespace docgraph {

std::string history_to_jsonl(const TrainHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    nlohmann::json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_macro_f1", e.val_macro_f1}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_history_jsonl(const TrainHistory& h, const std::string& path) {
  detail::write_file(path, history_to_jsonl(h));
}

bool EarlyStopping::update(double score) {
  ++epoch_;
  if (score > best_) {
    best_ = score;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double batch_gradient(std::span<ad::Tensor* const> params, std::span<const std::size_t> batch,
                      const ExampleLoss& loss, std::size_t threads) {
  struct Slot {
    double loss = 0.0;
    std::vector<ad::Matrix> grads;
  };
  std::vector<Slot> slots(batch.size());

  auto run = [&](std::size_t k) {
    ad::Tape tape(ad::Tape::Mode::Detached);
    auto l = loss(tape, batch[k]);
    tape.backward(l);
    slots[k].loss = l.scalar();
    slots[k].grads.reserve(params.size());
    for (const ad::Tensor* p : params) {
      const ad::Matrix* g = tape.param_grad(*p);
      slots[k].grads.push_back(g ? *g : ad::Matrix());
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, batch.size()));
  if (threads == 1) {
    for (std::size_t k = 0; k < batch.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t k; (k = next.fetch_add(1)) < batch.size();) {
          try {
            run(k);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  for (ad::Tensor* p : params) p->zero_grad();
  double total = 0.0;
  for (auto& s : slots) {
    total += s.loss;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!s.grads[i].empty()) ad::add_inplace(params[i]->grad, s.grads[i]);
  }
  if (!batch.empty()) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (ad::Tensor* p : params)
      for (auto& g : p->grad.data) g *= inv;
  }
  return total;
}

ad::Matrix xavier_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  ad::Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

}  // namespace docgraph
