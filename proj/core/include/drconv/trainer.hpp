#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drconv/dataset.hpp"
#include "drconv/model.hpp"

namespace drconv {

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor4 dlogits;    // (softmax - onehot) / batch
  std::size_t correct = 0;
};

// Mean softmax cross-entropy over logits of shape (n,1,1,classes).
LossResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels);

// v <- momentum*v + (g + decay*theta);  theta <- theta - lr*v
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::vector<ParamSlot>& params, const std::vector<std::vector<double>>& grads,
            double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// lr * (1 - step / total_steps): linear decay that reaches zero after the
// last step.
double linear_decay_lr(double base, std::size_t step, std::size_t total_steps) noexcept;

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;        // rate used by the epoch's last step
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = -1.0;  // -1 when no validation set was given
  std::size_t threads = 1;
  // Mean per-step L2 norm of each parameter array's gradient, keyed
  // "<module>.<param>" (drconv guide weights appear as "<layer>.guide").
  std::vector<std::pair<std::string, double>> grad_norms;

  double grad_norm(const std::string& key) const;
  // One "key=value key=value ..." record.
  std::string to_log_line() const;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  std::vector<EpochMetrics> epochs;
};

// Mini-batch SGD with momentum and a linear-to-zero schedule. Data order is
// shuffled per epoch with a generator seeded from cfg.seed. A non-finite loss
// restores the parameters from the start of the failing epoch and throws
// DivergenceError.
TrainResult train(Model& model, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& cfg, const MetricsSink& sink = {});

std::vector<int> predict(const Model& model, const Tensor4& images, std::size_t batch_size = 64);
// Top-1 accuracy in [0,1].
double evaluate(const Model& model, const Dataset& data, std::size_t batch_size = 64);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace drconv
