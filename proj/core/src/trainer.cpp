#include "drconv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "drconv/errors.hpp"
#include "drconv/parallel.hpp"

namespace drconv {

LossResult softmax_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const Shape4 s = logits.shape();
  if (s.h != 1 || s.w != 1 || s.n != labels.size()) {
    throw ShapeError("softmax_cross_entropy: logits " + s.str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  LossResult r;
  r.dlogits = Tensor4::zeros(s);
  const double inv_n = 1.0 / static_cast<double>(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= s.c) {
      throw IndexError("softmax_cross_entropy: label out of range");
    }
    auto z = logits.pixel(n, 0, 0);
    auto g = r.dlogits.pixel(n, 0, 0);
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) total += std::exp(z[c] - top);
    const double log_total = std::log(total) + top;
    r.loss += (log_total - z[static_cast<std::size_t>(label)]) * inv_n;
    std::size_t best = 0;
    for (std::size_t c = 0; c < s.c; ++c) {
      g[c] = std::exp(z[c] - log_total) * inv_n;
      if (z[c] > z[best]) best = c;
    }
    g[static_cast<std::size_t>(label)] -= inv_n;
    if (best == static_cast<std::size_t>(label)) ++r.correct;
  }
  return r;
}

void SgdMomentum::step(std::vector<ParamSlot>& params,
                       const std::vector<std::vector<double>>& grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("SgdMomentum::step: parameter and gradient counts differ");
  }
  if (velocity_.empty()) {
    for (const ParamSlot& p : params) velocity_.emplace_back(p.values.size(), 0.0);
  }
  if (velocity_.size() != params.size()) {
    throw ContextError("SgdMomentum::step: parameter set changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].values;
    const auto& g = grads[i];
    auto& v = velocity_[i];
    if (g.size() != theta.size() || v.size() != theta.size()) {
      throw ShapeError("SgdMomentum::step: size mismatch for '" + params[i].name + "'");
    }
    const double decay = params[i].decay ? weight_decay_ : 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = momentum_ * v[j] + (g[j] + decay * theta[j]);
      theta[j] -= lr * v[j];
    }
  }
}

double linear_decay_lr(double base, std::size_t step, std::size_t total_steps) noexcept {
  if (total_steps == 0) return base;
  return base * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

double EpochMetrics::grad_norm(const std::string& key) const {
  for (const auto& [k, v] : grad_norms)
    if (k == key) return v;
  throw LookupError("no gradient norm recorded for '" + key + "'");
}

std::string EpochMetrics::to_log_line() const {
  std::ostringstream os;
  os.precision(9);
  os << "epoch=" << epoch << " lr=" << lr << " train_loss=" << train_loss
     << " train_acc=" << train_acc;
  if (val_acc >= 0.0) os << " val_acc=" << val_acc;
  os << " threads=" << threads;
  for (const auto& [k, v] : grad_norms) os << " grad_norm." << k << "=" << v;
  return os.str();
}

namespace {

struct FlatParams {
  std::vector<ParamSlot> slots;
  std::vector<std::string> keys;
};

FlatParams collect(Model& model) {
  FlatParams f;
  for (auto& m : model.modules()) {
    for (ParamSlot& p : m->params()) {
      f.keys.push_back(m->name() + "." + p.name);
      f.slots.push_back(p);
    }
  }
  return f;
}

std::vector<std::vector<double>> snapshot(const FlatParams& f) {
  std::vector<std::vector<double>> s;
  for (const ParamSlot& p : f.slots) s.emplace_back(p.values.begin(), p.values.end());
  return s;
}

void restore(FlatParams& f, const std::vector<std::vector<double>>& s) {
  for (std::size_t i = 0; i < f.slots.size(); ++i)
    std::copy(s[i].begin(), s[i].end(), f.slots[i].values.begin());
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_data, const Dataset* val_data,
                  const TrainConfig& cfg, const MetricsSink& sink) {
  cfg.validate();
  train_data.validate();
  if (train_data.size() == 0) throw ConfigError("data", "training set is empty");
  if (train_data.classes > model.config().classes) {
    throw ConfigError("model.classes", "model has fewer classes than the dataset");
  }
  set_num_threads(cfg.threads);

  FlatParams params = collect(model);
  SgdMomentum opt(cfg.momentum, cfg.weight_decay);
  std::mt19937_64 rng(cfg.seed);

  const std::size_t n = train_data.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto last_good = snapshot(params);
    std::shuffle(order.begin(), order.end(), rng);

    EpochMetrics em;
    em.epoch = epoch;
    em.threads = cfg.threads;
    std::vector<double> norm_sums(params.slots.size(), 0.0);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Dataset batch = train_data.subset(idx);

      Model::Trace trace = model.forward_trace(batch.images);
      LossResult loss = softmax_cross_entropy(trace.logits, batch.labels);
      if (!std::isfinite(loss.loss)) {
        restore(params, last_good);
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + "; parameters restored to epoch start");
      }
      std::vector<ParamGrads> grads = model.backward(trace, loss.dlogits);
      std::vector<std::vector<double>> flat;
      for (auto& g : grads)
        for (auto& v : g) flat.push_back(std::move(v));

      double total_sq = 0.0;
      for (std::size_t i = 0; i < flat.size(); ++i) {
        double sq = 0.0;
        for (double v : flat[i]) sq += v * v;
        norm_sums[i] += std::sqrt(sq);
        total_sq += sq;
      }
      if (cfg.clip_norm > 0.0 && std::sqrt(total_sq) > cfg.clip_norm) {
        const double f = cfg.clip_norm / std::sqrt(total_sq);
        for (auto& g : flat)
          for (double& v : g) v *= f;
      }
      em.lr = linear_decay_lr(cfg.lr, step, total_steps);
      opt.step(params.slots, flat, em.lr);
      loss_sum += loss.loss * static_cast<double>(end - begin);
      correct += loss.correct;
    }

    em.train_loss = loss_sum / static_cast<double>(n);
    em.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    if (val_data != nullptr) em.val_acc = evaluate(model, *val_data);
    for (std::size_t i = 0; i < params.slots.size(); ++i) {
      em.grad_norms.emplace_back(params.keys[i],
                                 norm_sums[i] / static_cast<double>(steps_per_epoch));
    }
    if (sink) sink(em);
    result.epochs.push_back(std::move(em));
  }
  return result;
}

std::vector<int> predict(const Model& model, const Tensor4& images, std::size_t batch_size) {
  const Shape4 s = images.shape();
  const std::size_t stride = s.h * s.w * s.c;
  std::vector<int> out;
  out.reserve(s.n);
  for (std::size_t begin = 0; begin < s.n; begin += batch_size) {
    const std::size_t end = std::min(s.n, begin + batch_size);
    std::vector<double> data(images.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             images.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
    const Tensor4 logits = model.forward(Tensor4({end - begin, s.h, s.w, s.c}, std::move(data)));
    for (std::size_t n = 0; n < end - begin; ++n) {
      auto z = logits.pixel(n, 0, 0);
      out.push_back(static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()));
    }
  }
  return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("accuracy: prediction and label counts differ");
  }
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
  const std::vector<int> pred = predict(model, data.images, batch_size);
  return accuracy(pred, data.labels);
}

}  // namespace drconv
