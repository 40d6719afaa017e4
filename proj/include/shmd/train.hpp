#pragma once

// MSE loss, Adam updates, the mini-batch training loop with early stopping
// on validation loss, and best-epoch parameter restoration.

#include <chrono>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "shmd/checkpoint.hpp"
#include "shmd/dataprep.hpp"
#include "shmd/errors.hpp"
#include "shmd/layers.hpp"
#include "shmd/tensor.hpp"

namespace shmd {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  double min_delta = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("train.beta1: must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.beta2: must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("train.epsilon: must be positive");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be at least 1");
    if (max_epochs < 1) throw ConfigError("train.max_epochs: must be at least 1");
    if (patience < 1) throw ConfigError("train.patience: must be at least 1");
    if (!(min_delta >= 0.0)) throw ConfigError("train.min_delta: must be non-negative");
  }
};

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse: prediction shape " + shape_str(pred.shape()) +
                     " does not match target shape " + shape_str(target.shape()));
  Tensor diff = sub(pred, target);
  return mean(mul(diff, diff));
}

// First/second moment estimates per parameter plus the shared step count.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;

  explicit AdamState(const std::vector<NamedParam>& params) {
    for (const NamedParam& p : params) {
      m.emplace_back(p.tensor.numel(), 0.0);
      v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
};

// One Adam update from the gradients accumulated on the parameters:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// A non-finite gradient aborts before anything is touched.
inline void adam_step(std::vector<NamedParam>& params, AdamState& state,
                      const TrainConfig& cfg) {
  if (params.size() != state.m.size())
    throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const NamedParam& p : params) {
    grads.push_back(p.tensor.grad());
    for (double g : grads.back())
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in parameter " + p.name);
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& theta = params[p].tensor.value();
    const auto& g = grads[p];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      state.m[p][i] = cfg.beta1 * state.m[p][i] + (1.0 - cfg.beta1) * g[i];
      state.v[p][i] = cfg.beta2 * state.v[p][i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = state.m[p][i] / bc1;
      const double v_hat = state.v[p][i] / bc2;
      theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// Tolerates `patience` consecutive epochs without an improvement greater
// than min_delta; the epoch after that triggers the stop, so
// stopped_epoch - best_epoch == patience + 1 on an early stop.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta)
      : patience_(patience), min_delta_(min_delta) {}

  // Returns true when training should stop after the observed epoch.
  bool observe(double val_loss) {
    if (best_loss_ - val_loss > min_delta_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      bad_streak_ = 0;
    } else {
      ++bad_streak_;
    }
    ++epoch_;
    return bad_streak_ > patience_;
  }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  bool improved_last() const { return bad_streak_ == 0; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t bad_streak_ = 0;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  std::string stop_reason;  // "early" | "max_epochs"
  double best_val_loss = std::numeric_limits<double>::infinity();
  double wall_time_s = 0.0;
};

// Divergence carries whatever the loop recorded before the blow-up.
struct TrainDivergence : NumericError {
  TrainDivergence(const std::string& what, TrainReport partial_report)
      : NumericError(what), partial(std::move(partial_report)) {}
  TrainReport partial;
};

namespace detail {

inline Tensor gather_rows(const std::vector<double>& flat, std::size_t width,
                          const std::vector<std::size_t>& order, std::size_t first,
                          std::size_t count) {
  std::vector<double> out(count * width);
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(&flat[order[first + i] * width], width, &out[i * width]);
  return Tensor::from({count, width}, std::move(out));
}

}  // namespace detail

// Mean squared error of the network over a window set, batched, no
// gradient recording.
inline double evaluate_mse(const Network& net, const WindowSet& ws, std::size_t batch_size) {
  double sse = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> order(ws.count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t first = 0; first < ws.count; first += batch_size) {
    const std::size_t count = std::min(batch_size, ws.count - first);
    Tensor in = detail::gather_rows(ws.inputs, ws.input_width(), order, first, count);
    Tensor tg = detail::gather_rows(ws.targets, ws.target_width(), order, first, count);
    Tensor pred = net.forward(in).prediction;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double d = pred.value()[i] - tg.value()[i];
      sse += d * d;
    }
    n += pred.numel();
  }
  return sse / static_cast<double>(n);
}

struct FitResult {
  Checkpoint checkpoint;  // best-epoch parameters
  TrainReport report;
};

// Full training loop: seeded shuffling each epoch, one Adam step per
// mini-batch (last partial batch kept), validation MSE per epoch, early
// stopping, restore-best into the returned checkpoint.
inline FitResult fit(const WindowSet& train_ws, const WindowSet& val_ws, const TrainConfig& cfg,
                     const NetworkConfig& net_cfg,
                     const std::array<double, 3>& splits = {0.7, 0.15, 0.15}) {
  cfg.validate();
  net_cfg.validate();
  if (train_ws.count == 0 || val_ws.count == 0)
    throw ConfigError("fit: train and validation window sets must be non-empty");
  if (train_ws.input_width() != net_cfg.window * net_cfg.channels)
    throw ShapeError("fit: window set provides " + std::to_string(train_ws.input_width()) +
                     " inputs per row, network expects " +
                     std::to_string(net_cfg.window * net_cfg.channels));
  if (train_ws.target_width() != net_cfg.output_width())
    throw ShapeError("fit: window set provides " + std::to_string(train_ws.target_width()) +
                     " targets per row, network outputs " +
                     std::to_string(net_cfg.output_width()));

  const auto t0 = std::chrono::steady_clock::now();
  Network net(net_cfg);
  net.init_params(cfg.seed);
  std::vector<NamedParam> params = net.parameters();
  AdamState adam(params);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  EarlyStopping stopper(cfg.patience, cfg.min_delta);
  TrainReport report;
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (const NamedParam& p : params) best_values.push_back(p.tensor.value());
  };

  std::vector<std::size_t> order(train_ws.count);
  std::iota(order.begin(), order.end(), 0);

  report.stop_reason = "max_epochs";
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double train_sse = 0.0;
    std::size_t train_n = 0;
    try {
      for (std::size_t first = 0; first < train_ws.count; first += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, train_ws.count - first);
        Tensor in = detail::gather_rows(train_ws.inputs, train_ws.input_width(), order, first,
                                        count);
        Tensor tg = detail::gather_rows(train_ws.targets, train_ws.target_width(), order, first,
                                        count);
        Graph graph;
        Tensor loss = mse_loss(net.forward(in).prediction, tg);
        for (NamedParam& p : params) p.tensor.zero_grad();
        graph.backward(loss);
        adam_step(params, adam, cfg);
        train_sse += loss.item() * static_cast<double>(count * train_ws.target_width());
        train_n += count * train_ws.target_width();
      }
      report.train_loss.push_back(train_sse / static_cast<double>(train_n));
      report.val_loss.push_back(evaluate_mse(net, val_ws, cfg.batch_size));
    } catch (const NumericError& e) {
      report.stopped_epoch = epoch;
      report.stop_reason = "diverged";
      throw TrainDivergence("fit: diverged at epoch " + std::to_string(epoch) + ": " + e.what(),
                            report);
    }
    report.stopped_epoch = epoch;
    const bool stop = stopper.observe(report.val_loss.back());
    if (stopper.improved_last()) snapshot();
    if (stop) {
      report.stop_reason = "early";
      break;
    }
  }
  report.best_epoch = stopper.best_epoch();
  report.best_val_loss = stopper.best_loss();
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  FitResult result;
  result.report = report;
  result.checkpoint.net = net_cfg;
  result.checkpoint.norm = train_ws.norm;
  result.checkpoint.data.window = train_ws.window;
  result.checkpoint.data.horizon = train_ws.horizon;
  result.checkpoint.data.stride = train_ws.stride;
  result.checkpoint.data.task = train_ws.task;
  result.checkpoint.data.splits = splits;
  result.checkpoint.data.target_channels = train_ws.target_channels;
  for (std::size_t i = 0; i < params.size(); ++i)
    result.checkpoint.params.push_back(
        {params[i].name, Tensor::from(params[i].tensor.shape(), best_values[i])});
  return result;
}

}  // namespace shmd
