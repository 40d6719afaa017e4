#pragma once

// Test-split metrics in denormalized (physical) units, denoising gain
// against the clean reference, naive baselines, and attention export.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shmd/checkpoint.hpp"
#include "shmd/dataprep.hpp"
#include "shmd/errors.hpp"
#include "shmd/train.hpp"

namespace shmd {

inline double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw ShapeError("rmse: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  if (pred.empty()) throw ConfigError("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw ShapeError("mae: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(target.size()) + " targets");
  if (pred.empty()) throw ConfigError("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

struct ChannelMetrics {
  std::size_t channel = 0;
  double rmse = 0.0;
  double mae = 0.0;
};

struct DenoisingMetrics {
  double input_rmse_to_clean = 0.0;
  double output_rmse_to_clean = 0.0;
  double gain_ratio = 1.0;  // 1 by convention when there is nothing to denoise
};

struct BaselineMetrics {
  double persistence_rmse = 0.0;
  double persistence_mae = 0.0;
  double moving_average_rmse = 0.0;
  double moving_average_mae = 0.0;
};

struct MetricsReport {
  std::string task;
  double rmse = 0.0;
  double mae = 0.0;
  std::vector<ChannelMetrics> per_channel;
  std::optional<DenoisingMetrics> denoising;
  BaselineMetrics baselines;
  std::size_t samples = 0;  // evaluated windows

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const ChannelMetrics& c : per_channel)
      per.push_back({{"channel", c.channel}, {"rmse", c.rmse}, {"mae", c.mae}});
    nlohmann::json j = {{"task", task},
                        {"rmse", rmse},
                        {"mae", mae},
                        {"per_channel", per},
                        {"baselines",
                         {{"persistence", {{"rmse", baselines.persistence_rmse},
                                           {"mae", baselines.persistence_mae}}},
                          {"moving_average", {{"rmse", baselines.moving_average_rmse},
                                              {"mae", baselines.moving_average_mae}}}}},
                        {"samples", samples}};
    if (denoising)
      j["denoising"] = {{"input_rmse_to_clean", denoising->input_rmse_to_clean},
                        {"output_rmse_to_clean", denoising->output_rmse_to_clean},
                        {"gain_ratio", denoising->gain_ratio}};
    else
      j["denoising"] = nullptr;
    return j;
  }
};

constexpr std::size_t kMovingAverageWidth = 5;

namespace detail {

struct ErrorAccumulator {
  double sq = 0.0, abs = 0.0;
  std::size_t n = 0;
  void add(double pred, double target) {
    const double d = pred - target;
    sq += d * d;
    abs += std::fabs(d);
    ++n;
  }
  double rmse() const { return std::sqrt(sq / static_cast<double>(n)); }
  double mae() const { return abs / static_cast<double>(n); }
};

// Baseline predictions for one window, in normalized units, (h, k) layout.
// Persistence repeats the last observation (forecast) or copies the noisy
// input (denoise); the moving average smooths with a centered width-5
// kernel, truncated at the window edges.
inline void baseline_predictions(const WindowSet& ws, std::size_t i, std::vector<double>& persist,
                                 std::vector<double>& moving) {
  const std::size_t W = ws.window, H = ws.horizon, C = ws.channels;
  const std::size_t Ct = ws.target_channels.size();
  const double* in = ws.input_row(i);
  persist.resize(H * Ct);
  moving.resize(H * Ct);
  const std::size_t half = kMovingAverageWidth / 2;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t k = 0; k < Ct; ++k) {
      const std::size_t c = ws.target_channels[k];
      if (ws.task == Task::forecast) {
        persist[h * Ct + k] = in[(W - 1) * C + c];
        const std::size_t span = std::min<std::size_t>(kMovingAverageWidth, W);
        double acc = 0.0;
        for (std::size_t w = W - span; w < W; ++w) acc += in[w * C + c];
        moving[h * Ct + k] = acc / static_cast<double>(span);
      } else {
        const std::size_t p = W - H + h;
        persist[h * Ct + k] = in[p * C + c];
        const std::size_t lo = (p >= half) ? p - half : 0;
        const std::size_t hi = std::min(W - 1, p + half);
        double acc = 0.0;
        for (std::size_t w = lo; w <= hi; ++w) acc += in[w * C + c];
        moving[h * Ct + k] = acc / static_cast<double>(hi - lo + 1);
      }
    }
}

}  // namespace detail

// Baseline metrics alone, in denormalized units.
inline BaselineMetrics baselines(const WindowSet& ws) {
  if (ws.count == 0) throw ConfigError("baselines: empty window set");
  detail::ErrorAccumulator persist, moving;
  std::vector<double> p, m;
  const std::size_t Ct = ws.target_channels.size();
  for (std::size_t i = 0; i < ws.count; ++i) {
    detail::baseline_predictions(ws, i, p, m);
    const double* tgt = ws.target_row(i);
    for (std::size_t h = 0; h < ws.horizon; ++h)
      for (std::size_t k = 0; k < Ct; ++k) {
        const std::size_t c = ws.target_channels[k];
        const double t = ws.norm.invert(c, tgt[h * Ct + k]);
        persist.add(ws.norm.invert(c, p[h * Ct + k]), t);
        moving.add(ws.norm.invert(c, m[h * Ct + k]), t);
      }
  }
  return {persist.rmse(), persist.mae(), moving.rmse(), moving.mae()};
}

namespace detail {

inline void check_compatible(const Checkpoint& ckpt, const WindowSet& ws) {
  if (ckpt.net.window != ws.window || ckpt.net.channels != ws.channels ||
      ckpt.net.horizon != ws.horizon || ckpt.net.target_count != ws.target_channels.size())
    throw ShapeError("evaluate: checkpoint expects window " + std::to_string(ckpt.net.window) +
                     " x " + std::to_string(ckpt.net.channels) + " -> " +
                     std::to_string(ckpt.net.horizon) + " x " +
                     std::to_string(ckpt.net.target_count) + ", window set provides " +
                     std::to_string(ws.window) + " x " + std::to_string(ws.channels) + " -> " +
                     std::to_string(ws.horizon) + " x " +
                     std::to_string(ws.target_channels.size()));
  if (ws.norm.channels() != ws.channels)
    throw ShapeError("evaluate: normalizer covers " + std::to_string(ws.norm.channels()) +
                     " channels, window set has " + std::to_string(ws.channels));
}

}  // namespace detail

// Runs the network over every window, denormalizes, and reports metrics
// plus baselines; for the denoise task also the gain against the clean
// targets.
inline MetricsReport evaluate(const Checkpoint& ckpt, const WindowSet& ws,
                              std::size_t batch_size = 64) {
  if (ws.count == 0) throw ConfigError("evaluate: empty window set");
  detail::check_compatible(ckpt, ws);
  Network net = ckpt.to_network();

  const std::size_t Ct = ws.target_channels.size();
  detail::ErrorAccumulator total, input_vs_clean;
  std::vector<detail::ErrorAccumulator> per_channel(Ct);

  std::vector<std::size_t> order(ws.count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t first = 0; first < ws.count; first += batch_size) {
    const std::size_t count = std::min(batch_size, ws.count - first);
    Tensor in = detail::gather_rows(ws.inputs, ws.input_width(), order, first, count);
    Tensor pred = net.forward(in).prediction;
    for (std::size_t b = 0; b < count; ++b) {
      const std::size_t i = first + b;
      const double* tgt = ws.target_row(i);
      const double* inp = ws.input_row(i);
      for (std::size_t h = 0; h < ws.horizon; ++h)
        for (std::size_t k = 0; k < Ct; ++k) {
          const std::size_t c = ws.target_channels[k];
          const double y = ws.norm.invert(c, pred.value()[b * ws.target_width() + h * Ct + k]);
          const double t = ws.norm.invert(c, tgt[h * Ct + k]);
          total.add(y, t);
          per_channel[k].add(y, t);
          if (ws.task == Task::denoise) {
            const std::size_t p = ws.window - ws.horizon + h;
            input_vs_clean.add(ws.norm.invert(c, inp[p * ws.channels + c]), t);
          }
        }
    }
  }

  MetricsReport report;
  report.task = to_string(ws.task);
  report.rmse = total.rmse();
  report.mae = total.mae();
  for (std::size_t k = 0; k < Ct; ++k)
    report.per_channel.push_back(
        {ws.target_channels[k], per_channel[k].rmse(), per_channel[k].mae()});
  report.samples = ws.count;
  report.baselines = baselines(ws);
  if (ws.task == Task::denoise) {
    DenoisingMetrics d;
    d.input_rmse_to_clean = input_vs_clean.rmse();
    d.output_rmse_to_clean = report.rmse;
    d.gain_ratio =
        d.input_rmse_to_clean == 0.0 ? 1.0 : d.output_rmse_to_clean / d.input_rmse_to_clean;
    report.denoising = d;
  }
  return report;
}

// Per-window attention rows: window start sample index plus the L weights.
struct AttentionDump {
  std::size_t steps = 0;  // L
  std::vector<std::size_t> starts;
  std::vector<std::vector<double>> weights;
};

inline AttentionDump collect_attention(const Checkpoint& ckpt, const WindowSet& ws,
                                       std::size_t batch_size = 64) {
  if (!ckpt.net.attention) throw ConfigError("attention: attention disabled in this checkpoint");
  if (ws.count == 0) throw ConfigError("attention: empty window set");
  detail::check_compatible(ckpt, ws);
  Network net = ckpt.to_network();

  AttentionDump dump;
  dump.steps = ckpt.net.sequence_length();
  std::vector<std::size_t> order(ws.count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t first = 0; first < ws.count; first += batch_size) {
    const std::size_t count = std::min(batch_size, ws.count - first);
    Tensor in = detail::gather_rows(ws.inputs, ws.input_width(), order, first, count);
    Tensor alpha = net.forward(in).attention_weights;
    for (std::size_t b = 0; b < count; ++b) {
      std::vector<double> row(alpha.value().begin() + b * dump.steps,
                              alpha.value().begin() + (b + 1) * dump.steps);
      double sum = 0.0;
      for (double a : row) {
        if (a < 0.0 || a > 1.0)
          throw NumericError("attention: weight outside [0, 1] in window " +
                             std::to_string(first + b));
        sum += a;
      }
      if (std::fabs(sum - 1.0) > 1e-6)
        throw NumericError("attention: weights of window " + std::to_string(first + b) +
                           " sum to " + std::to_string(sum));
      dump.starts.push_back(ws.starts[first + b]);
      dump.weights.push_back(std::move(row));
    }
  }
  return dump;
}

// CSV with header `window_start,w_0,...,w_{L-1}`.
inline void export_attention(const Checkpoint& ckpt, const WindowSet& ws,
                             const std::filesystem::path& path) {
  AttentionDump dump = collect_attention(ckpt, ws);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("attention: cannot open for writing: " + path.string());
  out << "window_start";
  for (std::size_t t = 0; t < dump.steps; ++t) out << ",w_" << t;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < dump.starts.size(); ++i) {
    out << dump.starts[i];
    for (double a : dump.weights[i]) {
      std::snprintf(buf, sizeof(buf), "%.17g", a);
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("attention: write failed: " + path.string());
}

}  // namespace shmd
