#pragma once

// Min-max normalization fitted on the training interval only,
// chronological splitting, and sliding-window supervision pairs for the
// forecast and denoise tasks.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shmd/errors.hpp"
#include "shmd/signal.hpp"

namespace shmd {

struct IndexInterval {
  std::size_t begin = 0;
  std::size_t end = 0;  // half-open [begin, end)
  std::size_t size() const { return end - begin; }
  bool contains(const IndexInterval& other) const {
    return begin <= other.begin && other.end <= end;
  }
};

enum class Task { forecast, denoise };

inline std::string to_string(Task t) { return t == Task::forecast ? "forecast" : "denoise"; }

inline Task task_from_string(const std::string& s) {
  if (s == "forecast") return Task::forecast;
  if (s == "denoise") return Task::denoise;
  throw ConfigError("data.task: expected \"forecast\" or \"denoise\", got \"" + s + "\"");
}

// Per-channel min/max of the fitting interval. Degenerate (constant)
// channels are flagged and map to 0.
struct NormState {
  std::vector<double> min, max;
  std::vector<bool> degenerate;
  std::string fitted_on;

  std::size_t channels() const { return min.size(); }

  double apply(std::size_t c, double x) const {
    if (degenerate[c]) return 0.0;
    return (x - min[c]) / (max[c] - min[c]);
  }
  double invert(std::size_t c, double y) const { return min[c] + y * (max[c] - min[c]); }
};

inline NormState fit_normalizer(const TimeSeries& series, const IndexInterval& range) {
  if (range.size() == 0) throw ConfigError("fit_normalizer: empty interval");
  if (range.end > series.samples)
    throw ConfigError("fit_normalizer: interval [" + std::to_string(range.begin) + ", " +
                      std::to_string(range.end) + ") exceeds series length " +
                      std::to_string(series.samples));
  NormState norm;
  norm.min.resize(series.channels);
  norm.max.resize(series.channels);
  norm.degenerate.resize(series.channels);
  for (std::size_t c = 0; c < series.channels; ++c) {
    double lo = series.at(c, range.begin), hi = lo;
    for (std::size_t t = range.begin; t < range.end; ++t) {
      lo = std::min(lo, series.at(c, t));
      hi = std::max(hi, series.at(c, t));
    }
    norm.min[c] = lo;
    norm.max[c] = hi;
    norm.degenerate[c] = (lo == hi);
  }
  norm.fitted_on =
      "[" + std::to_string(range.begin) + ", " + std::to_string(range.end) + ")";
  return norm;
}

namespace detail {

inline void check_norm_channels(const TimeSeries& series, const NormState& norm,
                                const char* op) {
  if (series.channels != norm.channels())
    throw ShapeError(std::string(op) + ": series has " + std::to_string(series.channels) +
                     " channels, normalizer was fitted on " + std::to_string(norm.channels()));
}

}  // namespace detail

// y = (x - min) / (max - min); values outside the fitted range are allowed
// to leave [0, 1] so the map stays invertible.
inline TimeSeries normalize(const TimeSeries& series, const NormState& norm) {
  detail::check_norm_channels(series, norm, "normalize");
  TimeSeries out = series;
  for (std::size_t c = 0; c < series.channels; ++c)
    for (std::size_t t = 0; t < series.samples; ++t) out.at(c, t) = norm.apply(c, series.at(c, t));
  return out;
}

inline TimeSeries denormalize(const TimeSeries& series, const NormState& norm) {
  detail::check_norm_channels(series, norm, "denormalize");
  TimeSeries out = series;
  for (std::size_t c = 0; c < series.channels; ++c)
    for (std::size_t t = 0; t < series.samples; ++t)
      out.at(c, t) = norm.invert(c, series.at(c, t));
  return out;
}

// Supervised pairs. Inputs are N x (W*C) rows in (w, c) layout; targets are
// N x (H*Ct) rows in (h, ct) layout. Everything stored normalized.
struct WindowSet {
  std::vector<double> inputs;
  std::vector<double> targets;
  std::vector<std::size_t> starts;
  std::size_t count = 0;
  std::size_t window = 0;
  std::size_t channels = 0;
  std::size_t horizon = 0;
  std::vector<std::size_t> target_channels;
  Task task = Task::forecast;
  std::size_t stride = 1;
  NormState norm;

  std::size_t input_width() const { return window * channels; }
  std::size_t target_width() const { return horizon * target_channels.size(); }
  const double* input_row(std::size_t i) const { return &inputs[i * input_width()]; }
  const double* target_row(std::size_t i) const { return &targets[i * target_width()]; }
};

// Forecast: targets are the H samples right after each window, taken from
// the (noisy) input series. Denoise: targets are the clean values at the
// last H positions of the window, so the model never sees the future.
inline WindowSet make_windows(const TimeSeries& series, const TimeSeries* clean, std::size_t W,
                              std::size_t H, std::size_t stride, Task task,
                              std::vector<std::size_t> target_channels, const NormState& norm,
                              const IndexInterval& range) {
  if (W == 0) throw ConfigError("data.window: must be positive");
  if (H == 0) throw ConfigError("data.horizon: must be positive");
  if (stride == 0) throw ConfigError("data.stride: must be positive");
  if (task == Task::denoise) {
    if (!clean) throw ConfigError("make_windows: denoise task needs a clean reference");
    if (clean->channels != series.channels || clean->samples != series.samples)
      throw ShapeError("make_windows: clean reference shape (" +
                       std::to_string(clean->channels) + " x " + std::to_string(clean->samples) +
                       ") does not match series (" + std::to_string(series.channels) + " x " +
                       std::to_string(series.samples) + ")");
    if (H > W) throw ConfigError("data.horizon: denoise targets must fit inside the window");
  }
  detail::check_norm_channels(series, norm, "make_windows");
  if (range.end > series.samples || range.begin >= range.end)
    throw ConfigError("make_windows: invalid sample interval");
  if (target_channels.empty())
    for (std::size_t c = 0; c < series.channels; ++c) target_channels.push_back(c);
  for (std::size_t c : target_channels)
    if (c >= series.channels)
      throw ConfigError("data.target_channels: index " + std::to_string(c) +
                        " out of range for " + std::to_string(series.channels) + " channels");

  const std::size_t T = range.size();
  const std::size_t needed = (task == Task::forecast) ? W + H : W;
  if (T < needed)
    throw ConfigError("make_windows: interval of " + std::to_string(T) +
                      " samples is too short for window " + std::to_string(W) + " and horizon " +
                      std::to_string(H));

  WindowSet ws;
  ws.count = (T - needed) / stride + 1;
  ws.window = W;
  ws.channels = series.channels;
  ws.horizon = H;
  ws.target_channels = std::move(target_channels);
  ws.task = task;
  ws.stride = stride;
  ws.norm = norm;
  ws.inputs.resize(ws.count * ws.input_width());
  ws.targets.resize(ws.count * ws.target_width());
  ws.starts.resize(ws.count);

  const std::size_t C = series.channels, Ct = ws.target_channels.size();
  for (std::size_t i = 0; i < ws.count; ++i) {
    const std::size_t s = range.begin + i * stride;
    ws.starts[i] = s;
    double* in = &ws.inputs[i * ws.input_width()];
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) in[w * C + c] = norm.apply(c, series.at(c, s + w));
    double* tgt = &ws.targets[i * ws.target_width()];
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t k = 0; k < Ct; ++k) {
        const std::size_t c = ws.target_channels[k];
        const double raw = (task == Task::forecast) ? series.at(c, s + W + h)
                                                    : clean->at(c, s + W - H + h);
        tgt[h * Ct + k] = norm.apply(c, raw);
      }
  }
  return ws;
}

inline WindowSet make_windows(const TimeSeries& series, const TimeSeries* clean, std::size_t W,
                              std::size_t H, std::size_t stride, Task task,
                              std::vector<std::size_t> target_channels, const NormState& norm) {
  return make_windows(series, clean, W, H, stride, task, std::move(target_channels), norm,
                      IndexInterval{0, series.samples});
}

// Contiguous, ordered train/val/test intervals covering [0, T). Each split
// must hold at least `min_split_len` samples (callers pass the smallest
// usable length, W+H for forecast windows).
inline std::array<IndexInterval, 3> split_chronological(std::size_t total,
                                                        const std::array<double, 3>& fractions,
                                                        std::size_t min_split_len = 1) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("data.splits: fractions must be positive");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("data.splits: fractions sum to " + std::to_string(sum) + ", expected 1");
  const auto a = static_cast<std::size_t>(std::llround(static_cast<double>(total) * fractions[0]));
  const auto b = static_cast<std::size_t>(
      std::llround(static_cast<double>(total) * (fractions[0] + fractions[1])));
  std::array<IndexInterval, 3> splits{IndexInterval{0, a}, IndexInterval{a, b},
                                      IndexInterval{b, total}};
  static constexpr const char* kNames[3] = {"train", "validation", "test"};
  for (std::size_t i = 0; i < 3; ++i)
    if (splits[i].size() < std::max<std::size_t>(min_split_len, 1))
      throw ConfigError(std::string("data.splits: ") + kNames[i] + " split has " +
                        std::to_string(splits[i].size()) + " samples, need at least " +
                        std::to_string(std::max<std::size_t>(min_split_len, 1)));
  return splits;
}

}  // namespace shmd
