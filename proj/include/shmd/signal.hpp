#pragma once

// Synthetic multi-sensor vibration records: damped-sinusoid modal
// superposition, three noise classes (instrumental / environmental /
// operational) with optional SNR targeting, and CSV ingestion.

#include <cmath>
#include <cstdint>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shmd/errors.hpp"

namespace shmd {

struct Mode {
  double frequency_hz = 1.0;
  double damping_ratio = 0.0;  // zeta, fraction of critical damping
  double amplitude = 1.0;
  double phase_rad = 0.0;
  std::vector<double> shape;  // per-channel coefficient, one entry per sensor
};

struct ModalSignalSpec {
  std::vector<Mode> modes;
  double sample_rate_hz = 256.0;
  double duration_s = 1.0;
  std::size_t channels = 1;
  std::uint64_t seed = 0;

  std::size_t sample_count() const {
    return static_cast<std::size_t>(std::llround(sample_rate_hz * duration_s));
  }

  void validate() const {
    if (!(sample_rate_hz > 0.0)) throw ConfigError("signal.sample_rate_hz: must be positive");
    if (!(duration_s > 0.0)) throw ConfigError("signal.duration_s: must be positive");
    if (channels < 1) throw ConfigError("signal.channels: must be at least 1");
    if (sample_count() < 2) throw ConfigError("signal.duration_s: fewer than 2 samples");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const Mode& m = modes[i];
      const std::string where = "signal.modes[" + std::to_string(i) + "]";
      if (!(m.frequency_hz > 0.0))
        throw ConfigError(where + ".frequency_hz: must be positive");
      if (m.frequency_hz >= sample_rate_hz / 2.0)
        throw ConfigError(where + ".frequency_hz: " + std::to_string(m.frequency_hz) +
                          " Hz is at or above the Nyquist frequency " +
                          std::to_string(sample_rate_hz / 2.0) + " Hz");
      if (!(m.damping_ratio >= 0.0 && m.damping_ratio < 1.0))
        throw ConfigError(where + ".damping_ratio: must lie in [0, 1)");
      if (!(m.amplitude >= 0.0)) throw ConfigError(where + ".amplitude: must be non-negative");
      if (!std::isfinite(m.phase_rad)) throw ConfigError(where + ".phase_rad: must be finite");
      if (m.shape.size() != channels)
        throw ConfigError(where + ".shape: has " + std::to_string(m.shape.size()) +
                          " entries for a " + std::to_string(channels) + "-channel spec");
    }
  }
};

struct ToneSpec {
  double frequency_hz = 0.0;
  double amplitude = 0.0;
  double phase_rad = 0.0;
};

struct NoiseSpec {
  double instrumental_sigma = 0.0;           // iid Gaussian std dev per channel
  std::optional<ToneSpec> env_interference;  // narrowband environmental tone
  double env_drift_scale = 0.0;              // random-walk step std dev per sample
  double op_burst_rate_hz = 0.0;             // mean arrival rate of transient bursts
  double op_burst_amplitude = 0.0;
  double op_burst_decay_s = 0.1;
  std::optional<double> target_snr_db;       // rescale combined noise to hit this SNR

  void validate() const {
    if (!(instrumental_sigma >= 0.0))
      throw ConfigError("noise.instrumental_sigma: must be non-negative");
    if (env_interference && !(env_interference->amplitude >= 0.0))
      throw ConfigError("noise.env_interference.amplitude: must be non-negative");
    if (!(env_drift_scale >= 0.0))
      throw ConfigError("noise.env_drift_scale: must be non-negative");
    if (!(op_burst_rate_hz >= 0.0))
      throw ConfigError("noise.op_burst_rate_hz: must be non-negative");
    if (!(op_burst_amplitude >= 0.0))
      throw ConfigError("noise.op_burst_amplitude: must be non-negative");
    if (!(op_burst_decay_s > 0.0))
      throw ConfigError("noise.op_burst_decay_s: must be positive");
    if (target_snr_db && !std::isfinite(*target_snr_db))
      throw ConfigError("noise.target_snr_db: must be finite");
  }

  bool any_noise() const {
    return instrumental_sigma > 0.0 || (env_interference && env_interference->amplitude > 0.0) ||
           env_drift_scale > 0.0 || (op_burst_rate_hz > 0.0 && op_burst_amplitude > 0.0);
  }
};

// Multi-channel sampled record, row per channel.
struct TimeSeries {
  std::vector<double> values;  // channels x samples, row-major
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  std::vector<std::string> channel_names;

  double& at(std::size_t c, std::size_t t) { return values[c * samples + t]; }
  double at(std::size_t c, std::size_t t) const { return values[c * samples + t]; }

  static TimeSeries zeros(std::size_t channels, std::size_t samples, double fs) {
    TimeSeries ts;
    ts.channels = channels;
    ts.samples = samples;
    ts.sample_rate_hz = fs;
    ts.values.assign(channels * samples, 0.0);
    ts.channel_names.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) ts.channel_names[c] = "s" + std::to_string(c + 1);
    return ts;
  }

  void validate() const {
    if (channels < 1 || samples < 2)
      throw ConfigError("time series: needs at least 1 channel and 2 samples");
    if (values.size() != channels * samples)
      throw ConfigError("time series: value buffer does not match dimensions");
    if (channel_names.size() != channels)
      throw ConfigError("time series: channel name count mismatch");
    std::set<std::string> unique(channel_names.begin(), channel_names.end());
    if (unique.size() != channels) throw ConfigError("time series: channel names not unique");
    for (double v : values)
      if (!std::isfinite(v)) throw NumericError("time series: contains non-finite values");
  }
};

inline double mean_power(const TimeSeries& ts) {
  double p = 0.0;
  for (double v : ts.values) p += v * v;
  return p / static_cast<double>(ts.values.size());
}

// 10*log10(P_clean / P_noise) with noise taken as (noisy - clean).
inline double measured_snr_db(const TimeSeries& clean, const TimeSeries& noisy) {
  double pc = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.values.size(); ++i) {
    const double d = noisy.values[i] - clean.values[i];
    pc += clean.values[i] * clean.values[i];
    pn += d * d;
  }
  return 10.0 * std::log10(pc / pn);
}

// Deterministic modal superposition:
//   x_c(t) = sum_m shape[c] * A * exp(-2*pi*f*zeta*t) * sin(2*pi*f*sqrt(1 - zeta^2)*t + theta)
inline TimeSeries synthesize_clean(const ModalSignalSpec& spec) {
  spec.validate();
  const std::size_t T = spec.sample_count();
  TimeSeries out = TimeSeries::zeros(spec.channels, T, spec.sample_rate_hz);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const Mode& m : spec.modes) {
    const double decay = two_pi * m.frequency_hz * m.damping_ratio;
    const double omega_d = two_pi * m.frequency_hz * std::sqrt(1.0 - m.damping_ratio * m.damping_ratio);
    for (std::size_t n = 0; n < T; ++n) {
      const double t = static_cast<double>(n) / spec.sample_rate_hz;
      const double base = m.amplitude * std::exp(-decay * t) * std::sin(omega_d * t + m.phase_rad);
      for (std::size_t c = 0; c < spec.channels; ++c) out.at(c, n) += m.shape[c] * base;
    }
  }
  out.validate();
  return out;
}

// Adds the three noise classes on top of `clean`. The seed fully
// determines the draw sequence: instrumental per channel, drift per
// channel, then burst arrivals.
inline TimeSeries add_noise(const TimeSeries& clean, const NoiseSpec& noise, std::uint64_t seed) {
  clean.validate();
  noise.validate();
  const std::size_t C = clean.channels, T = clean.samples;
  const double fs = clean.sample_rate_hz;
  std::vector<double> n(C * T, 0.0);
  std::mt19937_64 rng(seed);

  if (noise.instrumental_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, noise.instrumental_sigma);
    for (double& v : n) v += gauss(rng);
  }

  if (noise.env_interference && noise.env_interference->amplitude > 0.0) {
    const ToneSpec& tone = *noise.env_interference;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t t = 0; t < T; ++t) {
      const double v =
          tone.amplitude * std::sin(two_pi * tone.frequency_hz * (static_cast<double>(t) / fs) +
                                    tone.phase_rad);
      for (std::size_t c = 0; c < C; ++c) n[c * T + t] += v;
    }
  }

  if (noise.env_drift_scale > 0.0) {
    std::normal_distribution<double> step(0.0, noise.env_drift_scale);
    for (std::size_t c = 0; c < C; ++c) {
      double level = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        level += step(rng);
        n[c * T + t] += level;
      }
    }
  }

  if (noise.op_burst_rate_hz > 0.0 && noise.op_burst_amplitude > 0.0) {
    // Poisson arrivals shared by all channels: one physical load event.
    std::exponential_distribution<double> gap(noise.op_burst_rate_hz);
    std::uniform_int_distribution<int> sign(0, 1);
    double arrival = gap(rng);
    const double duration = static_cast<double>(T) / fs;
    while (arrival < duration) {
      const double a = (sign(rng) ? 1.0 : -1.0) * noise.op_burst_amplitude;
      const std::size_t first = static_cast<std::size_t>(std::ceil(arrival * fs));
      for (std::size_t t = first; t < T; ++t) {
        const double dt = static_cast<double>(t) / fs - arrival;
        const double v = a * std::exp(-dt / noise.op_burst_decay_s);
        if (std::fabs(v) < 1e-12 * std::fabs(a)) break;
        for (std::size_t c = 0; c < C; ++c) n[c * T + t] += v;
      }
      arrival += gap(rng);
    }
  }

  if (noise.target_snr_db) {
    double pc = 0.0, pn = 0.0;
    for (double v : clean.values) pc += v * v;
    for (double v : n) pn += v * v;
    if (pc == 0.0)
      throw ConfigError("noise.target_snr_db: clean signal power is zero, SNR undefined");
    if (pn == 0.0)
      throw ConfigError("noise.target_snr_db: no noise configured, cannot rescale");
    const double want = pc / std::pow(10.0, *noise.target_snr_db / 10.0);
    const double scale = std::sqrt(want / pn);
    for (double& v : n) v *= scale;
  }

  TimeSeries out = clean;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += n[i];
  out.validate();
  return out;
}

namespace detail {

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end != begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw IoError("csv: non-numeric cell at row " + std::to_string(row) + ", column " +
                  std::to_string(col));
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

// CSV layout: header `t,<name1>,...,<nameC>`, time in seconds with uniform
// spacing, values printed with full double precision, LF line endings.
inline void save_csv(const TimeSeries& series, const std::filesystem::path& path) {
  series.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("csv: cannot open for writing: " + path.string());
  out << "t";
  for (const std::string& name : series.channel_names) out << "," << name;
  out << "\n";
  for (std::size_t t = 0; t < series.samples; ++t) {
    out << detail::format_g17(static_cast<double>(t) / series.sample_rate_hz);
    for (std::size_t c = 0; c < series.channels; ++c)
      out << "," << detail::format_g17(series.at(c, t));
    out << "\n";
  }
  if (!out) throw IoError("csv: write failed: " + path.string());
}

inline TimeSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("csv: cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("csv: empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "t")
    throw IoError("csv: header must be `t,<name1>,...`: " + path.string());
  const std::size_t C = header.size() - 1;

  std::vector<std::string> names(header.begin() + 1, header.end());
  std::vector<double> times;
  std::vector<std::vector<double>> columns(C);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != C + 1)
      throw IoError("csv: ragged row " + std::to_string(row) + ": expected " +
                    std::to_string(C + 1) + " cells, got " + std::to_string(cells.size()));
    times.push_back(detail::parse_cell(cells[0], row, 1));
    for (std::size_t c = 0; c < C; ++c)
      columns[c].push_back(detail::parse_cell(cells[c + 1], row, c + 2));
  }
  const std::size_t T = times.size();
  if (T < 2) throw IoError("csv: fewer than 2 data rows: " + path.string());

  const double dt0 = times[1] - times[0];
  if (!(dt0 > 0.0)) throw IoError("csv: time column not strictly increasing at row 2");
  for (std::size_t t = 1; t < T; ++t) {
    const double dt = times[t] - times[t - 1];
    if (!(dt > 0.0))
      throw IoError("csv: time column not strictly increasing at row " + std::to_string(t + 1));
    if (std::fabs(dt / dt0 - 1.0) > 1e-6)
      throw IoError("csv: non-uniform time spacing at row " + std::to_string(t + 1));
  }

  TimeSeries ts;
  ts.channels = C;
  ts.samples = T;
  ts.sample_rate_hz = static_cast<double>(T - 1) / (times.back() - times.front());
  ts.channel_names = std::move(names);
  ts.values.resize(C * T);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) ts.values[c * T + t] = columns[c][t];
  ts.validate();
  return ts;
}

}  // namespace shmd
