#pragma once

// Experiment configuration: one JSON document with optional sections
// signal / noise / data / model / train / eval. Missing fields take the
// bench defaults; unknown keys are rejected with their field path.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "shmd/checkpoint.hpp"
#include "shmd/dataprep.hpp"
#include "shmd/errors.hpp"
#include "shmd/layers.hpp"
#include "shmd/signal.hpp"
#include "shmd/train.hpp"

namespace shmd {

struct ExperimentConfig {
  ModalSignalSpec signal;
  NoiseSpec noise;
  DataConfig data;
  NetworkConfig model;  // architecture; dimensions are resolved against the data
  TrainConfig train;
  std::string out_dir = ".";

  static ExperimentConfig defaults();
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Fills in the window/channel dimensions the architecture runs at.
  NetworkConfig resolved_network(std::size_t channels) const {
    NetworkConfig net = model;
    net.window = data.window;
    net.channels = channels;
    net.horizon = data.horizon;
    net.target_count =
        data.target_channels.empty() ? channels : data.target_channels.size();
    return net;
  }

  void validate(std::size_t channels) const {
    signal.validate();
    noise.validate();
    data.validate();
    train.validate();
    resolved_network(channels).validate();
    for (std::size_t c : data.target_channels)
      if (c >= channels)
        throw ConfigError("data.target_channels: index " + std::to_string(c) +
                          " out of range for " + std::to_string(channels) + " channels");
  }
};

namespace cfgdetail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + "." + it.key() + ": unknown field");
}

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline ModalSignalSpec parse_signal(const nlohmann::json& j, ModalSignalSpec base) {
  check_keys(j, "signal", {"sample_rate_hz", "duration_s", "channels", "seed", "modes"});
  base.sample_rate_hz = get_or(j, "sample_rate_hz", base.sample_rate_hz, "signal");
  base.duration_s = get_or(j, "duration_s", base.duration_s, "signal");
  base.channels = get_or(j, "channels", base.channels, "signal");
  base.seed = get_or(j, "seed", base.seed, "signal");
  if (j.contains("modes")) {
    if (!j.at("modes").is_array()) throw ConfigError("signal.modes: expected an array");
    base.modes.clear();
    std::size_t i = 0;
    for (const auto& m : j.at("modes")) {
      const std::string where = "signal.modes." + std::to_string(i++);
      check_keys(m, where, {"frequency_hz", "damping_ratio", "amplitude", "phase_rad", "shape"});
      Mode mode;
      mode.frequency_hz = get_or(m, "frequency_hz", mode.frequency_hz, where);
      mode.damping_ratio = get_or(m, "damping_ratio", mode.damping_ratio, where);
      mode.amplitude = get_or(m, "amplitude", mode.amplitude, where);
      mode.phase_rad = get_or(m, "phase_rad", mode.phase_rad, where);
      mode.shape = get_or(m, "shape", std::vector<double>(base.channels, 1.0), where);
      base.modes.push_back(std::move(mode));
    }
  } else if (j.contains("channels")) {
    // keep default modes usable when only the channel count changes
    for (Mode& m : base.modes) m.shape.assign(base.channels, 1.0);
  }
  return base;
}

inline NoiseSpec parse_noise(const nlohmann::json& j, NoiseSpec base) {
  check_keys(j, "noise",
             {"instrumental_sigma", "env_interference", "env_drift_scale", "op_burst_rate_hz",
              "op_burst_amplitude", "op_burst_decay_s", "target_snr_db"});
  base.instrumental_sigma = get_or(j, "instrumental_sigma", base.instrumental_sigma, "noise");
  base.env_drift_scale = get_or(j, "env_drift_scale", base.env_drift_scale, "noise");
  base.op_burst_rate_hz = get_or(j, "op_burst_rate_hz", base.op_burst_rate_hz, "noise");
  base.op_burst_amplitude = get_or(j, "op_burst_amplitude", base.op_burst_amplitude, "noise");
  base.op_burst_decay_s = get_or(j, "op_burst_decay_s", base.op_burst_decay_s, "noise");
  if (j.contains("env_interference")) {
    if (j.at("env_interference").is_null()) {
      base.env_interference.reset();
    } else {
      const auto& t = j.at("env_interference");
      check_keys(t, "noise.env_interference", {"frequency_hz", "amplitude", "phase_rad"});
      ToneSpec tone = base.env_interference.value_or(ToneSpec{});
      tone.frequency_hz = get_or(t, "frequency_hz", tone.frequency_hz, "noise.env_interference");
      tone.amplitude = get_or(t, "amplitude", tone.amplitude, "noise.env_interference");
      tone.phase_rad = get_or(t, "phase_rad", tone.phase_rad, "noise.env_interference");
      base.env_interference = tone;
    }
  }
  if (j.contains("target_snr_db")) {
    if (j.at("target_snr_db").is_null())
      base.target_snr_db.reset();
    else
      base.target_snr_db = get_or(j, "target_snr_db", 0.0, "noise");
  }
  return base;
}

inline DataConfig parse_data(const nlohmann::json& j, DataConfig base) {
  check_keys(j, "data", {"window", "horizon", "stride", "task", "splits", "target_channels"});
  base.window = get_or(j, "window", base.window, "data");
  base.horizon = get_or(j, "horizon", base.horizon, "data");
  base.stride = get_or(j, "stride", base.stride, "data");
  if (j.contains("task")) base.task = task_from_string(j.at("task").get<std::string>());
  if (j.contains("splits")) {
    auto s = get_or(j, "splits", std::vector<double>{}, "data");
    if (s.size() != 3) throw ConfigError("data.splits: expected three fractions");
    std::copy(s.begin(), s.end(), base.splits.begin());
  }
  base.target_channels =
      get_or(j, "target_channels", base.target_channels, "data");
  return base;
}

inline NetworkConfig parse_model(const nlohmann::json& j, NetworkConfig base) {
  check_keys(j, "model", {"conv", "recurrent", "attention", "dense"});
  if (j.contains("conv")) {
    base.conv.clear();
    std::size_t i = 0;
    for (const auto& c : j.at("conv")) {
      const std::string where = "model.conv." + std::to_string(i++);
      check_keys(c, where, {"filters", "kernel", "activation"});
      ConvSpec spec;
      spec.filters = get_or(c, "filters", spec.filters, where);
      spec.kernel = get_or(c, "kernel", spec.kernel, where);
      if (c.contains("activation"))
        spec.activation = activation_from_string(c.at("activation").get<std::string>());
      base.conv.push_back(spec);
    }
  }
  if (j.contains("recurrent")) {
    base.recurrent.clear();
    std::size_t i = 0;
    for (const auto& r : j.at("recurrent")) {
      const std::string where = "model.recurrent." + std::to_string(i++);
      check_keys(r, where, {"cell", "hidden"});
      RecurrentSpec spec;
      if (r.contains("cell")) spec.cell = cell_from_string(r.at("cell").get<std::string>());
      spec.hidden = get_or(r, "hidden", spec.hidden, where);
      base.recurrent.push_back(spec);
    }
  }
  base.attention = get_or(j, "attention", base.attention, "model");
  base.dense = get_or(j, "dense", base.dense, "model");
  return base;
}

inline TrainConfig parse_train(const nlohmann::json& j, TrainConfig base) {
  check_keys(j, "train",
             {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs",
              "patience", "min_delta", "seed"});
  base.learning_rate = get_or(j, "learning_rate", base.learning_rate, "train");
  base.beta1 = get_or(j, "beta1", base.beta1, "train");
  base.beta2 = get_or(j, "beta2", base.beta2, "train");
  base.epsilon = get_or(j, "epsilon", base.epsilon, "train");
  base.batch_size = get_or(j, "batch_size", base.batch_size, "train");
  base.max_epochs = get_or(j, "max_epochs", base.max_epochs, "train");
  base.patience = get_or(j, "patience", base.patience, "train");
  base.min_delta = get_or(j, "min_delta", base.min_delta, "train");
  base.seed = get_or(j, "seed", base.seed, "train");
  return base;
}

}  // namespace cfgdetail

// The two-mode bench: lightly damped 10 Hz / 27 Hz modes at 256 Hz for
// 16 s, with all three noise classes scaled to a 10 dB record.
inline ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  cfg.signal.sample_rate_hz = 256.0;
  cfg.signal.duration_s = 16.0;
  cfg.signal.channels = 1;
  cfg.signal.seed = 42;
  cfg.signal.modes = {{10.0, 0.01, 1.0, 0.7, {1.0}}, {27.0, 0.01, 0.8, 2.1, {1.0}}};

  cfg.noise.instrumental_sigma = 0.05;
  cfg.noise.env_interference = ToneSpec{100.0, 0.22, 0.4};
  cfg.noise.env_drift_scale = 0.001;
  cfg.noise.op_burst_rate_hz = 0.5;
  cfg.noise.op_burst_amplitude = 0.3;
  cfg.noise.op_burst_decay_s = 0.1;
  cfg.noise.target_snr_db = 10.0;

  cfg.data.window = 64;
  cfg.data.horizon = 1;
  cfg.data.stride = 1;
  cfg.data.task = Task::forecast;
  cfg.data.splits = {0.7, 0.15, 0.15};

  cfg.model = default_network_config();

  cfg.train.max_epochs = 50;
  cfg.train.seed = 7;
  return cfg;
}

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  cfgdetail::check_keys(j, "config", {"signal", "noise", "data", "model", "train", "eval"});
  ExperimentConfig cfg = defaults();
  if (j.contains("signal")) cfg.signal = cfgdetail::parse_signal(j.at("signal"), cfg.signal);
  if (j.contains("noise")) cfg.noise = cfgdetail::parse_noise(j.at("noise"), cfg.noise);
  if (j.contains("data")) cfg.data = cfgdetail::parse_data(j.at("data"), cfg.data);
  if (j.contains("model")) cfg.model = cfgdetail::parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) cfg.train = cfgdetail::parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) {
    cfgdetail::check_keys(j.at("eval"), "eval", {"out_dir"});
    cfg.out_dir = cfgdetail::get_or(j.at("eval"), "out_dir", cfg.out_dir, "eval");
  }
  return cfg;
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json modes = nlohmann::json::array();
  for (const Mode& m : signal.modes)
    modes.push_back({{"frequency_hz", m.frequency_hz},
                     {"damping_ratio", m.damping_ratio},
                     {"amplitude", m.amplitude},
                     {"phase_rad", m.phase_rad},
                     {"shape", m.shape}});
  nlohmann::json noise_j = {{"instrumental_sigma", noise.instrumental_sigma},
                            {"env_drift_scale", noise.env_drift_scale},
                            {"op_burst_rate_hz", noise.op_burst_rate_hz},
                            {"op_burst_amplitude", noise.op_burst_amplitude},
                            {"op_burst_decay_s", noise.op_burst_decay_s}};
  if (noise.env_interference)
    noise_j["env_interference"] = {{"frequency_hz", noise.env_interference->frequency_hz},
                                   {"amplitude", noise.env_interference->amplitude},
                                   {"phase_rad", noise.env_interference->phase_rad}};
  else
    noise_j["env_interference"] = nullptr;
  if (noise.target_snr_db)
    noise_j["target_snr_db"] = *noise.target_snr_db;
  else
    noise_j["target_snr_db"] = nullptr;

  nlohmann::json conv = nlohmann::json::array();
  for (const ConvSpec& c : model.conv)
    conv.push_back({{"filters", c.filters},
                    {"kernel", c.kernel},
                    {"activation", to_string(c.activation)}});
  nlohmann::json rec = nlohmann::json::array();
  for (const RecurrentSpec& r : model.recurrent)
    rec.push_back({{"cell", to_string(r.cell)}, {"hidden", r.hidden}});

  return {{"signal",
           {{"sample_rate_hz", signal.sample_rate_hz},
            {"duration_s", signal.duration_s},
            {"channels", signal.channels},
            {"seed", signal.seed},
            {"modes", modes}}},
          {"noise", noise_j},
          {"data",
           {{"window", data.window},
            {"horizon", data.horizon},
            {"stride", data.stride},
            {"task", to_string(data.task)},
            {"splits", data.splits},
            {"target_channels", data.target_channels}}},
          {"model",
           {{"conv", conv}, {"recurrent", rec}, {"attention", model.attention},
            {"dense", model.dense}}},
          {"train",
           {{"learning_rate", train.learning_rate},
            {"beta1", train.beta1},
            {"beta2", train.beta2},
            {"epsilon", train.epsilon},
            {"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"min_delta", train.min_delta},
            {"seed", train.seed}}},
          {"eval", {{"out_dir", out_dir}}}};
}

// Applies one `section.key=value` override onto the raw config document.
// Dotted segments descend into objects; numeric segments index arrays.
// The value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set: expected key=value, got \"" + assignment + "\"");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  std::string pointer;
  std::string segment;
  for (std::size_t i = 0; i <= path.size(); ++i) {
    if (i == path.size() || path[i] == '.') {
      if (segment.empty()) throw ConfigError("--set: empty segment in key \"" + path + "\"");
      pointer += "/" + segment;
      segment.clear();
    } else {
      segment += path[i];
    }
  }
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // plain string
  }
  try {
    j[nlohmann::json::json_pointer(pointer)] = value;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--set: cannot apply \"" + assignment + "\": " + e.what());
  }
}

}  // namespace shmd
