#pragma once

// Checkpoint persistence. File layout, all little-endian:
//   bytes 0..3   magic "SHMD"
//   bytes 4..7   u32 format version (1)
//   bytes 8..11  u32 header length
//   header       UTF-8 JSON {net_config, norm_state, data, manifest}
//   payload      32-bit floats at the byte offsets the manifest declares
// Offsets are relative to the payload start. Files are written to a
// temporary name and renamed into place.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shmd/dataprep.hpp"
#include "shmd/errors.hpp"
#include "shmd/layers.hpp"

namespace shmd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'S', 'H', 'M', 'D'};

// Windowing choices that must survive into evaluation.
struct DataConfig {
  std::size_t window = 64;
  std::size_t horizon = 1;
  std::size_t stride = 1;
  Task task = Task::forecast;
  std::array<double, 3> splits{0.7, 0.15, 0.15};
  std::vector<std::size_t> target_channels;  // empty = all channels

  void validate() const {
    if (window < 1) throw ConfigError("data.window: must be positive");
    if (horizon < 1) throw ConfigError("data.horizon: must be positive");
    if (stride < 1) throw ConfigError("data.stride: must be positive");
    if (task == Task::denoise && horizon > window)
      throw ConfigError("data.horizon: denoise targets must fit inside the window");
  }

  std::size_t min_samples() const {
    return task == Task::forecast ? window + horizon : window;
  }
};

// --- JSON conversions (also used by the experiment config) ---

inline nlohmann::json to_json(const NetworkConfig& c) {
  nlohmann::json conv = nlohmann::json::array();
  for (const ConvSpec& s : c.conv)
    conv.push_back({{"filters", s.filters},
                    {"kernel", s.kernel},
                    {"activation", to_string(s.activation)}});
  nlohmann::json rec = nlohmann::json::array();
  for (const RecurrentSpec& s : c.recurrent)
    rec.push_back({{"cell", to_string(s.cell)}, {"hidden", s.hidden}});
  return {{"window", c.window},       {"channels", c.channels},
          {"horizon", c.horizon},     {"target_count", c.target_count},
          {"conv", conv},             {"recurrent", rec},
          {"attention", c.attention}, {"dense", c.dense}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.window = j.at("window").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.target_count = j.at("target_count").get<std::size_t>();
  c.conv.clear();
  for (const auto& s : j.at("conv"))
    c.conv.push_back({s.at("filters").get<std::size_t>(), s.at("kernel").get<std::size_t>(),
                      activation_from_string(s.at("activation").get<std::string>())});
  c.recurrent.clear();
  for (const auto& s : j.at("recurrent"))
    c.recurrent.push_back({cell_from_string(s.at("cell").get<std::string>()),
                           s.at("hidden").get<std::size_t>()});
  c.attention = j.at("attention").get<bool>();
  c.dense = j.at("dense").get<std::vector<std::size_t>>();
  return c;
}

inline nlohmann::json to_json(const NormState& n) {
  return {{"min", n.min},
          {"max", n.max},
          {"degenerate", n.degenerate},
          {"fitted_on", n.fitted_on}};
}

inline NormState norm_state_from_json(const nlohmann::json& j) {
  NormState n;
  n.min = j.at("min").get<std::vector<double>>();
  n.max = j.at("max").get<std::vector<double>>();
  n.degenerate = j.at("degenerate").get<std::vector<bool>>();
  n.fitted_on = j.at("fitted_on").get<std::string>();
  if (n.min.size() != n.max.size() || n.min.size() != n.degenerate.size())
    throw IoError("checkpoint: manifest/shape inconsistency in norm_state");
  return n;
}

inline nlohmann::json to_json(const DataConfig& d) {
  return {{"window", d.window},   {"horizon", d.horizon},
          {"stride", d.stride},   {"task", to_string(d.task)},
          {"splits", d.splits},   {"target_channels", d.target_channels}};
}

inline DataConfig data_config_from_json(const nlohmann::json& j) {
  DataConfig d;
  d.window = j.at("window").get<std::size_t>();
  d.horizon = j.at("horizon").get<std::size_t>();
  d.stride = j.at("stride").get<std::size_t>();
  d.task = task_from_string(j.at("task").get<std::string>());
  auto splits = j.at("splits").get<std::vector<double>>();
  if (splits.size() != 3) throw ConfigError("data.splits: expected three fractions");
  std::copy(splits.begin(), splits.end(), d.splits.begin());
  d.target_channels = j.at("target_channels").get<std::vector<std::size_t>>();
  return d;
}

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  NetworkConfig net;
  NormState norm;
  DataConfig data;
  std::vector<NamedParam> params;

  // Builds the network and loads the stored parameter values into it.
  Network to_network() const {
    Network network(net);
    auto live = network.parameters();
    if (live.size() != params.size())
      throw IoError("checkpoint: manifest/shape inconsistency: expected " +
                    std::to_string(live.size()) + " parameters, found " +
                    std::to_string(params.size()));
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (live[i].name != params[i].name || live[i].tensor.shape() != params[i].tensor.shape())
        throw IoError("checkpoint: manifest/shape inconsistency at parameter " + params[i].name);
      live[i].tensor.value() = params[i].tensor.value();
    }
    return network;
  }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::vector<float> payload;
  for (const NamedParam& p : ckpt.params) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.tensor.shape()},
                        {"offset", payload.size() * sizeof(float)}});
    for (double v : p.tensor.value()) payload.push_back(static_cast<float>(v));
  }
  nlohmann::json header = {{"net_config", to_json(ckpt.net)},
                           {"norm_state", to_json(ckpt.norm)},
                           {"data", to_json(ckpt.data)},
                           {"manifest", manifest}};
  const std::string header_str = header.dump();

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open for writing: " + path.string());
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = ckpt.version;
    const std::uint32_t hlen = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("checkpoint: write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open for reading: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path.string());
  std::uint32_t version = 0, hlen = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&hlen, bytes.data() + 8, 4);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + ", expected " +
                  std::to_string(kCheckpointVersion));
  if (bytes.size() < 12 + static_cast<std::size_t>(hlen))
    throw IoError("checkpoint: truncated header in " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: invalid header json: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.version = version;
  try {
    ckpt.net = network_config_from_json(header.at("net_config"));
    ckpt.norm = norm_state_from_json(header.at("norm_state"));
    ckpt.data = data_config_from_json(header.at("data"));

    const char* payload = bytes.data() + 12 + hlen;
    const std::size_t payload_size = bytes.size() - 12 - hlen;
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& entry : header.at("manifest")) {
      const std::string name = entry.at("name").get<std::string>();
      const Shape shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = numel_of(shape);
      const std::size_t end = offset + n * sizeof(float);
      if (end > payload_size || offset % sizeof(float) != 0)
        throw IoError("checkpoint: truncated payload or out-of-bounds offset for parameter " +
                      name);
      spans.emplace_back(offset, end);
      std::vector<double> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, payload + offset + i * sizeof(float), sizeof(float));
        values[i] = static_cast<double>(f);
      }
      ckpt.params.push_back({name, Tensor::from(shape, std::move(values))});
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].first < spans[i - 1].second)
        throw IoError("checkpoint: overlapping manifest offsets");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: invalid header json: " + std::string(e.what()));
  }
  // surfaces manifest/shape inconsistencies against the declared network
  ckpt.to_network();
  return ckpt;
}

}  // namespace shmd
