#pragma once

// The model stack: 1-D convolutions over the raw window, recurrent layers
// (LSTM or GRU), additive attention over the hidden sequence, dense head,
// linear output. Batches are rows; a sequence of length L with D features
// per step travels as B x (L*D) in (step, feature) layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "shmd/errors.hpp"
#include "shmd/tensor.hpp"

namespace shmd {

enum class Activation { relu, tanh, identity };
enum class CellType { lstm, gru };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    default: return "identity";
  }
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity" || s == "linear") return Activation::identity;
  throw ConfigError("model: unknown activation \"" + s + "\"");
}

inline std::string to_string(CellType c) { return c == CellType::lstm ? "lstm" : "gru"; }

inline CellType cell_from_string(const std::string& s) {
  if (s == "lstm") return CellType::lstm;
  if (s == "gru") return CellType::gru;
  throw ConfigError("model: unknown recurrent cell \"" + s + "\"");
}

inline Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    default: return x;
  }
}

struct ConvSpec {
  std::size_t filters = 8;
  std::size_t kernel = 5;
  Activation activation = Activation::relu;
};

struct RecurrentSpec {
  CellType cell = CellType::gru;
  std::size_t hidden = 32;
};

struct NetworkConfig {
  std::size_t window = 64;        // W, input samples per window
  std::size_t channels = 1;       // C, sensor channels entering jointly
  std::size_t horizon = 1;        // H
  std::size_t target_count = 1;   // C_t
  std::vector<ConvSpec> conv;
  std::vector<RecurrentSpec> recurrent;
  bool attention = true;
  std::vector<std::size_t> dense;

  std::size_t output_width() const { return horizon * target_count; }

  // valid padding: each conv layer eats K-1 steps
  std::size_t sequence_length() const {
    std::size_t len = window;
    for (const ConvSpec& c : conv) len = (len >= c.kernel) ? len - c.kernel + 1 : 0;
    return len;
  }

  void validate() const {
    if (window < 1) throw ConfigError("model.window: must be at least 1");
    if (channels < 1) throw ConfigError("model.channels: must be at least 1");
    if (horizon < 1 || target_count < 1)
      throw ConfigError("model: horizon and target count must be at least 1");
    for (std::size_t i = 0; i < conv.size(); ++i) {
      if (conv[i].kernel < 1 || conv[i].filters < 1)
        throw ConfigError("model.conv[" + std::to_string(i) +
                          "]: kernel and filters must be at least 1");
    }
    if (sequence_length() < 1)
      throw ConfigError("model.conv: stack consumes the whole window (" +
                        std::to_string(window) + " samples)");
    for (const RecurrentSpec& r : recurrent)
      if (r.hidden < 1) throw ConfigError("model.recurrent: hidden size must be at least 1");
    if (attention && recurrent.empty())
      throw ConfigError("model.attention: needs at least one recurrent layer");
    for (std::size_t w : dense)
      if (w < 1) throw ConfigError("model.dense: widths must be at least 1");
  }
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

namespace detail {

// Splits a flat B x (L*D) sequence into L tensors of shape B x D.
inline std::vector<Tensor> to_steps(const Tensor& flat, std::size_t steps, std::size_t dim) {
  std::vector<Tensor> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(slice(flat, 1, t * dim, dim));
  return out;
}

}  // namespace detail

// Valid-padding 1-D convolution over C_in channels producing F filter
// outputs per step:
//   out[t][f] = act(sum_{c,k} x[t+k][c] * kernel[f][c][k] + bias[f])
// The kernel is stored as a (K*C_in) x F matrix with row index k*C_in + c,
// so each output step is one slice + one matmul.
struct Conv1DLayer {
  std::size_t in_channels = 1;
  std::size_t kernel_len = 1;
  std::size_t filters = 1;
  Activation activation = Activation::identity;
  Tensor kernel;  // (K*C_in) x F
  Tensor bias;    // F

  Conv1DLayer(std::size_t c_in, std::size_t k, std::size_t f, Activation act)
      : in_channels(c_in),
        kernel_len(k),
        filters(f),
        activation(act),
        kernel(Tensor::zeros({k * c_in, f}, true)),
        bias(Tensor::zeros({f}, true)) {}

  // x: B x (len_in * C_in)  ->  B x ((len_in - K + 1) * F)
  Tensor forward(const Tensor& x, std::size_t len_in) const {
    if (len_in < kernel_len)
      throw ShapeError("conv1d: window of " + std::to_string(len_in) +
                       " steps is shorter than kernel " + std::to_string(kernel_len));
    const std::size_t len_out = len_in - kernel_len + 1;
    std::vector<Tensor> outs;
    outs.reserve(len_out);
    for (std::size_t t = 0; t < len_out; ++t) {
      Tensor patch = slice(x, 1, t * in_channels, kernel_len * in_channels);
      outs.push_back(apply_activation(add(matmul(patch, kernel), bias), activation));
    }
    return concat(outs, 1);
  }
};

// LSTM or GRU with one weight matrix / bias per gate. Returns the full
// hidden sequence so attention can weigh every step.
struct RecurrentLayer {
  CellType cell = CellType::gru;
  std::size_t input_size = 1;
  std::size_t hidden_size = 1;
  // gate order: lstm {i, f, g, o}; gru {z, r, n}
  std::vector<Tensor> w;  // input weights, D x U each
  std::vector<Tensor> r;  // recurrent weights, U x U each
  std::vector<Tensor> b;  // biases, U each

  RecurrentLayer(CellType type, std::size_t in, std::size_t hidden)
      : cell(type), input_size(in), hidden_size(hidden) {
    const std::size_t gates = (type == CellType::lstm) ? 4 : 3;
    for (std::size_t g = 0; g < gates; ++g) {
      w.push_back(Tensor::zeros({in, hidden}, true));
      r.push_back(Tensor::zeros({hidden, hidden}, true));
      b.push_back(Tensor::zeros({hidden}, true));
    }
  }

  std::vector<const char*> gate_names() const {
    if (cell == CellType::lstm) return {"i", "f", "g", "o"};
    return {"z", "r", "n"};
  }

  std::vector<Tensor> forward(const std::vector<Tensor>& xs) const {
    if (xs.empty()) throw ShapeError("recurrent: empty input sequence");
    if (xs.front().shape()[1] != input_size)
      throw ShapeError("recurrent: input has " + std::to_string(xs.front().shape()[1]) +
                       " features, layer expects " + std::to_string(input_size));
    const std::size_t batch = xs.front().shape()[0];
    Tensor h = Tensor::zeros({batch, hidden_size});
    Tensor c = Tensor::zeros({batch, hidden_size});
    Tensor one = Tensor::scalar(1.0);
    std::vector<Tensor> hs;
    hs.reserve(xs.size());
    for (const Tensor& x : xs) {
      auto gate = [&](std::size_t g) { return add(add(matmul(x, w[g]), matmul(h, r[g])), b[g]); };
      if (cell == CellType::lstm) {
        Tensor i = sigmoid(gate(0));
        Tensor f = sigmoid(gate(1));
        Tensor g = tanh(gate(2));
        Tensor o = sigmoid(gate(3));
        c = add(mul(f, c), mul(i, g));
        h = mul(o, tanh(c));
      } else {
        Tensor z = sigmoid(gate(0));
        Tensor rr = sigmoid(gate(1));
        // candidate uses the reset-gated previous state
        Tensor n = tanh(add(add(matmul(x, w[2]), matmul(mul(rr, h), r[2])), b[2]));
        h = add(mul(sub(one, z), n), mul(z, h));
      }
      hs.push_back(h);
    }
    return hs;
  }
};

// Additive attention: e_t = v . tanh(h_t W + b), alpha = softmax(e),
// context = sum_t alpha_t h_t. The weights are returned for export.
struct AttentionLayer {
  std::size_t hidden_size = 1;
  Tensor w;  // U x U
  Tensor b;  // U
  Tensor v;  // U x 1

  explicit AttentionLayer(std::size_t hidden)
      : hidden_size(hidden),
        w(Tensor::zeros({hidden, hidden}, true)),
        b(Tensor::zeros({hidden}, true)),
        v(Tensor::zeros({hidden, 1}, true)) {}

  struct Result {
    Tensor context;  // B x U
    Tensor weights;  // B x L
  };

  Result forward(const std::vector<Tensor>& hs) const {
    if (hs.empty()) throw ShapeError("attention: empty hidden sequence");
    std::vector<Tensor> scores;
    scores.reserve(hs.size());
    for (const Tensor& h : hs)
      scores.push_back(matmul(tanh(add(matmul(h, w), b)), v));  // B x 1
    Tensor alpha = softmax(concat(scores, 1), 1);               // B x L
    Tensor context;
    for (std::size_t t = 0; t < hs.size(); ++t) {
      Tensor weighted = mul(slice(alpha, 1, t, 1), hs[t]);
      context = t == 0 ? weighted : add(context, weighted);
    }
    return {context, alpha};
  }
};

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out
  Activation activation = Activation::identity;

  DenseLayer(std::size_t in, std::size_t out, Activation act)
      : weight(Tensor::zeros({in, out}, true)),
        bias(Tensor::zeros({out}, true)),
        activation(act) {}

  Tensor forward(const Tensor& x) const {
    return apply_activation(add(matmul(x, weight), bias), activation);
  }
};

// The assembled stack: conv* -> recurrent* -> (attention | last hidden |
// flatten) -> dense* -> linear output of H*C_t values.
class Network {
 public:
  explicit Network(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    std::size_t ch = config_.channels;
    for (const ConvSpec& spec : config_.conv) {
      conv_.emplace_back(ch, spec.kernel, spec.filters, spec.activation);
      ch = spec.filters;
    }
    std::size_t feat = ch;
    for (const RecurrentSpec& spec : config_.recurrent) {
      recurrent_.emplace_back(spec.cell, feat, spec.hidden);
      feat = spec.hidden;
    }
    if (config_.attention) attention_.emplace(feat);
    // with no recurrent layer the dense head sees the flattened sequence
    std::size_t width = config_.recurrent.empty() ? config_.sequence_length() * feat : feat;
    for (std::size_t dw : config_.dense) {
      dense_.emplace_back(width, dw, Activation::relu);
      width = dw;
    }
    output_.emplace(width, config_.output_width(), Activation::identity);
  }

  const NetworkConfig& config() const { return config_; }

  std::vector<NamedParam> parameters() {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < conv_.size(); ++i) {
      out.push_back({"conv" + std::to_string(i) + ".kernel", conv_[i].kernel});
      out.push_back({"conv" + std::to_string(i) + ".bias", conv_[i].bias});
    }
    for (std::size_t i = 0; i < recurrent_.size(); ++i) {
      const auto names = recurrent_[i].gate_names();
      for (std::size_t g = 0; g < names.size(); ++g) {
        const std::string prefix = "rnn" + std::to_string(i) + ".";
        out.push_back({prefix + "w_" + names[g], recurrent_[i].w[g]});
        out.push_back({prefix + "r_" + names[g], recurrent_[i].r[g]});
        out.push_back({prefix + "b_" + names[g], recurrent_[i].b[g]});
      }
    }
    if (attention_) {
      out.push_back({"attn.w", attention_->w});
      out.push_back({"attn.b", attention_->b});
      out.push_back({"attn.v", attention_->v});
    }
    for (std::size_t i = 0; i < dense_.size(); ++i) {
      out.push_back({"dense" + std::to_string(i) + ".weight", dense_[i].weight});
      out.push_back({"dense" + std::to_string(i) + ".bias", dense_[i].bias});
    }
    out.push_back({"out.weight", output_->weight});
    out.push_back({"out.bias", output_->bias});
    return out;
  }

  // Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
  void init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (NamedParam& p : parameters()) {
      Tensor& t = p.tensor;
      if (t.rank() == 2) {
        const double fan_in = static_cast<double>(t.shape()[0]);
        const double fan_out = static_cast<double>(t.shape()[1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.value()) v = dist(rng);
      } else {
        const bool forget_gate = p.name.size() >= 4 &&
                                 p.name.compare(p.name.size() - 4, 4, ".b_f") == 0;
        std::fill(t.value().begin(), t.value().end(), forget_gate ? 1.0 : 0.0);
      }
    }
  }

  struct Forward {
    Tensor prediction;         // B x (H*C_t)
    Tensor attention_weights;  // B x L, undefined when attention is off
  };

  // batch: B x (W*C) in (w, c) layout
  Forward forward(const Tensor& batch) const {
    if (batch.rank() != 2 || batch.shape()[1] != config_.window * config_.channels)
      throw ShapeError("network: input shape " + shape_str(batch.shape()) +
                       " does not match window x channels = " +
                       std::to_string(config_.window) + " x " + std::to_string(config_.channels));
    Tensor flat = batch;
    std::size_t len = config_.window;
    std::size_t feat = config_.channels;
    for (const Conv1DLayer& layer : conv_) {
      flat = layer.forward(flat, len);
      len = len - layer.kernel_len + 1;
      feat = layer.filters;
    }

    Forward result;
    Tensor head_input;
    if (recurrent_.empty()) {
      head_input = flat;
    } else {
      std::vector<Tensor> steps = detail::to_steps(flat, len, feat);
      for (const RecurrentLayer& layer : recurrent_) steps = layer.forward(steps);
      if (attention_) {
        auto att = attention_->forward(steps);
        head_input = att.context;
        result.attention_weights = att.weights;
      } else {
        head_input = steps.back();
      }
    }
    for (const DenseLayer& layer : dense_) head_input = layer.forward(head_input);
    result.prediction = output_->forward(head_input);
    return result;
  }

  Conv1DLayer& conv_layer(std::size_t i) { return conv_[i]; }
  RecurrentLayer& recurrent_layer(std::size_t i) { return recurrent_[i]; }
  AttentionLayer& attention_layer() { return *attention_; }
  DenseLayer& output_layer() { return *output_; }

 private:
  NetworkConfig config_;
  std::vector<Conv1DLayer> conv_;
  std::vector<RecurrentLayer> recurrent_;
  std::optional<AttentionLayer> attention_;
  std::vector<DenseLayer> dense_;
  std::optional<DenseLayer> output_;
};

// The smallest stack that exercises every architecture component.
inline NetworkConfig default_network_config() {
  NetworkConfig cfg;
  cfg.conv = {ConvSpec{8, 5, Activation::relu}};
  cfg.recurrent = {RecurrentSpec{CellType::gru, 32}};
  cfg.attention = true;
  cfg.dense = {32};
  return cfg;
}

}  // namespace shmd
