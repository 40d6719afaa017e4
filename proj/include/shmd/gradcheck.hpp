#pragma once

// Finite-difference verification of every differentiable layer. Smooth
// activations are used where the layer allows a choice, so the central
// difference never straddles a relu kink; relu itself is checked on
// inputs bounded away from zero.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "shmd/layers.hpp"
#include "shmd/tensor.hpp"
#include "shmd/train.hpp"

namespace shmd {

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

inline std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, double step = 1e-5,
                                                     double tolerance = 1e-4) {
  std::mt19937_64 rng(seed);
  auto rand_fill = [&](Tensor& t, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.value()) v = dist(rng);
  };
  auto rand_tensor = [&](Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    rand_fill(t, lo, hi);
    return t;
  };

  std::vector<GradCheckRow> rows;
  auto check = [&](const std::string& name, const Tensor& wrt,
                   const std::function<Tensor(const Tensor&)>& f) {
    GradCheckReport rep = grad_check(f, wrt, step, tolerance);
    rows.push_back({name, rep.max_rel_error, rep.pass});
  };

  // conv1d: 2 channels, kernel 3, 2 filters over 6 steps, batch 2
  {
    Conv1DLayer conv(2, 3, 2, Activation::tanh);
    rand_fill(conv.kernel);
    rand_fill(conv.bias);
    Tensor x = rand_tensor({2, 12});
    auto loss = [](const Conv1DLayer& layer, const Tensor& input) {
      return mean(layer.forward(input, 6));
    };
    check("conv1d.input", x, [&](const Tensor& t) { return loss(conv, t); });
    check("conv1d.kernel", conv.kernel, [&](const Tensor& t) {
      Conv1DLayer l = conv;
      l.kernel = t;
      return loss(l, x);
    });
    check("conv1d.bias", conv.bias, [&](const Tensor& t) {
      Conv1DLayer l = conv;
      l.bias = t;
      return loss(l, x);
    });
  }

  // recurrent cells: 3 features, hidden 4, 4 steps, batch 2, loss mean(h_L)
  for (CellType cell : {CellType::lstm, CellType::gru}) {
    RecurrentLayer base(cell, 3, 4);
    for (std::size_t g = 0; g < base.w.size(); ++g) {
      rand_fill(base.w[g]);
      rand_fill(base.r[g]);
      rand_fill(base.b[g], -0.5, 0.5);
    }
    Tensor x = rand_tensor({2, 12});
    auto loss = [](const RecurrentLayer& layer, const Tensor& flat) {
      return mean(layer.forward(detail::to_steps(flat, 4, 3)).back());
    };
    const std::string prefix = to_string(cell) + ".";
    check(prefix + "input", x, [&](const Tensor& t) { return loss(base, t); });
    const auto names = base.gate_names();
    for (std::size_t g = 0; g < names.size(); ++g) {
      check(prefix + "w_" + names[g], base.w[g], [&](const Tensor& t) {
        RecurrentLayer l = base;
        l.w[g] = t;
        return loss(l, x);
      });
      check(prefix + "r_" + names[g], base.r[g], [&](const Tensor& t) {
        RecurrentLayer l = base;
        l.r[g] = t;
        return loss(l, x);
      });
      check(prefix + "b_" + names[g], base.b[g], [&](const Tensor& t) {
        RecurrentLayer l = base;
        l.b[g] = t;
        return loss(l, x);
      });
    }
  }

  // attention over 5 hidden states of width 4, batch 2; the loss mixes the
  // context with a fixed probe so both branches carry gradient
  {
    AttentionLayer attn(4);
    rand_fill(attn.w);
    rand_fill(attn.b);
    rand_fill(attn.v);
    Tensor probe = rand_tensor({2, 4});
    Tensor hseq = rand_tensor({2, 20});
    auto loss = [&probe](const AttentionLayer& layer, const Tensor& flat) {
      auto out = layer.forward(detail::to_steps(flat, 5, 4));
      return mean(mul(out.context, probe));
    };
    check("attention.input", hseq, [&](const Tensor& t) { return loss(attn, t); });
    check("attention.w", attn.w, [&](const Tensor& t) {
      AttentionLayer l = attn;
      l.w = t;
      return loss(l, hseq);
    });
    check("attention.b", attn.b, [&](const Tensor& t) {
      AttentionLayer l = attn;
      l.b = t;
      return loss(l, hseq);
    });
    check("attention.v", attn.v, [&](const Tensor& t) {
      AttentionLayer l = attn;
      l.v = t;
      return loss(l, hseq);
    });
  }

  // dense head (smooth activation so the difference quotient is clean)
  {
    DenseLayer dense(5, 3, Activation::tanh);
    rand_fill(dense.weight);
    rand_fill(dense.bias);
    Tensor x = rand_tensor({2, 5});
    check("dense.input", x, [&](const Tensor& t) { return mean(dense.forward(t)); });
    check("dense.weight", dense.weight, [&](const Tensor& t) {
      DenseLayer l = dense;
      l.weight = t;
      return mean(l.forward(x));
    });
    check("dense.bias", dense.bias, [&](const Tensor& t) {
      DenseLayer l = dense;
      l.bias = t;
      return mean(l.forward(x));
    });
  }

  // relu on inputs bounded away from the kink
  {
    Tensor x = rand_tensor({2, 6});
    for (double& v : x.value()) v += (v >= 0.0 ? 0.1 : -0.1);
    Tensor probe = rand_tensor({2, 6});
    check("relu.input", x,
          [&](const Tensor& t) { return mean(mul(relu(t), probe)); });
  }

  // softmax weighted by a fixed probe (a plain mean has zero gradient)
  {
    Tensor x = rand_tensor({3, 5}, -2.0, 2.0);
    Tensor probe = rand_tensor({3, 5});
    check("softmax.input", x,
          [&](const Tensor& t) { return mean(mul(softmax(t, 1), probe)); });
  }

  // mse against a fixed target
  {
    Tensor pred = rand_tensor({2, 3});
    Tensor target = rand_tensor({2, 3});
    check("mse.pred", pred, [&](const Tensor& t) { return mse_loss(t, target); });
  }

  return rows;
}

inline bool all_pass(const std::vector<GradCheckRow>& rows) {
  for (const GradCheckRow& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

}  // namespace shmd
