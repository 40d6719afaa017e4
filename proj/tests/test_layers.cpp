#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>

#include "shmd/gradcheck.hpp"
#include "shmd/layers.hpp"

using namespace shmd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                               double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("conv1d with an explicit difference kernel") {
  // x = [1,2,3], kernel [1,0,-1]: 1*1 + 0*2 - 1*3 = -2
  Conv1DLayer conv(1, 3, 1, Activation::identity);
  conv.kernel.value() = {1.0, 0.0, -1.0};
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor y = conv.forward(x, 3);
  REQUIRE(y.shape() == Shape{1, 1});
  CHECK(y.value()[0] == Catch::Approx(-2.0));
}

TEST_CASE("unit kernel with zero bias is the identity map") {
  Conv1DLayer conv(1, 1, 1, Activation::identity);
  conv.kernel.value() = {1.0};
  Tensor x = Tensor::from({1, 5}, {0.3, -0.7, 1.5, 0.0, 2.0});
  Tensor y = conv.forward(x, 5);
  CHECK(y.value() == x.value());
}

TEST_CASE("conv1d matches the quadruple-loop oracle") {
  const std::size_t W = 64, C = 3, F = 8, K = 5, L = W - K + 1;
  std::mt19937_64 rng(2024);
  // oracle-side kernel indexed [f][c][k]
  std::vector<double> kern(F * C * K);
  for (double& v : kern) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::vector<double> bias = random_vec(F, rng);
  std::vector<double> x = random_vec(W * C, rng);  // (w, c) layout

  Conv1DLayer conv(C, K, F, Activation::identity);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k)
        conv.kernel.value()[(k * C + c) * F + f] = kern[(f * C + c) * K + k];
  conv.bias.value() = bias;

  Tensor y = conv.forward(Tensor::from({1, W * C}, x), W);
  REQUIRE(y.shape() == Shape{1, L * F});

  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t f = 0; f < F; ++f) {
      double acc = bias[f];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k)
          acc += x[(t + k) * C + c] * kern[(f * C + c) * K + k];
      CHECK(std::fabs(y.value()[t * F + f] - acc) < 1e-12);
    }
}

TEST_CASE("conv1d rejects windows shorter than the kernel") {
  Conv1DLayer conv(1, 5, 1, Activation::identity);
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  CHECK_THROWS_AS(conv.forward(x, 3), ShapeError);
}

TEST_CASE("zero-weight recurrent layers hold the zero fixed point") {
  for (CellType cell : {CellType::lstm, CellType::gru}) {
    RecurrentLayer layer(cell, 2, 3);
    std::vector<Tensor> xs(4, Tensor::zeros({1, 2}));
    auto hs = layer.forward(xs);
    REQUIRE(hs.size() == 4);
    for (const Tensor& h : hs)
      for (double v : h.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("single GRU step matches hand-evaluated scalar closed form") {
  RecurrentLayer gru(CellType::gru, 1, 1);
  const double wz = 0.3, bz = 0.1, wr = -0.4, br = 0.2, wn = 0.8, bn = -0.2, x = 0.5;
  gru.w[0].value() = {wz};
  gru.b[0].value() = {bz};
  gru.w[1].value() = {wr};
  gru.b[1].value() = {br};
  gru.w[2].value() = {wn};
  gru.b[2].value() = {bn};
  // recurrent weights are irrelevant at step 1 with h0 = 0
  gru.r[0].value() = {9.0};
  gru.r[1].value() = {-9.0};
  gru.r[2].value() = {4.0};

  auto hs = gru.forward({Tensor::from({1, 1}, {x})});
  const double z = sigmoid_scalar(x * wz + bz);
  const double n = std::tanh(x * wn + bn);  // reset gate scales h0 = 0
  const double expect = (1.0 - z) * n;
  CHECK(hs[0].value()[0] == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("single LSTM step matches hand-evaluated scalar closed form") {
  RecurrentLayer lstm(CellType::lstm, 1, 1);
  const double wi = 0.3, bi = 0.1, wf = 0.7, bf = 1.0, wg = -0.6, bg = 0.2, wo = 0.4, bo = -0.3;
  const double x = -0.8;
  lstm.w[0].value() = {wi};
  lstm.b[0].value() = {bi};
  lstm.w[1].value() = {wf};
  lstm.b[1].value() = {bf};
  lstm.w[2].value() = {wg};
  lstm.b[2].value() = {bg};
  lstm.w[3].value() = {wo};
  lstm.b[3].value() = {bo};

  auto hs = lstm.forward({Tensor::from({1, 1}, {x})});
  const double i = sigmoid_scalar(x * wi + bi);
  const double g = std::tanh(x * wg + bg);
  const double o = sigmoid_scalar(x * wo + bo);
  const double c = i * g;  // f gate scales c0 = 0
  CHECK(hs[0].value()[0] == Catch::Approx(o * std::tanh(c)).epsilon(1e-12));
}

TEST_CASE("recurrent layer rejects mismatched feature width") {
  RecurrentLayer gru(CellType::gru, 3, 4);
  CHECK_THROWS_AS(gru.forward({Tensor::zeros({1, 2})}), ShapeError);
  CHECK_THROWS_AS(gru.forward({}), ShapeError);
}

TEST_CASE("attention over identical states is uniform") {
  std::mt19937_64 rng(3);
  AttentionLayer attn(4);
  attn.w.value() = random_vec(16, rng);
  attn.b.value() = random_vec(4, rng);
  attn.v.value() = random_vec(4, rng);
  Tensor h = Tensor::from({1, 4}, {0.3, -0.2, 0.9, 0.1});
  std::vector<Tensor> hs(6, h);
  auto out = attn.forward(hs);
  for (std::size_t t = 0; t < 6; ++t)
    CHECK(out.weights.value()[t] == Catch::Approx(1.0 / 6.0));
  for (std::size_t u = 0; u < 4; ++u)
    CHECK(out.context.value()[u] == Catch::Approx(h.value()[u]));
}

TEST_CASE("attention over a single step gives weight one") {
  AttentionLayer attn(3);
  Tensor h = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  auto out = attn.forward({h});
  CHECK(out.weights.value()[0] == Catch::Approx(1.0));
  CHECK(out.context.value() == h.value());
  CHECK_THROWS_AS(attn.forward({}), ShapeError);
}

TEST_CASE("attention context matches the explicit weighted-sum oracle") {
  const std::size_t L = 16, U = 8;
  std::mt19937_64 rng(77);
  AttentionLayer attn(U);
  attn.w.value() = random_vec(U * U, rng);
  attn.b.value() = random_vec(U, rng);
  attn.v.value() = random_vec(U, rng);
  std::vector<std::vector<double>> h(L);
  std::vector<Tensor> hs;
  for (std::size_t t = 0; t < L; ++t) {
    h[t] = random_vec(U, rng);
    hs.push_back(Tensor::from({1, U}, h[t]));
  }
  auto out = attn.forward(hs);

  // oracle: scores via plain loops, softmax, weighted sum
  std::vector<double> scores(L);
  for (std::size_t t = 0; t < L; ++t) {
    double e = 0.0;
    for (std::size_t j = 0; j < U; ++j) {
      double pre = attn.b.value()[j];
      for (std::size_t i = 0; i < U; ++i) pre += h[t][i] * attn.w.value()[i * U + j];
      e += std::tanh(pre) * attn.v.value()[j];
    }
    scores[t] = e;
  }
  const double mx = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    denom += s;
  }
  std::vector<double> context(U, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const double alpha = scores[t] / denom;
    CHECK(std::fabs(out.weights.value()[t] - alpha) < 1e-12);
    for (std::size_t u = 0; u < U; ++u) context[u] += alpha * h[t][u];
  }
  for (std::size_t u = 0; u < U; ++u)
    CHECK(std::fabs(out.context.value()[u] - context[u]) < 1e-12);
}

TEST_CASE("attention weights are a distribution on random networks") {
  std::mt19937_64 rng(5);
  NetworkConfig cfg = default_network_config();
  cfg.window = 32;
  Network net(cfg);
  net.init_params(1234);
  const std::size_t L = cfg.sequence_length();
  for (int trial = 0; trial < 100; ++trial) {
    Tensor window = Tensor::from({1, 32}, random_vec(32, rng, 0.0, 1.0));
    auto out = net.forward(window);
    REQUIRE(out.attention_weights.shape() == Shape{1, L});
    double s = 0.0;
    for (double a : out.attention_weights.value()) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      s += a;
    }
    CHECK(std::fabs(s - 1.0) <= 1e-6);
  }
}

TEST_CASE("permuting the hidden sequence permutes the weights identically") {
  const std::size_t L = 7, U = 5;
  std::mt19937_64 rng(13);
  AttentionLayer attn(U);
  attn.w.value() = random_vec(U * U, rng);
  attn.b.value() = random_vec(U, rng);
  attn.v.value() = random_vec(U, rng);
  std::vector<Tensor> hs;
  for (std::size_t t = 0; t < L; ++t) hs.push_back(Tensor::from({1, U}, random_vec(U, rng)));
  auto base = attn.forward(hs);

  std::vector<std::size_t> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Tensor> permuted;
  for (std::size_t t = 0; t < L; ++t) permuted.push_back(hs[perm[t]]);
  auto shuffled = attn.forward(permuted);

  for (std::size_t t = 0; t < L; ++t)
    CHECK(shuffled.weights.value()[t] == Catch::Approx(base.weights.value()[perm[t]]));
  for (std::size_t u = 0; u < U; ++u)
    CHECK(shuffled.context.value()[u] == Catch::Approx(base.context.value()[u]).margin(1e-12));
}

TEST_CASE("single-step forecast head has exactly one output neuron") {
  NetworkConfig cfg = default_network_config();
  cfg.window = 16;
  cfg.horizon = 1;
  cfg.target_count = 1;
  Network net(cfg);
  CHECK(net.output_layer().weight.shape()[1] == 1);
  CHECK(net.output_layer().bias.numel() == 1);
  Tensor window = Tensor::zeros({1, 16});
  CHECK(net.forward(window).prediction.numel() == 1);
}

TEST_CASE("zero-initialized network predicts its output bias") {
  NetworkConfig cfg = default_network_config();
  cfg.window = 16;
  Network net(cfg);  // all parameters zero
  net.output_layer().bias.value() = {0.37};
  std::mt19937_64 rng(9);
  Tensor window = Tensor::from({1, 16}, random_vec(16, rng));
  CHECK(net.forward(window).prediction.value()[0] == Catch::Approx(0.37));
}

TEST_CASE("two conv layers shrink the attention span to W minus kernels") {
  NetworkConfig cfg;
  cfg.window = 32;
  cfg.conv = {{4, 5, Activation::relu}, {4, 3, Activation::relu}};
  cfg.recurrent = {{CellType::gru, 8}};
  cfg.attention = true;
  CHECK(cfg.sequence_length() == 26);  // 32 - 4 - 2
  Network net(cfg);
  net.init_params(7);
  Tensor window = Tensor::zeros({2, 32});
  auto out = net.forward(window);
  CHECK(out.attention_weights.shape() == Shape{2, 26});
}

TEST_CASE("conv output length arithmetic holds for random stacks") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    NetworkConfig cfg;
    cfg.window = 24 + static_cast<std::size_t>(rng() % 40);
    std::size_t eaten = 0;
    const std::size_t layers = rng() % 3;
    for (std::size_t i = 0; i < layers; ++i) {
      const std::size_t k = 2 + rng() % 4;
      cfg.conv.push_back({2, k, Activation::tanh});
      eaten += k - 1;
    }
    cfg.recurrent = {{CellType::gru, 4}};
    REQUIRE(cfg.sequence_length() == cfg.window - eaten);
    Network net(cfg);
    net.init_params(trial);
    auto out = net.forward(Tensor::zeros({1, cfg.window}));
    CHECK(out.attention_weights.shape()[1] == cfg.window - eaten);
  }
}

TEST_CASE("a conv stack that consumes the whole window is rejected") {
  NetworkConfig cfg;
  cfg.window = 6;
  cfg.conv = {{2, 4, Activation::relu}, {2, 4, Activation::relu}};
  cfg.recurrent = {{CellType::gru, 4}};
  CHECK_THROWS_MATCHES(
      Network(cfg), ConfigError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("consumes")));
}

TEST_CASE("attention without a recurrent layer is rejected") {
  NetworkConfig cfg;
  cfg.window = 8;
  cfg.attention = true;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init_params is deterministic per seed") {
  NetworkConfig cfg = default_network_config();
  cfg.window = 16;
  Network a(cfg), b(cfg), c(cfg);
  a.init_params(99);
  b.init_params(99);
  c.init_params(100);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i].tensor.value() == pb[i].tensor.value();
    any_diff = any_diff || pa[i].tensor.value() != pc[i].tensor.value();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("glorot bound for equal fans is one") {
  NetworkConfig cfg;
  cfg.window = 3;
  cfg.channels = 1;
  cfg.dense = {3};
  cfg.attention = false;
  // dense layer maps the 3-sample flattened window to width 3: fan 3 + 3
  Network net(cfg);
  net.init_params(4);
  for (NamedParam& p : net.parameters()) {
    if (p.name != "dense0.weight") continue;
    REQUIRE(p.tensor.shape() == Shape{3, 3});
    for (double v : p.tensor.value()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("lstm forget-gate bias initializes to one") {
  NetworkConfig cfg;
  cfg.window = 8;
  cfg.recurrent = {{CellType::lstm, 4}};
  cfg.attention = false;
  Network net(cfg);
  net.init_params(11);
  for (NamedParam& p : net.parameters()) {
    if (p.name == "rnn0.b_f")
      for (double v : p.tensor.value()) CHECK(v == 1.0);
    else if (p.name == "rnn0.b_i" || p.name == "rnn0.b_g" || p.name == "rnn0.b_o")
      for (double v : p.tensor.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("every layer passes grad check on five seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto rows = run_gradcheck_suite(seed);
    for (const auto& row : rows) {
      INFO("seed " << seed << " " << row.name << " max rel error " << row.max_rel_error);
      CHECK(row.pass);
    }
  }
}

TEST_CASE("random LSTM end-to-end grad check at 1e-4") {
  std::mt19937_64 rng(55);
  RecurrentLayer lstm(CellType::lstm, 2, 3);
  for (std::size_t g = 0; g < 4; ++g) {
    lstm.w[g].value() = random_vec(6, rng);
    lstm.r[g].value() = random_vec(9, rng);
    lstm.b[g].value() = random_vec(3, rng, -0.5, 0.5);
  }
  Tensor x = Tensor::from({2, 10}, random_vec(20, rng));
  auto report = grad_check(
      [&](const Tensor& t) { return mean(lstm.forward(detail::to_steps(t, 5, 2)).back()); }, x);
  CHECK(report.max_rel_error < 1e-4);
}
