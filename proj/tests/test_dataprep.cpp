#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "shmd/dataprep.hpp"

using namespace shmd;

namespace {

TimeSeries series_from(std::vector<std::vector<double>> rows, double fs = 100.0) {
  TimeSeries ts;
  ts.channels = rows.size();
  ts.samples = rows[0].size();
  ts.sample_rate_hz = fs;
  for (std::size_t c = 0; c < ts.channels; ++c) {
    ts.channel_names.push_back("s" + std::to_string(c + 1));
    ts.values.insert(ts.values.end(), rows[c].begin(), rows[c].end());
  }
  return ts;
}

// Enumeration oracle: walk start positions and count the fitting windows.
std::size_t count_windows_oracle(std::size_t T, std::size_t W, std::size_t H,
                                 std::size_t stride, Task task) {
  std::size_t n = 0;
  for (std::size_t s = 0;; s += stride) {
    const std::size_t last = (task == Task::forecast) ? s + W + H : s + W;
    if (last > T) break;
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("fit_normalizer records per-channel extrema over the interval only") {
  TimeSeries ts = series_from({{2, 4, 6, 1000, -1000}});
  NormState norm = fit_normalizer(ts, {0, 3});
  CHECK(norm.min[0] == 2);
  CHECK(norm.max[0] == 6);
  CHECK_FALSE(norm.degenerate[0]);
}

TEST_CASE("constant channels are flagged degenerate") {
  TimeSeries ts = series_from({{5, 5, 5}});
  NormState norm = fit_normalizer(ts, {0, 3});
  CHECK(norm.degenerate[0]);
  TimeSeries normed = normalize(ts, norm);
  for (std::size_t t = 0; t < 3; ++t) CHECK(normed.at(0, t) == 0.0);
  TimeSeries back = denormalize(normed, norm);
  for (std::size_t t = 0; t < 3; ++t) CHECK(back.at(0, t) == 5.0);
}

TEST_CASE("channels are fitted independently") {
  TimeSeries ts = series_from({{0, 1, 2}, {10, 30, 20}});
  NormState norm = fit_normalizer(ts, {0, 3});
  CHECK(norm.min[0] == 0);
  CHECK(norm.max[0] == 2);
  CHECK(norm.min[1] == 10);
  CHECK(norm.max[1] == 30);
}

TEST_CASE("fit_normalizer rejects empty or out-of-range intervals") {
  TimeSeries ts = series_from({{1, 2, 3}});
  CHECK_THROWS_AS(fit_normalizer(ts, {2, 2}), ConfigError);
  CHECK_THROWS_AS(fit_normalizer(ts, {0, 4}), ConfigError);
}

TEST_CASE("min-max maps extrema to 0 and 1") {
  TimeSeries ts = series_from({{2, 4, 6}});
  NormState norm = fit_normalizer(ts, {0, 3});
  TimeSeries normed = normalize(ts, norm);
  CHECK(normed.at(0, 0) == Catch::Approx(0.0));
  CHECK(normed.at(0, 1) == Catch::Approx(0.5));
  CHECK(normed.at(0, 2) == Catch::Approx(1.0));
}

TEST_CASE("denormalize inverts normalize within 1e-9") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  TimeSeries ts = TimeSeries::zeros(2, 64, 10.0);
  for (double& v : ts.values) v = dist(rng);
  NormState norm = fit_normalizer(ts, {0, 64});
  TimeSeries back = denormalize(normalize(ts, norm), norm);
  for (std::size_t i = 0; i < ts.values.size(); ++i)
    CHECK(std::fabs(back.values[i] - ts.values[i]) <= 1e-9);
}

TEST_CASE("values outside the fitted range may leave [0,1]") {
  TimeSeries fitted = series_from({{0, 10}});
  NormState norm = fit_normalizer(fitted, {0, 2});
  TimeSeries wild = series_from({{-5, 15}});
  TimeSeries normed = normalize(wild, norm);
  CHECK(normed.at(0, 0) < 0.0);
  CHECK(normed.at(0, 1) > 1.0);
  TimeSeries back = denormalize(normed, norm);
  CHECK(back.at(0, 0) == Catch::Approx(-5.0));
  CHECK(back.at(0, 1) == Catch::Approx(15.0));
}

TEST_CASE("normalize rejects channel mismatch") {
  TimeSeries one = series_from({{1, 2}});
  TimeSeries two = series_from({{1, 2}, {3, 4}});
  NormState norm = fit_normalizer(one, {0, 2});
  CHECK_THROWS_AS(normalize(two, norm), ShapeError);
}

TEST_CASE("forecast window count T=10 W=3 H=1 stride=1") {
  TimeSeries ts = series_from({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}});
  NormState norm = fit_normalizer(ts, {0, 10});
  WindowSet ws = make_windows(ts, nullptr, 3, 1, 1, Task::forecast, {}, norm);
  CHECK(ws.count == 7);
  // first pair: inputs {0,1,2} -> target {3}, all normalized by min 0 max 9
  CHECK(ws.input_row(0)[2] == Catch::Approx(2.0 / 9.0));
  CHECK(ws.target_row(0)[0] == Catch::Approx(3.0 / 9.0));
  // windows overlap: second window starts one sample later
  CHECK(ws.input_row(1)[0] == Catch::Approx(1.0 / 9.0));
}

TEST_CASE("window spanning the whole series leaves no forecast target") {
  TimeSeries ts = series_from({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}});
  NormState norm = fit_normalizer(ts, {0, 10});
  CHECK_THROWS_AS(make_windows(ts, nullptr, 10, 1, 1, Task::forecast, {}, norm), ConfigError);
}

TEST_CASE("denoise windows with stride 2 start at 0 and 2") {
  TimeSeries noisy = series_from({{1, 2, 3, 4, 5, 6}});
  TimeSeries clean = series_from({{10, 20, 30, 40, 50, 60}});
  NormState norm = fit_normalizer(noisy, {0, 6});
  WindowSet ws = make_windows(noisy, &clean, 4, 1, 2, Task::denoise, {}, norm);
  CHECK(ws.count == 2);
  CHECK(ws.starts == std::vector<std::size_t>{0, 2});
  // causal target: clean value at the last window position
  CHECK(ws.target_row(0)[0] == Catch::Approx(norm.apply(0, 40.0)));
  CHECK(ws.target_row(1)[0] == Catch::Approx(norm.apply(0, 60.0)));
}

TEST_CASE("denoise task requires a clean reference of identical shape") {
  TimeSeries noisy = series_from({{1, 2, 3, 4}});
  NormState norm = fit_normalizer(noisy, {0, 4});
  CHECK_THROWS_AS(make_windows(noisy, nullptr, 2, 1, 1, Task::denoise, {}, norm), ConfigError);
  TimeSeries other = series_from({{1, 2, 3}});
  CHECK_THROWS_AS(make_windows(noisy, &other, 2, 1, 1, Task::denoise, {}, norm), ShapeError);
}

TEST_CASE("nonpositive window or horizon is rejected") {
  TimeSeries ts = series_from({{1, 2, 3, 4}});
  NormState norm = fit_normalizer(ts, {0, 4});
  CHECK_THROWS_AS(make_windows(ts, nullptr, 0, 1, 1, Task::forecast, {}, norm), ConfigError);
  CHECK_THROWS_AS(make_windows(ts, nullptr, 2, 0, 1, Task::forecast, {}, norm), ConfigError);
}

TEST_CASE("window count formula matches enumeration across the sweep") {
  // T <= 64, W <= 16, H <= 4, stride <= 4, both tasks
  TimeSeries big = TimeSeries::zeros(1, 64, 10.0);
  for (std::size_t t = 0; t < 64; ++t) big.at(0, t) = static_cast<double>(t);
  TimeSeries clean = big;
  for (std::size_t T = 2; T <= 64; ++T) {
    TimeSeries ts = TimeSeries::zeros(1, T, 10.0);
    for (std::size_t t = 0; t < T; ++t) ts.at(0, t) = static_cast<double>(t);
    NormState norm = fit_normalizer(ts, {0, T});
    for (std::size_t W = 1; W <= 16; ++W)
      for (std::size_t H = 1; H <= 4; ++H)
        for (std::size_t stride = 1; stride <= 4; ++stride)
          for (Task task : {Task::forecast, Task::denoise}) {
            if (task == Task::denoise && H > W) continue;
            const std::size_t expect = count_windows_oracle(T, W, H, stride, task);
            if (expect == 0) {
              CHECK_THROWS_AS(
                  make_windows(ts, &ts, W, H, stride, task, {}, norm), ConfigError);
            } else {
              WindowSet ws = make_windows(ts, &ts, W, H, stride, task, {}, norm);
              if (ws.count != expect) {
                CAPTURE(T, W, H, stride, static_cast<int>(task));
                REQUIRE(ws.count == expect);
              }
            }
          }
  }
  SUCCEED("sweep done");
}

TEST_CASE("with stride 1 the closed forms hold") {
  TimeSeries ts = TimeSeries::zeros(1, 40, 10.0);
  for (std::size_t t = 0; t < 40; ++t) ts.at(0, t) = std::sin(0.3 * static_cast<double>(t));
  NormState norm = fit_normalizer(ts, {0, 40});
  WindowSet f = make_windows(ts, nullptr, 8, 3, 1, Task::forecast, {}, norm);
  CHECK(f.count == 40 - 8 - 3 + 1);
  WindowSet d = make_windows(ts, &ts, 8, 3, 1, Task::denoise, {}, norm);
  CHECK(d.count == 40 - 8 + 1);
}

TEST_CASE("window entries lie in [0,1] when fitted on the same interval") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  TimeSeries ts = TimeSeries::zeros(2, 50, 10.0);
  for (double& v : ts.values) v = dist(rng);
  NormState norm = fit_normalizer(ts, {0, 50});
  WindowSet ws = make_windows(ts, &ts, 6, 2, 1, Task::denoise, {}, norm);
  for (double v : ws.inputs) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (double v : ws.targets) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("normalizer fitted on train never reads other splits") {
  TimeSeries ts = series_from({{1, 2, 3, 4, 5, 6, 7, 1e9, -1e9, 0}});
  auto splits = split_chronological(10, {0.7, 0.15, 0.15});
  REQUIRE(splits[0].size() == 7);
  NormState norm = fit_normalizer(ts, splits[0]);
  CHECK(norm.min[0] == 1.0);
  CHECK(norm.max[0] == 7.0);
  CHECK(splits[0].contains(IndexInterval{0, 7}));
}

TEST_CASE("chronological split arithmetic") {
  auto splits = split_chronological(100, {0.7, 0.15, 0.15});
  CHECK(splits[0].begin == 0);
  CHECK(splits[0].end == 70);
  CHECK(splits[1].begin == 70);
  CHECK(splits[1].end == 85);
  CHECK(splits[2].begin == 85);
  CHECK(splits[2].end == 100);
}

TEST_CASE("split fractions must sum to one") {
  CHECK_THROWS_AS(split_chronological(100, {0.5, 0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(split_chronological(100, {0.7, -0.1, 0.4}), ConfigError);
}

TEST_CASE("splits shorter than a window are rejected") {
  // T=10 with W=8, H=1: every split falls below W+H = 9
  CHECK_THROWS_MATCHES(split_chronological(10, {0.7, 0.15, 0.15}, 9), ConfigError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("split")));
  // T=100 with the same needs: only validation (15 samples) vs W+H=16 fails
  CHECK_THROWS_MATCHES(split_chronological(100, {0.7, 0.15, 0.15}, 16), ConfigError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("validation")));
}
