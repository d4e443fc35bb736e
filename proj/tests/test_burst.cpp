#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "burstscale/burst.hpp"
#include "burstscale/common.hpp"
#include "burstscale/random.hpp"
#include "oracles.hpp"

using namespace burstscale;
using namespace burstscale::burst;
using forecast::IntervalForecast;
using forecast::QuantileTriple;

namespace {

DetectorConfig config_k(std::size_t k, std::size_t n) {
  DetectorConfig c;
  c.history = k;
  c.nearest = n;
  return c;
}

std::vector<bool> to_bool(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("deviation distance examples") {
  const QuantileTriple q{50, 75, 100};
  CHECK(deviation_distance(q, 120) == doctest::Approx(0.2));
  CHECK(deviation_distance(q, 40) == doctest::Approx(0.2));
  CHECK(deviation_distance(q, 75) == 0.0);
  CHECK(deviation_distance(q, 100) == 0.0);
  CHECK(deviation_distance(q, 50) == 0.0);
  CHECK_THROWS_AS(deviation_distance({0, 1, 2}, 1), ValidationError);
  CHECK_THROWS_AS(deviation_distance({3, 2, 1}, 1), ValidationError);
}

TEST_CASE("deviation distance is scale invariant") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double low = uniform(rng, 1, 100), up = low + uniform(rng, 0, 100), y = uniform(rng, 0, 300);
    const double a = uniform(rng, 0.01, 100);
    CHECK(deviation_distance({a * low, a * low, a * up}, a * y) ==
          doctest::Approx(deviation_distance({low, low, up}, y)).epsilon(1e-12));
  }
}

TEST_CASE("window indices examples") {
  CHECK(window_indices(10, 9, 3, 24) == IndexRange{1, 1});
  CHECK(window_indices(10, 5, 3, 24) == IndexRange{3, 5});
  CHECK(window_indices(10, 7, 3, 24) == IndexRange{1, 3});
  CHECK_THROWS_AS(window_indices(10, 10, 3, 24), ValidationError);
  CHECK_THROWS_AS(window_indices(30, 5, 3, 24), ValidationError);
}

TEST_CASE("burst proposal examples") {
  const auto c = config_k(24, 3);
  DeviationStats s{{0.2, 0.05, 0.05}, {2, 0, 0}, {0.0, 0.05, 0.2}};
  CHECK(burst_proposals(s, c) == std::vector<bool>{true, false, true});
  // Two outliers clear n / 2 = 1.5, one does not.
  DeviationStats t{{0.5, 0.5}, {1, 2}, {0, 0}};
  CHECK(burst_proposals(t, c) == std::vector<bool>{false, true});
}

TEST_CASE("detect_burst examples") {
  const auto c = config_k(5, 3);
  {
    const std::vector<int> O{0, 0, 0, 0, 2};
    CHECK(detect_burst(to_bool({0, 0, 0, 1, 0}), O, to_bool({0, 0, 0, 0, 0}), c));
  }
  {
    const std::vector<int> O{0, 0, 0, 0, 5};
    CHECK(!detect_burst(to_bool({0, 0, 0, 0, 0}), O, to_bool({0, 0, 0, 0, 0}), c));
  }
  {
    // Burst-state proposals, oldest first: 1, 1, 0 are the last three.
    const std::vector<int> V{1, 1, 1, 0, 0}, S{0, 1, 1, 1, 1}, O{0, 0, 0, 0, 0};
    CHECK(detect_burst(to_bool(V), O, to_bool(S), c));
  }
}

TEST_CASE("detect_burst agrees with the literal rule on random inputs") {
  Rng rng(99);
  for (int round = 0; round < 20000; ++round) {
    const std::size_t n = 1 + uniform_index(rng, 5);
    const std::size_t k = n + 1 + uniform_index(rng, 25);
    const double pv = uniform01(rng), ps = uniform01(rng);
    std::vector<int> V(k), O(k), S(k);
    for (std::size_t i = 0; i < k; ++i) {
      V[i] = uniform01(rng) < pv;
      S[i] = uniform01(rng) < ps;
      O[i] = uniform01(rng) < 0.5 ? 0 : static_cast<int>(uniform_index(rng, n + 1));
    }
    REQUIRE(detect_burst(to_bool(V), O, to_bool(S), config_k(k, n)) == oracle::alg2(V, O, S, static_cast<int>(n)));
  }
}

TEST_CASE("deviation stats of a single-element window") {
  // k = 2, n = 1: the forecast issued one step ago compares its first step only.
  DetectorState state(2);
  state.observe(75);
  state.push_forecast(IntervalForecast{{{50, 75, 100}, {50, 75, 100}}});
  state.observe(75);
  state.push_forecast(IntervalForecast{{{50, 75, 100}, {50, 75, 100}}});
  state.observe(120);
  REQUIRE(state.warmed_up());
  const auto s = deviation_stats(state, config_k(2, 1));
  CHECK(s.distance[1] == doctest::Approx(0.2));
  CHECK(s.outliers[1] == 1);
  CHECK(s.loss[1] == doctest::Approx(0.5 * 45 / 120));
}

TEST_CASE("deviation stats agree with a timeline oracle") {
  Rng rng(17);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 1 + uniform_index(rng, 4);
    const std::size_t k = n + 1 + uniform_index(rng, 10);
    const std::size_t T = k + 5 + uniform_index(rng, 20);
    std::vector<double> y(T + 1);
    std::vector<IntervalForecast> F(T + 1);
    for (auto& v : y) v = uniform(rng, 0.5, 200);
    for (auto& f : F) {
      for (std::size_t s = 0; s < k; ++s) {
        double a = uniform(rng, 1, 200), b = uniform(rng, 1, 200);
        if (a > b) std::swap(a, b);
        f.steps.push_back({a, uniform(rng, a, b), b});
      }
    }
    const auto config = config_k(k, n);
    DetectorState state(k);
    for (std::size_t t = 0; t <= T; ++t) {
      state.observe(y[t]);
      if (t >= k) {
        const auto s = deviation_stats(state, config);
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t j = t - k + i;  // issue time
          const std::size_t ie = t - j, is = ie <= n ? 1 : ie - n + 1;
          double d = 0, l = 0;
          int o = 0;
          for (std::size_t step = is; step <= ie; ++step) {
            const auto& q = F[j].steps[step - 1];
            const double truth = y[j + step];
            const double di = std::max(truth - q.up, 0.0) / q.up + std::max(q.low - truth, 0.0) / q.low;
            d += di;
            o += di > 0;
            l += 0.5 * std::abs(truth - q.median) / std::max(truth, 1.0);
          }
          const double w = static_cast<double>(ie - is + 1);
          CHECK(s.distance[i] == doctest::Approx(d / w).epsilon(1e-12));
          CHECK(s.outliers[i] == o);
          CHECK(s.loss[i] == doctest::Approx(l / w).epsilon(1e-12));
        }
      }
      state.push_verdict(false);
      state.push_forecast(F[t]);
    }
  }
}

TEST_CASE("all truths inside the intervals give zero distance and outliers") {
  DetectorState state(4);
  for (int t = 0; t < 8; ++t) {
    state.observe(100);
    state.push_forecast(IntervalForecast{std::vector<QuantileTriple>(4, {90, 100, 100})});
  }
  state.observe(100);
  const auto s = deviation_stats(state, config_k(4, 2));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s.distance[i] == 0.0);
    CHECK(s.outliers[i] == 0);
  }
}

TEST_CASE("deviation stats reject short horizons and cold state") {
  DetectorState state(4);
  CHECK_THROWS_AS(deviation_stats(state, config_k(4, 2)), ValidationError);
  for (int t = 0; t < 4; ++t) {
    state.observe(100);
    state.push_forecast(IntervalForecast{std::vector<QuantileTriple>(2, {90, 100, 110})});
  }
  state.observe(100);
  CHECK_THROWS_AS(deviation_stats(state, config_k(4, 2)), ValidationError);
}

TEST_CASE("detector stays silent under perfect forecasts and flags an onset") {
  const std::size_t k = 24;
  BurstDetector detector(config_k(k, 3));
  auto level = [](std::size_t t) { return 300.0 + 100.0 * std::sin(2 * M_PI * static_cast<double>(t % 24) / 24.0); };
  const std::size_t onset = 100;
  auto truth = [&](std::size_t t) { return level(t) * (t >= onset && t < onset + 4 ? 1.6 : 1.0); };
  for (std::size_t t = 0; t < onset + 10; ++t) {
    const auto v = detector.observe(truth(t));
    if (t < k) CHECK(!v.warmed_up);
    if (t < onset) CHECK(!v.burst);
    if (t == onset) CHECK(v.burst);
    IntervalForecast f;
    for (std::size_t s = 1; s <= k; ++s) f.steps.push_back({level(t + s), level(t + s), level(t + s)});
    detector.push_forecast(f);
  }
  CHECK(detector.state().bursts().size() == k);
}

TEST_CASE("AR(2) prediction examples") {
  CHECK(ar_predict(Ar2Model{}, 10, 8) == 12);
  CHECK(ar_predict(Ar2Model{}, 7, 7) == 7);
  CHECK(ar_predict(Ar2Model{1, 0, 0}, 123, -5) == 1);
}

TEST_CASE("AR(2) fit on a linear ramp predicts the next value") {
  std::vector<double> y(30);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = 3.0 * static_cast<double>(t);
  const auto m = fit_ar2(y);
  CHECK(std::abs(ar_predict(m, y[29], y[28]) - 90.0) < 1e-6);
}

TEST_CASE("AR(2) fit recovers generating coefficients") {
  // Oracle: normal equations solved with an LDLT factorization.
  Rng rng(6);
  for (int round = 0; round < 20; ++round) {
    const double c = uniform(rng, -5, 5), p1 = uniform(rng, 0.5, 1.5), p2 = uniform(rng, -0.8, -0.3);
    std::vector<double> y{uniform(rng, 0, 50), uniform(rng, 0, 50)};
    while (y.size() < 40) y.push_back(c + p1 * y.back() + p2 * y[y.size() - 2]);
    const auto m = fit_ar2(y);
    Eigen::MatrixXd X(38, 3);
    Eigen::VectorXd target(38);
    for (int r = 0; r < 38; ++r) {
      X.row(r) << 1.0, y[r + 1], y[r];
      target[r] = y[r + 2];
    }
    const Eigen::Vector3d beta = (X.transpose() * X).ldlt().solve(X.transpose() * target);
    CHECK(std::abs(m.c - c) < 1e-6);
    CHECK(std::abs(m.phi1 - p1) < 1e-6);
    CHECK(std::abs(m.phi2 - p2) < 1e-6);
    CHECK(std::abs(beta[1] - m.phi1) < 1e-6);
  }
}

TEST_CASE("AR(2) fit on constant input and short input") {
  const std::vector<double> flat(20, 7.0);
  const auto m = fit_ar2(flat);
  CHECK(ar_predict(m, 7, 7) == doctest::Approx(7.0));
  CHECK_THROWS_AS(fit_ar2(std::vector<double>(7, 1.0)), ValidationError);
}

TEST_CASE("AR residuals are one-step errors of the last observations") {
  const std::vector<double> y{1, 2, 4, 7, 11, 16};
  const auto r = ar_residuals(Ar2Model{}, y, 3);
  // Defaults predict 2*y[t-1] - y[t-2].
  CHECK(r == std::vector<double>{7 - 6.0, 11 - 10.0, 16 - 15.0});
  CHECK(ar_residuals(Ar2Model{}, y, 100).size() == 4);
}

TEST_CASE("bootstrap upper bound examples") {
  const std::vector<double> same(10, 3.5);
  CHECK(bootstrap_upper_ci(same, {}, 1) == 3.5);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double r = bootstrap_upper_ci(std::vector<double>{0, 10}, {}, seed);
    CHECK(r >= 0);
    CHECK(r <= 10);
  }
  const std::vector<double> res{1, -2, 5, 0.5, 3, 8, -1};
  CHECK(bootstrap_upper_ci(res, {}, 42) == bootstrap_upper_ci(res, {}, 42));
  CHECK_THROWS_AS(bootstrap_upper_ci(std::vector<double>{}, {}, 1), ValidationError);
}

TEST_CASE("bootstrap upper bound never drops when a new maximum is added") {
  Rng rng(31);
  for (int round = 0; round < 200; ++round) {
    const std::size_t n = 2 + uniform_index(rng, 30);
    std::vector<double> res(n);
    for (auto& r : res) r = uniform(rng, -10, 10);
    const double base = bootstrap_upper_ci(res, {}, static_cast<std::uint64_t>(round));
    auto more = res;
    more.push_back(*std::max_element(res.begin(), res.end()) + uniform(rng, 0, 5));
    CHECK(bootstrap_upper_ci(more, {}, static_cast<std::uint64_t>(round)) >= base);
  }
}

TEST_CASE("overestimate examples") {
  // Defaults predict 2 * 10 - 8 = 12, constant residuals bound at 4.
  const std::vector<double> recent{8, 10};
  const std::vector<double> four(6, 4.0);
  CHECK(overestimate_burst(Ar2Model{}, recent, four, {}, 1).workload == doctest::Approx(16));
  CHECK(overestimate_burst(Ar2Model{}, recent, {}, {}, 1).workload == doctest::Approx(12));
  const std::vector<double> jump{5, 20};
  const std::vector<double> one(4, 1.0);
  const auto o = overestimate_burst(Ar2Model{9, 0, 0}, jump, one, {}, 1);
  CHECK(o.ar_prediction == 9);
  CHECK(o.correction == 1);
  CHECK(o.workload == 20);
}

TEST_CASE("overestimate is at least the AR prediction for non-negative residuals") {
  Rng rng(13);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> obs(20);
    for (auto& v : obs) v = uniform(rng, 100, 900);
    std::vector<double> res(10);
    for (auto& r : res) r = uniform(rng, 0, 50);
    const auto o = overestimate_burst(fit_ar2(obs), obs, res, {}, static_cast<std::uint64_t>(round));
    CHECK(o.workload >= o.ar_prediction);
    CHECK(o.workload >= obs.back());
  }
}

TEST_CASE("handle_burst is seeded and respects the fit toggle") {
  std::vector<double> obs(200);
  Rng rng(3);
  for (std::size_t t = 0; t < obs.size(); ++t) obs[t] = 500 + 100 * std::sin(t / 4.0) + 10 * normal(rng);
  HandlerConfig h;
  const auto a = handle_burst(obs, 24, h, 77);
  const auto b = handle_burst(obs, 24, h, 77);
  CHECK(a.workload == b.workload);
  h.fit = false;
  const auto d = handle_burst(obs, 24, h, 77);
  CHECK(d.model.phi1 == 2.0);
  CHECK(d.model.phi2 == -1.0);
}
