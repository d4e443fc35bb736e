#include <doctest.h>

#include <cmath>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/perfmodel.hpp"
#include "burstscale/random.hpp"
#include "oracles.hpp"

using namespace burstscale;
using namespace burstscale::perf;

namespace {

std::vector<PerfSample> ratio_samples(Rng& rng, std::size_t n) {
  std::vector<PerfSample> out(n);
  for (auto& s : out) {
    s.instances = 1 + static_cast<int>(uniform_index(rng, 10));
    s.workload = uniform(rng, 0, 10);
    s.response_time = 10.0 * s.workload / s.instances + uniform(rng, -0.1, 0.1);
  }
  return out;
}

double raw_oracle(const SvrModel& m, double instances, double workload) {
  const double z0 = (instances - m.feature_mean()[0]) / m.feature_scale()[0];
  const double z1 = (workload - m.feature_mean()[1]) / m.feature_scale()[1];
  return oracle::kernel_expansion(m.support_vectors(), m.coefficients(), m.bias(), m.gamma(), z0, z1);
}

/// Kernel ridge regression with the best (gamma, lambda) on a grid, scored on the held-out set.
double kernel_ridge_rmse(const std::vector<PerfSample>& train, const std::vector<PerfSample>& test) {
  const auto n = static_cast<Eigen::Index>(train.size());
  Eigen::MatrixX2d X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) << train[i].instances, train[i].workload;
    y[i] = train[i].response_time;
  }
  const Eigen::RowVector2d mu = X.colwise().mean();
  const Eigen::RowVector2d sd = ((X.rowwise() - mu).array().square().colwise().mean()).sqrt();
  const Eigen::MatrixX2d Z = (X.rowwise() - mu).array().rowwise() / sd.array();
  double best = INFINITY;
  for (double gamma : {0.1, 0.3, 1.0, 3.0, 10.0}) {
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) K(i, j) = std::exp(-gamma * (Z.row(i) - Z.row(j)).squaredNorm());
    for (double lambda : {1e-4, 1e-3, 1e-2, 1e-1}) {
      const Eigen::VectorXd a = (K + lambda * Eigen::MatrixXd::Identity(n, n)).ldlt().solve(y);
      double se = 0;
      for (const auto& s : test) {
        const Eigen::RowVector2d z = (Eigen::RowVector2d(s.instances, s.workload) - mu).array() / sd.array();
        double f = 0;
        for (Eigen::Index i = 0; i < n; ++i) f += a[i] * std::exp(-gamma * (Z.row(i) - z).squaredNorm());
        const double truth = 10.0 * s.workload / s.instances;
        se += (f - truth) * (f - truth);
      }
      best = std::min(best, std::sqrt(se / static_cast<double>(test.size())));
    }
  }
  return best;
}

double holdout_rmse(const SvrModel& m, const std::vector<PerfSample>& test) {
  double se = 0;
  for (const auto& s : test) {
    const double e = m.predict(s.instances, s.workload) - 10.0 * s.workload / s.instances;
    se += e * e;
  }
  return std::sqrt(se / static_cast<double>(test.size()));
}

}  // namespace

TEST_CASE("rbf kernel examples") {
  const Eigen::Vector2d a(0, 0), b(1, 1);
  CHECK(rbf_kernel(a, a, 0.5) == 1.0);
  CHECK(rbf_kernel(a, b, 0.5) == doctest::Approx(std::exp(-1.0)));
  CHECK(rbf_kernel(a, b, 0.5) == doctest::Approx(0.367879).epsilon(1e-6));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d x(uniform(rng, -5, 5), uniform(rng, -5, 5)), z(uniform(rng, -5, 5), uniform(rng, -5, 5));
    const double g = uniform(rng, 0.01, 3);
    CHECK(rbf_kernel(x, z, g) == rbf_kernel(z, x, g));
    CHECK(rbf_kernel(x, z, g) > 0.0);
    CHECK(rbf_kernel(x, z, g) <= 1.0);
  }
}

TEST_CASE("single support vector and bias-only models") {
  Eigen::MatrixX2d sv(1, 2);
  sv << 0, 0;
  Eigen::VectorXd coef(1);
  coef << 1.0;
  const SvrModel one(sv, coef, 0.0, 1.0, Eigen::RowVector2d(4, 300), Eigen::RowVector2d(1, 1));
  CHECK(one.predict(4, 300) == doctest::Approx(1.0));
  const SvrModel bias_only(Eigen::MatrixX2d(0, 2), Eigen::VectorXd(0), 7.5, 1.0, Eigen::RowVector2d(0, 0),
                           Eigen::RowVector2d(1, 1));
  CHECK(bias_only.predict(1, 0) == 7.5);
  CHECK(bias_only.predict(50, 1e4) == 7.5);
}

TEST_CASE("constant targets are fitted exactly") {
  Rng rng(2);
  std::vector<PerfSample> s(40);
  for (auto& x : s) x = {1 + static_cast<int>(uniform_index(rng, 20)), uniform(rng, 0, 900), 12.5};
  for (double C : {0.1, 1.0, 100.0}) {
    SvrConfig cfg;
    cfg.C = C;
    const auto m = train_svr(s, cfg);
    for (int i = 0; i < 50; ++i) CHECK(std::abs(m.predict(1 + uniform_index(rng, 20), uniform(rng, 0, 900)) - 12.5) < 1e-6);
  }
}

TEST_CASE("SVR fits the ratio model to held-out accuracy") {
  // At C = 100 most coefficients sit at the bound on this target range; C = 1000 lifts it.
  Rng rng(3);
  const auto train = ratio_samples(rng, 200);
  const auto test = ratio_samples(rng, 500);
  SvrConfig cfg;
  cfg.epsilon = 0.2;
  cfg.C = 1000;
  const auto m = train_svr(train, cfg);
  CHECK(m.converged);
  const double krr = kernel_ridge_rmse(train, test);
  CHECK(holdout_rmse(m, test) <= 1.0);
  CHECK(holdout_rmse(m, test) <= 5 * krr);
  cfg.C = 100;
  CHECK(holdout_rmse(train_svr(train, cfg), test) <= 3.0);
}

TEST_CASE("SMO solution satisfies the epsilon-KKT conditions") {
  Rng rng(4);
  for (int round = 0; round < 5; ++round) {
    const auto train = ratio_samples(rng, 120);
    SvrConfig cfg;
    cfg.epsilon = 0.2;
    cfg.C = round == 0 ? 1.0 : 100.0;  // a small C leaves coefficients at the bound
    const auto m = train_svr(train, cfg);
    REQUIRE(m.converged);
    const double tol = 1e-3;
    for (const auto& s : train) {
      const Eigen::RowVector2d z = m.standardize(s.instances, s.workload);
      double beta = 0;
      for (Eigen::Index r = 0; r < m.support_vectors().rows(); ++r) {
        if ((m.support_vectors().row(r) - z).norm() < 1e-12) beta = m.coefficients()[r];
      }
      CHECK(std::abs(beta) <= cfg.C + 1e-12);
      const double res = s.response_time - m.predict(s.instances, s.workload);
      if (std::abs(beta) < cfg.C - 1e-9) {
        CHECK(std::abs(res) <= cfg.epsilon + tol);
        if (beta != 0) CHECK(std::abs(std::abs(res) - cfg.epsilon) <= tol);
      } else if (beta > 0) {
        CHECK(res >= cfg.epsilon - tol);
      } else {
        CHECK(res <= -cfg.epsilon + tol);
      }
    }
  }
}

TEST_CASE("duplicating every sample leaves predictions nearly unchanged") {
  Rng rng(5);
  const auto train = ratio_samples(rng, 80);
  auto twice = train;
  twice.insert(twice.end(), train.begin(), train.end());
  // No coefficient reaches the bound at this C, so the regression function is unique.
  SvrConfig cfg;
  cfg.epsilon = 0.2;
  cfg.C = 1e4;
  cfg.gamma = 2.0;
  cfg.tolerance = 1e-6;
  const auto a = train_svr(train, cfg);
  REQUIRE(a.coefficients().cwiseAbs().maxCoeff() < cfg.C);
  const auto b = train_svr(twice, cfg);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 10));
    const double wl = uniform(rng, 0, 10);
    worst = std::max(worst, std::abs(a.predict(n, wl) - b.predict(n, wl)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("predict_rt matches the kernel-sum oracle") {
  Rng rng(6);
  const auto m = train_svr(ratio_samples(rng, 150), SvrConfig{100, 0.2});
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 20));
    const double wl = uniform(rng, -5, 20);
    CHECK(std::abs(predict_rt(m, n, wl) - raw_oracle(m, n, wl)) <= 1e-9);
  }
}

TEST_CASE("predictions are Lipschitz in the workload") {
  Rng rng(7);
  const auto m = train_svr(ratio_samples(rng, 150), SvrConfig{100, 0.2});
  // |d/dz exp(-g z^2)| <= sqrt(2 g / e)
  const double L = m.coefficients().cwiseAbs().sum() * std::sqrt(2 * m.gamma() / std::exp(1.0)) / m.feature_scale()[1];
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 10));
    const double wl = uniform(rng, 0, 10), dw = uniform(rng, -0.5, 0.5);
    CHECK(std::abs(m.predict(n, wl + dw) - m.predict(n, wl)) <= L * std::abs(dw) + 1e-12);
  }
}

TEST_CASE("minimum instance examples") {
  auto ratio = [](int n, double wl) { return 10.0 * wl / n; };
  CHECK(estimate_min_instances(ratio, 8.0, 16.0, 64).instances == 6);
  CHECK(!estimate_min_instances(ratio, 8.0, 16.0, 64).saturated);
  CHECK(estimate_min_instances(ratio, 0.0, 16.0, 64).instances == 1);
  const auto slow = estimate_min_instances([](int, double) { return 100.0; }, 5.0, 16.0, 20);
  CHECK(slow.instances == 20);
  CHECK(slow.saturated);
}

TEST_CASE("minimum instances agree with the exhaustive scan on trained models") {
  Rng rng(8);
  for (int round = 0; round < 100; ++round) {
    std::vector<PerfSample> s(30);
    const double a = uniform(rng, 2, 20), c = uniform(rng, -3, 3);
    for (auto& x : s) {
      x.instances = 1 + static_cast<int>(uniform_index(rng, 16));
      x.workload = uniform(rng, 0, 20);
      x.response_time = a * x.workload / x.instances + c * std::sin(x.instances) + uniform(rng, 0, 1);
    }
    const auto m = train_svr(s, SvrConfig{100, 0.3});
    const double wl = uniform(rng, 0, 20), slo = uniform(rng, 2, 30);
    const int in_max = 1 + static_cast<int>(uniform_index(rng, 32));
    const auto got = estimate_min_instances(m, wl, slo, in_max);
    const auto want = oracle::min_instances_scan([&](int n, double w) { return raw_oracle(m, n, w); }, wl, slo, in_max);
    CHECK(got.instances == want.first);
    CHECK(got.saturated == want.second);
  }
}

TEST_CASE("SVR models round-trip through serialization") {
  Rng rng(9);
  const auto m = train_svr(ratio_samples(rng, 60), SvrConfig{100, 0.2});
  const auto text = serialize(m);
  const auto back = deserialize_svr(text);
  CHECK(serialize(back) == text);
  for (int i = 0; i < 50; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 10));
    const double wl = uniform(rng, 0, 10);
    CHECK(back.predict(n, wl) == m.predict(n, wl));
  }
}

TEST_CASE("training rejects degenerate input") {
  CHECK_THROWS_AS(train_svr(std::vector<PerfSample>{{1, 1, 1}}), ValidationError);
  SvrConfig bad;
  bad.C = -1;
  CHECK_THROWS_AS(train_svr(std::vector<PerfSample>{{1, 1, 1}, {2, 2, 2}}, bad), ValidationError);
}

TEST_CASE("iteration cap returns an unconverged model") {
  Rng rng(10);
  SvrConfig cfg;
  cfg.epsilon = 0.01;
  cfg.max_iterations = 3;
  const auto m = train_svr(ratio_samples(rng, 50), cfg);
  CHECK(!m.converged);
  CHECK(m.iterations == 3);
}

TEST_CASE("sample csv parsing") {
  std::istringstream in("instances,workload,response_time\n2,100,7.5\n3,150.5,8\n");
  const auto s = parse_samples_csv(in);
  REQUIRE(s.size() == 2);
  CHECK(s[1].instances == 3);
  CHECK(s[1].workload == 150.5);
  std::ostringstream out;
  write_samples_csv(out, s);
  std::istringstream again(out.str());
  CHECK(parse_samples_csv(again)[0].response_time == 7.5);
  std::istringstream bad("instances,workload,response_time\n2,100,7.5\n0,1,1\n");
  try {
    parse_samples_csv(bad);
    FAIL("expected a RowError");
  } catch (const RowError& e) {
    CHECK(e.row() == 2);
  }
}
