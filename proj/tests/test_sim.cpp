#include <doctest.h>

#include <cmath>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/perfmodel.hpp"
#include "burstscale/random.hpp"
#include "burstscale/sim.hpp"
#include "burstscale/synthetic.hpp"

using namespace burstscale;
using namespace burstscale::sim;

namespace {

ClusterConfig quiet(std::size_t delay = 1) {
  ClusterConfig c;
  c.ru_noise = 0;
  c.delay = delay;
  return c;
}

StepRecord record(double rt, int instances) {
  StepRecord r;
  r.rt = rt;
  r.effective_in = instances;
  r.target_in = instances;
  r.violated = rt > 16;
  return r;
}

}  // namespace

TEST_CASE("response time examples") {
  const auto c = quiet();
  CHECK(utilization(10, 500, c) == 0.5);
  CHECK(ground_truth_rt(10, 500, c) == doctest::Approx(10.0));
  CHECK(ground_truth_rt(3, 0, c) == 5.0);
  // Linear tail above the knee with the knee's slope.
  const double kappa = 5.0 / (0.05 * 0.05);
  CHECK(ground_truth_rt(1, 120, c) == doctest::Approx(100.0 + kappa * 0.25));
}

TEST_CASE("response time is continuous at the knee and monotone") {
  const auto c = quiet();
  const double at = ground_truth_rt(1, 95, c);
  CHECK(at == doctest::Approx(100.0));
  CHECK(std::abs(ground_truth_rt(1, 95 - 1e-7, c) - at) < 1e-3);
  CHECK(std::abs(ground_truth_rt(1, 95 + 1e-7, c) - at) < 1e-3);
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 63));
    const double wl = uniform(rng, 1, 8000), dw = uniform(rng, 1e-3, 50);
    CHECK(ground_truth_rt(n, wl + dw, c) > ground_truth_rt(n, wl, c));
    CHECK(ground_truth_rt(n + 1, wl, c) < ground_truth_rt(n, wl, c));
  }
}

TEST_CASE("utilization measurement") {
  auto c = quiet();
  CHECK(ground_truth_ru(10, 500, c, 0) == 0.5);
  CHECK(ground_truth_ru(1, 140, c, 0) == 1.0 - 1e-6);
  c.ru_noise = 0.02;
  c.seed = 9;
  Rng rng(2);
  for (std::uint64_t step = 0; step < 2000; ++step) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 20));
    const double wl = uniform(rng, 0, 2500);
    const double ru = ground_truth_ru(n, wl, c, step);
    CHECK(ru == ground_truth_ru(n, wl, c, step));
    CHECK(ru >= 0);
    CHECK(ru <= 1.0 - 1e-6);
    CHECK(std::abs(ru - std::min(utilization(n, wl, c), 1.0 - 1e-6)) <= 0.02 + 1e-12);
  }
}

TEST_CASE("request errors") {
  const auto c = quiet();
  CHECK(utilization(4, 500, c) == 1.25);
  CHECK(request_errors(4, 500, c) == 100);
  CHECK(request_errors(5, 500, c) == 0);
  CHECK(request_errors(6, 500, c) == 0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 10));
    const double wl = uniform(rng, 0, 2000);
    const auto e = request_errors(n, wl, c);
    CHECK(e >= 0);
    if (utilization(n, wl, c) <= 1) CHECK(e == 0);
  }
}

TEST_CASE("one-step delay applies a decision on the next step") {
  Cluster cluster(quiet(1), 2);
  const auto first = cluster.step(8, 100);
  CHECK(first.instances == 2);
  const auto second = cluster.step(8, 100);
  CHECK(second.instances == 8);
  CHECK(cluster.now() == 2);
}

TEST_CASE("longer delays and zero delay") {
  Cluster slow(quiet(3), 1);
  std::vector<int> seen;
  for (int target : {5, 6, 7, 8, 9}) seen.push_back(slow.step(target, 10).instances);
  CHECK(seen == std::vector<int>{1, 1, 1, 5, 6});
  Cluster fast(quiet(0), 1);
  CHECK(fast.step(4, 10).instances == 4);
  // measure-then-commit with zero delay reaches the next measurement.
  Cluster mc(quiet(0), 1);
  CHECK(mc.measure(10).instances == 1);
  mc.commit(6);
  CHECK(mc.measure(10).instances == 6);
}

TEST_CASE("cluster rejects targets outside the range") {
  Cluster cluster(quiet(), 2);
  CHECK_THROWS_AS(cluster.step(0, 10), ValidationError);
  CHECK_THROWS_AS(cluster.step(65, 10), ValidationError);
  CHECK_THROWS_AS(Cluster(quiet(), 0), ValidationError);
  ClusterConfig bad = quiet();
  bad.capacity = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("metric examples") {
  std::vector<StepRecord> log{record(10, 4), record(20, 4), record(10, 6), record(10, 6)};
  const auto m = compute_metrics(log, 16);
  CHECK(m.violation_rate == 0.25);
  CHECK(m.cost == 5.0);
  CHECK(m.steps == 4);
  CHECK(m.rt_variance == doctest::Approx(18.75));
  std::vector<StepRecord> flat(5, record(12, 3));
  CHECK(compute_metrics(flat, 16).rt_variance == 0.0);
  CHECK_THROWS_AS(compute_metrics(std::vector<StepRecord>{}, 16), ValidationError);
}

TEST_CASE("step log round-trips bit for bit") {
  Rng rng(4);
  std::vector<StepRecord> log;
  for (int i = 0; i < 200; ++i) {
    StepRecord r;
    r.t = 1704067200 + 3600LL * i;
    r.workload = uniform(rng, 0, 1000) / 3.0;
    r.target_in = 1 + static_cast<int>(uniform_index(rng, 64));
    r.effective_in = 1 + static_cast<int>(uniform_index(rng, 64));
    r.rt = uniform(rng, 5, 50) / 7.0;
    r.ru = uniform01(rng) / 3.0;
    r.errors = static_cast<long long>(uniform_index(rng, 50));
    r.violated = r.rt > 16;
    r.is_burst = uniform01(rng) < 0.1;
    r.decision_path = r.is_burst ? "burst-overestimate" : "non-burst-enhanced";
    log.push_back(r);
  }
  std::stringstream buf;
  write_step_log(buf, log);
  const auto back = read_step_log(buf);
  CHECK(back == log);
  CHECK(compute_metrics(back, 16) == compute_metrics(log, 16));
}

TEST_CASE("zero-delay minimum-instance control never violates the SLO") {
  auto c = quiet(0);
  c.ru_noise = 0.02;
  const auto rt = [&c](int n, double wl) { return ground_truth_rt(n, wl, c); };
  for (auto kind : {trace::SyntheticKind::kPeriodic, trace::SyntheticKind::kBursty, trace::SyntheticKind::kRandomWalk}) {
    trace::SyntheticSpec spec;
    spec.kind = kind;
    spec.length = 500;
    const auto tr = trace::synthesize(spec).trace;
    Cluster cluster(c, 1);
    std::vector<StepRecord> log;
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const double wl = 5 * tr[t];
      const auto target = perf::estimate_min_instances(rt, wl, c.slo_ms, c.in_max);
      REQUIRE(!target.saturated);
      const auto out = cluster.step(target.instances, wl);
      StepRecord r;
      r.rt = out.rt;
      r.effective_in = out.instances;
      r.violated = out.violated;
      log.push_back(r);
    }
    CHECK(compute_metrics(log, c.slo_ms).violation_rate == 0.0);
  }
}
