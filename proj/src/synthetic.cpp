#include "burstscale/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"

namespace burstscale::trace {

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kPeriodic: return "periodic";
    case SyntheticKind::kPeriodicSpikes: return "periodic_spikes";
    case SyntheticKind::kBursty: return "bursty";
    case SyntheticKind::kRandomWalk: return "random_walk";
  }
  return "?";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  for (auto k : {SyntheticKind::kPeriodic, SyntheticKind::kPeriodicSpikes, SyntheticKind::kBursty,
                 SyntheticKind::kRandomWalk}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown synthetic trace kind '" + std::string(name) + "'");
}

namespace {

double daily_shape(std::int64_t timestamp) {
  const int hour = calendar_value(timestamp, TemporalType::kHourOfDay).value;
  const int weekday = calendar_value(timestamp, TemporalType::kDayOfWeek).value;
  const double day = 1.0 + 0.45 * std::sin(2.0 * std::numbers::pi * (hour - 9) / 24.0);
  return weekday >= 5 ? 0.8 * day : day;
}

}  // namespace

SyntheticTrace synthesize(const SyntheticSpec& spec) {
  if (spec.length < 2) throw ValidationError("synthesize: length must be at least 2");
  if (!(spec.level > 0) || !(spec.noise >= 0) || spec.step_seconds <= 0)
    throw ValidationError("synthesize: require level > 0, noise >= 0, step > 0");
  Rng rng(splitmix64(spec.seed ^ (static_cast<std::uint64_t>(spec.kind) << 32)));
  SyntheticTrace out;
  std::vector<double> values(spec.length);

  if (spec.kind == SyntheticKind::kRandomWalk) {
    double x = 0.0;
    for (auto& v : values) {
      x += 0.05 * normal(rng) - 0.01 * x;
      v = spec.level * std::exp(x);
    }
  } else {
    for (std::size_t i = 0; i < spec.length; ++i) {
      const std::int64_t ts = spec.start + static_cast<std::int64_t>(i) * spec.step_seconds;
      double base = spec.level * daily_shape(ts);
      if (spec.kind == SyntheticKind::kPeriodicSpikes) {
        const int hour = calendar_value(ts, TemporalType::kHourOfDay).value;
        if (hour == 20) base += 0.6 * spec.level;
        if (hour == 21) base += 0.3 * spec.level;
      }
      values[i] = base * (1.0 + spec.noise * normal(rng));
    }
    if (spec.kind == SyntheticKind::kBursty) {
      std::size_t next = 48 + uniform_index(rng, 48);
      while (next + 12 < spec.length) {
        out.burst_onsets.push_back(next);
        const double magnitude = spec.level * uniform(rng, 0.8, 1.6);
        const std::size_t duration = 4 + uniform_index(rng, 7);
        for (std::size_t j = 0; j < duration && next + j < spec.length; ++j) {
          const double ramp = j == 0 ? 0.6 : 1.0;
          values[next + j] += magnitude * ramp * std::pow(0.92, static_cast<double>(j));
        }
        const double gap = -std::log(1.0 - uniform01(rng)) / spec.burst_rate;
        next += duration + 24 + static_cast<std::size_t>(gap);
      }
    }
  }
  for (auto& v : values) v = std::max(v, 0.0);
  out.trace = WorkloadTrace::regular(spec.start, spec.step_seconds, std::move(values));
  return out;
}

}  // namespace burstscale::trace
