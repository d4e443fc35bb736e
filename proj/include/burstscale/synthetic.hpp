#ifndef BURSTSCALE_SYNTHETIC_HPP_
#define BURSTSCALE_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "burstscale/trace.hpp"

namespace burstscale::trace {

enum class SyntheticKind { kPeriodic, kPeriodicSpikes, kBursty, kRandomWalk };

std::string to_string(SyntheticKind kind);
/// Accepts periodic, periodic_spikes, bursty and random_walk.
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kPeriodic;
  std::size_t length = 2016;
  std::uint64_t seed = 1;
  std::int64_t start = 1704067200;  // 2024-01-01T00:00Z, a Monday
  std::int64_t step_seconds = 3600;
  double level = 100.0;             // mean daily level before standardization
  double noise = 0.04;              // relative Gaussian noise
  double burst_rate = 1.0 / 150.0;  // burst onsets per step (bursty kind)
};

struct SyntheticTrace {
  WorkloadTrace trace;
  std::vector<std::size_t> burst_onsets;  // indices of injected burst starts
};

/// Hourly daily cycle with a weekend dip; the spike kind adds a fixed evening
/// spike every day; the bursty kind adds non-recurring surges of several steps;
/// the random walk is a mean-reverting log walk without seasonality.
SyntheticTrace synthesize(const SyntheticSpec& spec);

}  // namespace burstscale::trace

#endif  // BURSTSCALE_SYNTHETIC_HPP_
