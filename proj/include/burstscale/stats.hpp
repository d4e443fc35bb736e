#ifndef BURSTSCALE_STATS_HPP_
#define BURSTSCALE_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace burstscale::stats {

/// Linear-interpolation quantile of an ascending sample (the "type 7" rule).
template <typename Scalar>
Scalar quantile_sorted(std::span<const Scalar> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + static_cast<Scalar>(h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

template <typename Scalar>
Scalar quantile(std::vector<Scalar> sample, double q) {
  std::sort(sample.begin(), sample.end());
  return quantile_sorted<Scalar>(sample, q);
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample (n - 1) standard deviation; 0 for fewer than two values.
inline double sample_std(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double population_variance(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("variance of empty sample");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size());
}

}  // namespace burstscale::stats

#endif  // BURSTSCALE_STATS_HPP_
