#ifndef BURSTSCALE_BURST_HPP_
#define BURSTSCALE_BURST_HPP_

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "burstscale/forecast.hpp"

namespace burstscale::burst {

struct DetectorConfig {
  std::size_t history = 24;        // k: forecasts compared against the truth
  std::size_t nearest = 3;         // n: nearest-range length
  double distance_threshold = 0.1; // lambda_d
  double loss_threshold = 0.1;     // lambda_l

  void validate() const;
};

/// Relative distance of `y` outside [low, up]; zero inside the closed interval.
/// Throws ValidationError unless 0 < low <= up.
double deviation_distance(const forecast::QuantileTriple& interval, double y);

/// 1-based inclusive range of forecast steps of the forecast issued at `issue`
/// that are compared with the truth at time `now`.
struct IndexRange {
  std::size_t start;
  std::size_t end;
  std::size_t size() const noexcept { return end - start + 1; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};
IndexRange window_indices(std::int64_t now, std::int64_t issue, std::size_t nearest, std::size_t history);

/// Rolling forecasts, realized workloads and verdicts of one detector.
///
/// Per step: observe() the realized workload, decide, push_verdict(), then
/// push_forecast() the forecast issued at that step.
class DetectorState {
 public:
  explicit DetectorState(std::size_t history);

  void observe(double truth);
  void push_forecast(forecast::IntervalForecast forecast);
  void push_verdict(bool burst);

  /// k forecasts are available, each followed by at least one observation.
  bool warmed_up() const noexcept;

  std::size_t history() const noexcept { return history_; }
  /// Oldest first; forecasts()[i] was issued at now - size + i.
  const std::deque<forecast::IntervalForecast>& forecasts() const noexcept { return forecasts_; }
  /// Most recent last; truths().back() is the workload at `now`.
  const std::deque<double>& truths() const noexcept { return truths_; }
  /// Always k entries, oldest first, initialized to false.
  const std::deque<bool>& bursts() const noexcept { return bursts_; }

  /// Realized workload for step `step` (1-based) of forecasts()[index].
  double truth_for(std::size_t index, std::size_t step) const;

 private:
  std::size_t history_;
  std::deque<forecast::IntervalForecast> forecasts_;
  std::deque<double> truths_;
  std::deque<bool> bursts_;
  bool observed_since_forecast_ = false;
};

/// D, O and L per issued forecast (index i <-> issue time now - k + i).
struct DeviationStats {
  std::vector<double> distance;  // mean relative outlier distance over the index window
  std::vector<int> outliers;     // count of outliers in the window
  std::vector<double> loss;      // mean median-pinball loss relative to max(y, 1)
};

/// Throws ValidationError if the state is not warmed up or a forecast horizon is shorter than k.
DeviationStats deviation_stats(const DetectorState& state, const DetectorConfig& config);

std::vector<bool> burst_proposals(const DeviationStats& stats, const DetectorConfig& config);

/// The burst decision rule over proposals V, outlier counts O and past verdicts S (all length k).
bool detect_burst(const std::vector<bool>& proposals, std::span<const int> outliers, const std::vector<bool>& states,
                  const DetectorConfig& config);

/// Per-step detector output, logged with each decision.
struct Verdict {
  bool burst = false;
  bool warmed_up = false;
  double distance = 0;  // D[-1]
  int outliers = 0;     // O[-1]
  double loss = 0;      // L[-1]
  bool proposal = false;  // V[-1]
};

class BurstDetector {
 public:
  explicit BurstDetector(DetectorConfig config = {});

  /// Records the realized workload, decides, and appends the verdict to the burst history.
  /// Returns a non-burst verdict until the state is warmed up.
  Verdict observe(double truth);
  void push_forecast(forecast::IntervalForecast forecast) { state_.push_forecast(std::move(forecast)); }

  const DetectorState& state() const noexcept { return state_; }
  const DetectorConfig& config() const noexcept { return config_; }

 private:
  DetectorConfig config_;
  DetectorState state_;
};

// ---------------------------------------------------------------------------
// Burst handling: AR(2) plus a bootstrapped residual allowance.

struct Ar2Model {
  double c = 0.0;
  double phi1 = 2.0;
  double phi2 = -1.0;
};

/// c + phi1 * y_t + phi2 * y_prev.
double ar_predict(const Ar2Model& model, double y_t, double y_prev);

/// Least-squares (Gaussian conditional MLE) fit; minimum-norm when the design is
/// collinear, (mean, 0, 0) for constant input. Throws ValidationError below 8 observations.
Ar2Model fit_ar2(std::span<const double> observations);

/// One-step errors y_j - y_hat_j for the last `count` observations (fewer if the series is short).
std::vector<double> ar_residuals(const Ar2Model& model, std::span<const double> observations, std::size_t count);

struct BootstrapConfig {
  std::size_t iterations = 100;
  double percentile = 95.0;  // statistic: this percentile of each resample
  double confidence = 95.0;  // returns the upper bound of this two-sided interval
};

/// Upper confidence bound of a residual percentile by bootstrap resampling.
///
/// Resamples draw through the inverse empirical CDF of the sorted residuals, so
/// with a fixed seed adding a new maximum can only raise the result.
/// Throws ValidationError on an empty residual set.
double bootstrap_upper_ci(std::span<const double> residuals, const BootstrapConfig& config, std::uint64_t seed);

struct HandlerConfig {
  std::size_t fit_window = 168;  // L_z
  bool fit = true;               // false: use the default coefficients
  Ar2Model defaults{};
  BootstrapConfig bootstrap{};
  std::uint64_t seed = 0;
};

struct Overestimate {
  double workload = 0;     // final estimate
  double ar_prediction = 0;
  double correction = 0;   // bootstrap allowance
  Ar2Model model;
};

/// AR prediction plus the bootstrap allowance, floored at the latest observation.
/// `recent` holds the latest observations (oldest first, at least two).
Overestimate overestimate_burst(const Ar2Model& model, std::span<const double> recent,
                                std::span<const double> residuals, const BootstrapConfig& bootstrap,
                                std::uint64_t seed);

/// Fits (or takes the defaults), computes the last-k residuals and overestimates.
Overestimate handle_burst(std::span<const double> observations, std::size_t residual_count,
                          const HandlerConfig& config, std::uint64_t step);

}  // namespace burstscale::burst

#endif  // BURSTSCALE_BURST_HPP_
