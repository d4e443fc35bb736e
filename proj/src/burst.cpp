#include "burstscale/burst.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"
#include "burstscale/stats.hpp"

namespace burstscale::burst {

void DetectorConfig::validate() const {
  if (!(history > nearest && nearest >= 1)) throw ValidationError("detector: require history > nearest >= 1");
  if (!(distance_threshold > 0.0 && loss_threshold > 0.0)) throw ValidationError("detector: thresholds must be > 0");
}

double deviation_distance(const forecast::QuantileTriple& interval, double y) {
  if (!(interval.low > 0.0) || !(interval.low <= interval.up))
    throw ValidationError("deviation_distance: bounds must satisfy 0 < low <= up");
  return std::max(y - interval.up, 0.0) / interval.up + std::max(interval.low - y, 0.0) / interval.low;
}

IndexRange window_indices(std::int64_t now, std::int64_t issue, std::size_t nearest, std::size_t history) {
  if (issue > now - 1 || issue < now - static_cast<std::int64_t>(history))
    throw ValidationError("window_indices: issue time " + std::to_string(issue) + " outside [" +
                          std::to_string(now - static_cast<std::int64_t>(history)) + ", " +
                          std::to_string(now - 1) + "]");
  const auto end = static_cast<std::size_t>(now - issue);
  return {end <= nearest ? 1 : end - nearest + 1, end};
}

// ---------------------------------------------------------------------------

DetectorState::DetectorState(std::size_t history) : history_(history), bursts_(history, false) {
  if (history == 0) throw ValidationError("detector: history must be positive");
}

void DetectorState::observe(double truth) {
  truths_.push_back(truth);
  if (truths_.size() > history_) truths_.pop_front();
  observed_since_forecast_ = true;
}

void DetectorState::push_forecast(forecast::IntervalForecast forecast) {
  forecasts_.push_back(std::move(forecast));
  if (forecasts_.size() > history_) forecasts_.pop_front();
  observed_since_forecast_ = false;
}

void DetectorState::push_verdict(bool burst) {
  bursts_.push_back(burst);
  bursts_.pop_front();
}

bool DetectorState::warmed_up() const noexcept { return forecasts_.size() == history_ && observed_since_forecast_; }

double DetectorState::truth_for(std::size_t index, std::size_t step) const {
  // forecasts_[index] was issued (size - index) steps before now
  const std::size_t age = forecasts_.size() - index;
  if (step == 0 || step > age) throw ValidationError("truth_for: step not yet realized");
  const std::size_t back = age - step;
  if (back >= truths_.size()) throw ValidationError("truth_for: truth no longer retained");
  return truths_[truths_.size() - 1 - back];
}

DeviationStats deviation_stats(const DetectorState& state, const DetectorConfig& config) {
  if (!state.warmed_up()) throw ValidationError("deviation_stats: detector not warmed up");
  const std::size_t k = config.history;
  if (state.history() != k) throw ValidationError("deviation_stats: state history differs from config");
  DeviationStats out;
  out.distance.resize(k);
  out.outliers.resize(k);
  out.loss.resize(k);
  const auto now = static_cast<std::int64_t>(k);  // issue times are relative: forecasts()[i] at i
  for (std::size_t i = 0; i < k; ++i) {
    const auto& f = state.forecasts()[i];
    const auto range = window_indices(now, static_cast<std::int64_t>(i), config.nearest, k);
    if (f.horizon() < range.end)
      throw ValidationError("deviation_stats: forecast horizon " + std::to_string(f.horizon()) +
                            " shorter than required index " + std::to_string(range.end));
    double dist = 0.0, loss = 0.0;
    int count = 0;
    for (std::size_t step = range.start; step <= range.end; ++step) {
      const double y = state.truth_for(i, step);
      const auto& q = f[step - 1];
      const double d = deviation_distance(q, y);
      dist += d;
      count += d > 0.0 ? 1 : 0;
      loss += forecast::quantile_loss(y, q.median, 0.5) / std::max(y, 1.0);
    }
    out.distance[i] = dist / static_cast<double>(range.size());
    out.outliers[i] = count;
    out.loss[i] = loss / static_cast<double>(range.size());
  }
  return out;
}

std::vector<bool> burst_proposals(const DeviationStats& stats, const DetectorConfig& config) {
  const double half_n = static_cast<double>(config.nearest) / 2.0;
  std::vector<bool> v(stats.distance.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (stats.distance[i] > config.distance_threshold && stats.outliers[i] >= half_n) ||
           stats.loss[i] > config.loss_threshold;
  }
  return v;
}

bool detect_burst(const std::vector<bool>& proposals, std::span<const int> outliers, const std::vector<bool>& states,
                  const DetectorConfig& config) {
  const std::size_t k = proposals.size();
  if (k == 0 || outliers.size() != k || states.size() != k)
    throw ValidationError("detect_burst: V, O and S must have equal non-zero length");
  const std::size_t n = config.nearest;
  auto recent_sum = [n](const std::vector<bool>& v) {
    const std::size_t from = v.size() > n ? v.size() - n : 0;
    return std::count(v.begin() + static_cast<std::ptrdiff_t>(from), v.end(), true);
  };
  const bool recent_proposal = recent_sum(proposals) > 0;
  const bool recent_outlier = outliers.back() > 0;
  if (!states.back()) return recent_proposal && recent_outlier;
  if (recent_proposal || recent_outlier) return true;
  // Majority over the nearest proposals issued during burst states.
  std::vector<bool> during_burst;
  for (std::size_t i = 0; i < k; ++i) {
    if (states[i]) during_burst.push_back(proposals[i]);
  }
  const std::size_t from = during_burst.size() > n ? during_burst.size() - n : 0;
  const auto votes = std::count(during_burst.begin() + static_cast<std::ptrdiff_t>(from), during_burst.end(), true);
  return static_cast<double>(votes) >= static_cast<double>(n) / 2.0;
}

BurstDetector::BurstDetector(DetectorConfig config) : config_(config), state_(config.history) { config_.validate(); }

Verdict BurstDetector::observe(double truth) {
  state_.observe(truth);
  Verdict verdict;
  if (state_.warmed_up()) {
    const auto stats = deviation_stats(state_, config_);
    const auto proposals = burst_proposals(stats, config_);
    const std::vector<bool> states(state_.bursts().begin(), state_.bursts().end());
    verdict.warmed_up = true;
    verdict.burst = detect_burst(proposals, stats.outliers, states, config_);
    verdict.distance = stats.distance.back();
    verdict.outliers = stats.outliers.back();
    verdict.loss = stats.loss.back();
    verdict.proposal = proposals.back();
  }
  state_.push_verdict(verdict.burst);
  return verdict;
}

// ---------------------------------------------------------------------------

double ar_predict(const Ar2Model& model, double y_t, double y_prev) {
  return model.c + model.phi1 * y_t + model.phi2 * y_prev;
}

Ar2Model fit_ar2(std::span<const double> y) {
  if (y.size() < 8) throw ValidationError("fit_ar2: need at least 8 observations, got " + std::to_string(y.size()));
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) return {*lo, 0.0, 0.0};
  const auto n = static_cast<Eigen::Index>(y.size() - 2);
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd target(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto t = static_cast<std::size_t>(r) + 2;
    X(r, 0) = 1.0;
    X(r, 1) = y[t - 1];
    X(r, 2) = y[t - 2];
    target[r] = y[t];
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  const Eigen::Vector3d beta = cod.solve(target);
  return {beta[0], beta[1], beta[2]};
}

std::vector<double> ar_residuals(const Ar2Model& model, std::span<const double> y, std::size_t count) {
  std::vector<double> out;
  if (y.size() < 3) return out;
  const std::size_t first = y.size() >= count + 2 ? y.size() - count : 2;
  for (std::size_t j = first; j < y.size(); ++j) out.push_back(y[j] - ar_predict(model, y[j - 1], y[j - 2]));
  return out;
}

double bootstrap_upper_ci(std::span<const double> residuals, const BootstrapConfig& config, std::uint64_t seed) {
  if (residuals.empty()) throw ValidationError("bootstrap_upper_ci: empty residuals");
  if (config.iterations == 0) throw ValidationError("bootstrap_upper_ci: iterations must be positive");
  std::vector<double> sorted(residuals.begin(), residuals.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  Rng rng(seed);
  std::vector<double> resample(n), statistics(config.iterations);
  for (auto& stat : statistics) {
    for (auto& r : resample) r = sorted[uniform_index(rng, n)];
    std::sort(resample.begin(), resample.end());
    stat = stats::quantile_sorted<double>(resample, config.percentile / 100.0);
  }
  std::sort(statistics.begin(), statistics.end());
  const double upper = 1.0 - (1.0 - config.confidence / 100.0) / 2.0;
  return stats::quantile_sorted<double>(statistics, upper);
}

Overestimate overestimate_burst(const Ar2Model& model, std::span<const double> recent,
                                std::span<const double> residuals, const BootstrapConfig& bootstrap,
                                std::uint64_t seed) {
  if (recent.size() < 2) throw ValidationError("overestimate_burst: need the two latest observations");
  Overestimate out;
  out.model = model;
  out.ar_prediction = ar_predict(model, recent.back(), recent[recent.size() - 2]);
  out.correction = residuals.empty() ? 0.0 : bootstrap_upper_ci(residuals, bootstrap, seed);
  out.workload = std::max(out.ar_prediction + out.correction, recent.back());
  return out;
}

Overestimate handle_burst(std::span<const double> observations, std::size_t residual_count,
                          const HandlerConfig& config, std::uint64_t step) {
  const std::size_t window = std::min(config.fit_window, observations.size());
  const auto recent = observations.subspan(observations.size() - window);
  const Ar2Model model = config.fit && recent.size() >= 8 ? fit_ar2(recent) : config.defaults;
  const auto residuals = ar_residuals(model, recent, residual_count);
  return overestimate_burst(model, recent, residuals, config.bootstrap, splitmix64(config.seed ^ step));
}

}  // namespace burstscale::burst
