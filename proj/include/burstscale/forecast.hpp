#ifndef BURSTSCALE_FORECAST_HPP_
#define BURSTSCALE_FORECAST_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "burstscale/trace.hpp"

namespace burstscale::forecast {

/// One forecast step: the (0.1, 0.5, 0.9) quantiles under the default quantile set.
struct QuantileTriple {
  double low = 0;
  double median = 0;
  double up = 0;

  friend bool operator==(const QuantileTriple&, const QuantileTriple&) = default;
};

/// Multi-step interval forecast; steps[i] covers issue time + (i + 1) steps.
struct IntervalForecast {
  std::vector<QuantileTriple> steps;

  std::size_t horizon() const noexcept { return steps.size(); }
  const QuantileTriple& operator[](std::size_t i) const { return steps[i]; }
  friend bool operator==(const IntervalForecast&, const IntervalForecast&) = default;
};

/// Sorts each step so that low <= median <= up.
void repair_monotone(IntervalForecast& forecast);

using QuantileSet = std::array<double, 3>;
inline constexpr QuantileSet kDefaultQuantiles{0.1, 0.5, 0.9};

struct ForecasterConfig {
  std::size_t input_length = 720;  // L_x
  std::size_t horizon = 168;       // L_y
  QuantileSet quantiles = kDefaultQuantiles;
  std::size_t season = 24;
  // Linear model training.
  double learning_rate = 0.05;
  std::size_t iterations = 2000;
  std::size_t plateau_window = 50;
  double plateau_tolerance = 1e-6;

  /// Throws ValidationError on an inconsistent configuration.
  void validate() const;
  /// History the linear model needs to see a same-phase value twice for every horizon step.
  std::size_t required_history() const;
};

/// Pinball loss of predicting `y_hat` for the q-th quantile of `y`.
template <typename Scalar>
Scalar quantile_loss(Scalar y, Scalar y_hat, Scalar q) {
  return q * std::max(y - y_hat, Scalar(0)) + (Scalar(1) - q) * std::max(y_hat - y, Scalar(0));
}

/// Mean over the quantile set of the summed pinball losses across the horizon.
double aggregate_quantile_loss(std::span<const double> truth, const IntervalForecast& forecast,
                               const QuantileSet& quantiles = kDefaultQuantiles);

/// Interval forecaster contract: a deterministic map from an input window of
/// length `config().input_length` to `config().horizon` quantile triples.
class Forecaster {
 public:
  virtual ~Forecaster() = default;

  virtual std::string kind() const = 0;
  virtual const ForecasterConfig& config() const = 0;

  /// Throws ValidationError when the window length differs from the configured input length.
  IntervalForecast predict(const trace::InputWindow& window) const;

 protected:
  /// Unrepaired per-step quantiles; `predict` validates and sorts them.
  virtual IntervalForecast raw_predict(const trace::InputWindow& window) const = 0;
};

/// Per-phase empirical quantiles of the training trace.
class SeasonalQuantileForecaster final : public Forecaster {
 public:
  SeasonalQuantileForecaster(ForecasterConfig config, std::int64_t step_seconds,
                             std::vector<QuantileTriple> phase_quantiles);

  std::string kind() const override { return "seasonal_quantile"; }
  const ForecasterConfig& config() const override { return config_; }
  std::int64_t step_seconds() const noexcept { return step_; }
  const std::vector<QuantileTriple>& phase_quantiles() const noexcept { return phases_; }
  std::size_t phase_of(std::int64_t timestamp) const;

 protected:
  IntervalForecast raw_predict(const trace::InputWindow& window) const override;

 private:
  ForecasterConfig config_;
  std::int64_t step_;
  std::vector<QuantileTriple> phases_;
};

/// Direct multi-horizon linear quantile regression.
///
/// For horizon step i the features are, relative to the window scale s (mean of
/// the last season of observations): the two latest values, the two most recent
/// observed values sharing the target's phase, the target's calendar features
/// and an intercept. Targets are likewise divided by s, and predictions multiplied back.
class LinearQuantileForecaster final : public Forecaster {
 public:
  static constexpr Eigen::Index kFeatures = 9;

  /// weights[i] is kFeatures x 3, one column per quantile.
  LinearQuantileForecaster(ForecasterConfig config, std::vector<Eigen::MatrixXd> weights);

  std::string kind() const override { return "linear_quantile"; }
  const ForecasterConfig& config() const override { return config_; }
  const std::vector<Eigen::MatrixXd>& weights() const noexcept { return weights_; }

  /// Feature row for horizon step `step` (1-based) given observations ending at the issue time.
  static Eigen::Matrix<double, kFeatures, 1> features(std::span<const double> history, std::int64_t last_timestamp,
                                                      std::int64_t step_seconds, std::size_t step,
                                                      std::size_t season, double scale);
  static double window_scale(std::span<const double> history, std::size_t season);

 protected:
  IntervalForecast raw_predict(const trace::InputWindow& window) const override;

 private:
  ForecasterConfig config_;
  std::vector<Eigen::MatrixXd> weights_;
};

struct TrainingReport {
  std::vector<double> loss_curve;  // mean pinball loss per epoch (scaled units)
  double initial_loss = 0;
  std::size_t epochs = 0;
  bool plateaued = false;
};

/// Throws ValidationError if the trace is shorter than three seasons.
std::unique_ptr<SeasonalQuantileForecaster> fit_seasonal_quantile(const trace::WorkloadTrace& trace,
                                                                  const ForecasterConfig& config);

/// Adam on pinball-loss subgradients, full batch, starting from the
/// intercept-only model at the empirical quantiles. Throws std::runtime_error
/// if the loss exceeds ten times its initial value.
std::unique_ptr<LinearQuantileForecaster> fit_linear_quantile(const trace::WorkloadTrace& trace,
                                                              const ForecasterConfig& config,
                                                              TrainingReport* report = nullptr);

/// Versioned JSON text carrying the model kind, config echo and parameters.
std::string serialize(const Forecaster& forecaster);
std::unique_ptr<Forecaster> deserialize_forecaster(std::string_view text);
void save_forecaster(const std::filesystem::path& path, const Forecaster& forecaster);
std::unique_ptr<Forecaster> load_forecaster(const std::filesystem::path& path);

}  // namespace burstscale::forecast

#endif  // BURSTSCALE_FORECAST_HPP_
