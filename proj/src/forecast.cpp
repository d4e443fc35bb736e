#include "burstscale/forecast.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/stats.hpp"
#include "config_json.hpp"

namespace burstscale::forecast {

namespace {

constexpr const char* kFormat = "burstscale.forecaster";
constexpr int kVersion = 1;

std::size_t positive_mod(std::int64_t a, std::size_t m) {
  const auto mm = static_cast<std::int64_t>(m);
  return static_cast<std::size_t>(((a % mm) + mm) % mm);
}

}  // namespace

void repair_monotone(IntervalForecast& forecast) {
  for (auto& s : forecast.steps) {
    std::array<double, 3> v{s.low, s.median, s.up};
    std::sort(v.begin(), v.end());
    s = {v[0], v[1], v[2]};
  }
}

void ForecasterConfig::validate() const {
  if (input_length < 1 || horizon < 1) throw ValidationError("forecaster: input_length and horizon must be >= 1");
  if (season < 1) throw ValidationError("forecaster: season must be >= 1");
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("forecaster: quantiles must lie in (0, 1)");
  }
  if (!(quantiles[0] < quantiles[1] && quantiles[1] < quantiles[2]) || quantiles[1] != 0.5)
    throw ValidationError("forecaster: quantiles must be ascending with 0.5 in the middle");
  if (!(learning_rate > 0.0)) throw ValidationError("forecaster: learning_rate must be positive");
}

std::size_t ForecasterConfig::required_history() const { return std::max<std::size_t>(2 * season, 2); }

double aggregate_quantile_loss(std::span<const double> truth, const IntervalForecast& forecast,
                               const QuantileSet& quantiles) {
  if (truth.size() != forecast.horizon())
    throw ValidationError("aggregate_quantile_loss: truth has " + std::to_string(truth.size()) +
                          " steps, forecast has " + std::to_string(forecast.horizon()));
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& s = forecast[i];
    total += quantile_loss(truth[i], s.low, quantiles[0]) + quantile_loss(truth[i], s.median, quantiles[1]) +
             quantile_loss(truth[i], s.up, quantiles[2]);
  }
  return total / static_cast<double>(quantiles.size());
}

IntervalForecast Forecaster::predict(const trace::InputWindow& window) const {
  if (window.size() != config().input_length)
    throw ValidationError("predict: window has " + std::to_string(window.size()) + " values, expected " +
                          std::to_string(config().input_length));
  auto out = raw_predict(window);
  repair_monotone(out);
  return out;
}

// ---------------------------------------------------------------------------
// Seasonal empirical quantiles

SeasonalQuantileForecaster::SeasonalQuantileForecaster(ForecasterConfig config, std::int64_t step_seconds,
                                                       std::vector<QuantileTriple> phase_quantiles)
    : config_(std::move(config)), step_(step_seconds), phases_(std::move(phase_quantiles)) {
  config_.validate();
  if (phases_.size() != config_.season) throw ValidationError("seasonal forecaster: one triple per phase required");
  if (step_ <= 0) throw ValidationError("seasonal forecaster: step must be positive");
}

std::size_t SeasonalQuantileForecaster::phase_of(std::int64_t timestamp) const {
  // floor division so negative timestamps keep a consistent phase
  std::int64_t idx = timestamp / step_;
  if (timestamp % step_ != 0 && timestamp < 0) --idx;
  return positive_mod(idx, config_.season);
}

IntervalForecast SeasonalQuantileForecaster::raw_predict(const trace::InputWindow& window) const {
  IntervalForecast out;
  out.steps.reserve(config_.horizon);
  for (std::size_t i = 1; i <= config_.horizon; ++i)
    out.steps.push_back(phases_[phase_of(window.last_timestamp() + static_cast<std::int64_t>(i) * step_)]);
  return out;
}

std::unique_ptr<SeasonalQuantileForecaster> fit_seasonal_quantile(const trace::WorkloadTrace& trace,
                                                                  const ForecasterConfig& config) {
  config.validate();
  if (trace.size() < 3 * config.season)
    throw ValidationError("fit_seasonal_quantile: need at least three seasons (" +
                          std::to_string(3 * config.season) + " values), got " + std::to_string(trace.size()));
  std::vector<std::vector<double>> by_phase(config.season);
  SeasonalQuantileForecaster probe(config, trace.step_seconds(), std::vector<QuantileTriple>(config.season));
  for (std::size_t i = 0; i < trace.size(); ++i) by_phase[probe.phase_of(trace.timestamps()[i])].push_back(trace[i]);
  std::vector<QuantileTriple> phases(config.season);
  for (std::size_t p = 0; p < config.season; ++p) {
    auto& v = by_phase[p];
    std::sort(v.begin(), v.end());
    const std::span<const double> s(v);
    phases[p] = {stats::quantile_sorted(s, config.quantiles[0]), stats::quantile_sorted(s, config.quantiles[1]),
                 stats::quantile_sorted(s, config.quantiles[2])};
  }
  return std::make_unique<SeasonalQuantileForecaster>(config, trace.step_seconds(), std::move(phases));
}

// ---------------------------------------------------------------------------
// Linear quantile regression

LinearQuantileForecaster::LinearQuantileForecaster(ForecasterConfig config, std::vector<Eigen::MatrixXd> weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  if (config_.input_length < config_.required_history())
    throw ValidationError("linear forecaster: input_length must be at least " +
                          std::to_string(config_.required_history()));
  if (weights_.size() != config_.horizon) throw ValidationError("linear forecaster: one weight block per step");
  for (const auto& w : weights_) {
    if (w.rows() != kFeatures || w.cols() != 3) throw ValidationError("linear forecaster: weight block must be 9x3");
  }
}

double LinearQuantileForecaster::window_scale(std::span<const double> history, std::size_t season) {
  const std::size_t n = std::min(season, history.size());
  double sum = 0.0;
  for (std::size_t i = history.size() - n; i < history.size(); ++i) sum += history[i];
  return std::max(sum / static_cast<double>(n), 1e-9);
}

Eigen::Matrix<double, LinearQuantileForecaster::kFeatures, 1> LinearQuantileForecaster::features(
    std::span<const double> history, std::int64_t last_timestamp, std::int64_t step_seconds, std::size_t step,
    std::size_t season, double scale) {
  const std::size_t last = history.size() - 1;
  const std::size_t cycles = (step + season - 1) / season;  // ceil(step / season)
  const std::size_t same_phase = last + step - season * cycles;
  Eigen::Matrix<double, kFeatures, 1> f;
  f[0] = history[last] / scale;
  f[1] = history[last - 1] / scale;
  f[2] = history[same_phase] / scale;
  f[3] = history[same_phase - season] / scale;
  f.segment<4>(4) = trace::time_features(last_timestamp + static_cast<std::int64_t>(step) * step_seconds);
  f[8] = 1.0;
  return f;
}

IntervalForecast LinearQuantileForecaster::raw_predict(const trace::InputWindow& window) const {
  const std::span<const double> history(window.values.data(), window.size());
  const double scale = window_scale(history, config_.season);
  IntervalForecast out;
  out.steps.reserve(config_.horizon);
  for (std::size_t i = 1; i <= config_.horizon; ++i) {
    const auto f = features(history, window.last_timestamp(), window.step_seconds, i, config_.season, scale);
    const Eigen::RowVector3d q = f.transpose() * weights_[i - 1];
    out.steps.push_back({q[0] * scale, q[1] * scale, q[2] * scale});
  }
  return out;
}

std::unique_ptr<LinearQuantileForecaster> fit_linear_quantile(const trace::WorkloadTrace& trace,
                                                              const ForecasterConfig& config,
                                                              TrainingReport* report) {
  config.validate();
  if (trace.size() < 3 * config.season)
    throw ValidationError("fit_linear_quantile: need at least three seasons (" +
                          std::to_string(3 * config.season) + " values), got " + std::to_string(trace.size()));
  const std::size_t history = config.required_history();
  if (trace.size() < history + config.horizon)
    throw ValidationError("fit_linear_quantile: trace of " + std::to_string(trace.size()) +
                          " values is too short for horizon " + std::to_string(config.horizon));

  const auto& values = trace.values();
  const std::size_t horizon = config.horizon;
  const auto F = LinearQuantileForecaster::kFeatures;

  // Design matrices per horizon step; issue times t use the trailing `history` values.
  std::vector<Eigen::MatrixXd> X(horizon);
  std::vector<Eigen::VectorXd> Y(horizon);
  for (std::size_t i = 1; i <= horizon; ++i) {
    const std::size_t first = history - 1;
    const std::size_t last = values.size() - 1 - i;
    const auto n = static_cast<Eigen::Index>(last - first + 1);
    X[i - 1].resize(n, F);
    Y[i - 1].resize(n);
    for (std::size_t t = first; t <= last; ++t) {
      const std::span<const double> h(values.data() + t + 1 - history, history);
      const double scale = LinearQuantileForecaster::window_scale(h, config.season);
      const auto r = static_cast<Eigen::Index>(t - first);
      X[i - 1].row(r) = LinearQuantileForecaster::features(h, trace.timestamps()[t], trace.step_seconds(), i,
                                                           config.season, scale)
                            .transpose();
      Y[i - 1][r] = values[t + i] / scale;
    }
  }

  // Intercept-only start at the empirical quantiles.
  std::vector<Eigen::MatrixXd> W(horizon, Eigen::MatrixXd::Zero(F, 3));
  for (std::size_t i = 0; i < horizon; ++i) {
    std::vector<double> y(Y[i].data(), Y[i].data() + Y[i].size());
    std::sort(y.begin(), y.end());
    for (int q = 0; q < 3; ++q) W[i](F - 1, q) = stats::quantile_sorted<double>(y, config.quantiles[q]);
  }

  const Eigen::RowVector3d qs(config.quantiles[0], config.quantiles[1], config.quantiles[2]);
  auto epoch_loss_and_grad = [&](std::size_t i, Eigen::MatrixXd* grad) {
    const Eigen::MatrixXd pred = X[i] * W[i];
    const Eigen::MatrixXd diff = Y[i].replicate(1, 3) - pred;  // y - y_hat
    const double n = static_cast<double>(X[i].rows());
    // d/dy_hat of the pinball loss: -q above the target, 1 - q below it.
    Eigen::MatrixXd g(diff.rows(), 3);
    double loss = 0.0;
    for (Eigen::Index r = 0; r < diff.rows(); ++r) {
      for (int q = 0; q < 3; ++q) {
        const double d = diff(r, q);
        loss += quantile_loss(d, 0.0, qs[q]);
        g(r, q) = d > 0.0 ? -qs[q] : (d < 0.0 ? 1.0 - qs[q] : 0.0);
      }
    }
    if (grad) *grad = X[i].transpose() * g / (3.0 * n);
    return loss / (3.0 * n);
  };

  TrainingReport local;
  TrainingReport& rep = report ? *report : local;
  rep = {};
  double initial = 0.0;
  for (std::size_t i = 0; i < horizon; ++i) initial += epoch_loss_and_grad(i, nullptr);
  initial /= static_cast<double>(horizon);
  rep.initial_loss = initial;

  std::vector<Eigen::MatrixXd> m(horizon, Eigen::MatrixXd::Zero(F, 3)), v(horizon, Eigen::MatrixXd::Zero(F, 3));
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Eigen::MatrixXd grad;
  for (std::size_t epoch = 1; epoch <= config.iterations; ++epoch) {
    const double lr = config.learning_rate / std::sqrt(1.0 + static_cast<double>(epoch) / 100.0);
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(epoch));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(epoch));
    double loss = 0.0;
    for (std::size_t i = 0; i < horizon; ++i) {
      loss += epoch_loss_and_grad(i, &grad);
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      W[i].array() -= lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + kEps);
    }
    loss /= static_cast<double>(horizon);
    rep.loss_curve.push_back(loss);
    rep.epochs = epoch;
    if (!std::isfinite(loss) || loss > 10.0 * initial) {
      std::ostringstream msg;
      msg << "fit_linear_quantile: training diverged at epoch " << epoch << " (loss " << loss << ", initial "
          << initial << ", learning_rate " << config.learning_rate << ")";
      throw std::runtime_error(msg.str());
    }
    const std::size_t w = config.plateau_window;
    if (w > 0 && rep.loss_curve.size() > w) {
      const double before = rep.loss_curve[rep.loss_curve.size() - 1 - w];
      if (before - loss < config.plateau_tolerance * std::max(before, 1e-12)) {
        rep.plateaued = true;
        break;
      }
    }
  }
  return std::make_unique<LinearQuantileForecaster>(config, std::move(W));
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize(const Forecaster& forecaster) {
  using json_io::json;
  json doc{{"format", kFormat},
           {"version", kVersion},
           {"kind", forecaster.kind()},
           {"config", json_io::to_json(forecaster.config())}};
  if (const auto* s = dynamic_cast<const SeasonalQuantileForecaster*>(&forecaster)) {
    doc["step_seconds"] = s->step_seconds();
    json phases = json::array();
    for (const auto& p : s->phase_quantiles()) phases.push_back({p.low, p.median, p.up});
    doc["phase_quantiles"] = std::move(phases);
  } else if (const auto* l = dynamic_cast<const LinearQuantileForecaster*>(&forecaster)) {
    json blocks = json::array();
    for (const auto& w : l->weights()) blocks.push_back(json_io::matrix_to_json(w));
    doc["weights"] = std::move(blocks);
  } else {
    throw std::logic_error("serialize: unknown forecaster kind " + forecaster.kind());
  }
  return doc.dump(1) + "\n";
}

std::unique_ptr<Forecaster> deserialize_forecaster(std::string_view text) {
  const auto doc = json_io::parse(text, "forecaster");
  json_io::check_format(doc, kFormat, kVersion);
  ForecasterConfig config;
  json_io::from_json_strict(doc.at("config"), config);
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "seasonal_quantile") {
    std::vector<QuantileTriple> phases;
    for (const auto& p : doc.at("phase_quantiles")) phases.push_back({p.at(0), p.at(1), p.at(2)});
    return std::make_unique<SeasonalQuantileForecaster>(config, doc.at("step_seconds").get<std::int64_t>(),
                                                        std::move(phases));
  }
  if (kind == "linear_quantile") {
    std::vector<Eigen::MatrixXd> weights;
    for (const auto& w : doc.at("weights")) weights.push_back(json_io::matrix_from_json(w, "forecaster.weights"));
    return std::make_unique<LinearQuantileForecaster>(config, std::move(weights));
  }
  throw ValidationError("forecaster: unknown kind '" + kind + "'");
}

void save_forecaster(const std::filesystem::path& path, const Forecaster& forecaster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(forecaster);
}

std::unique_ptr<Forecaster> load_forecaster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read forecaster file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_forecaster(ss.str());
}

}  // namespace burstscale::forecast
