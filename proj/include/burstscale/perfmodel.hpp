#ifndef BURSTSCALE_PERFMODEL_HPP_
#define BURSTSCALE_PERFMODEL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace burstscale::perf {

/// One measurement: response time (ms) at an instance count and workload.
struct PerfSample {
  int instances = 1;
  double workload = 0;
  double response_time = 0;
};

/// CSV with header `instances,workload,response_time`; throws RowError on bad rows.
std::vector<PerfSample> parse_samples_csv(std::istream& in);
std::vector<PerfSample> load_samples(const std::filesystem::path& path);
void write_samples_csv(std::ostream& out, std::span<const PerfSample> samples);

/// exp(-gamma * |a - b|^2)
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar rbf_kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                                     typename DerivedA::Scalar gamma) {
  using std::exp;
  return exp(-gamma * (a - b).squaredNorm());
}

struct SvrConfig {
  double C = 100.0;
  double epsilon = 0.5;         // tube half-width, ms
  double gamma = 0.0;           // <= 0 selects 1 / (2 * mean standardized feature variance) = 0.5
  double tolerance = 1e-3;      // KKT violation at which SMO stops
  std::size_t max_iterations = 10'000'000;
};

/// Kernel expansion over standardized (instances, workload) features.
class SvrModel {
 public:
  SvrModel() = default;
  /// `support` rows are standardized feature vectors.
  SvrModel(Eigen::MatrixX2d support, Eigen::VectorXd coefficients, double bias, double gamma,
           Eigen::RowVector2d feature_mean, Eigen::RowVector2d feature_scale, SvrConfig config = {});

  double predict(double instances, double workload) const;
  double predict_standardized(const Eigen::RowVector2d& x) const;
  Eigen::RowVector2d standardize(double instances, double workload) const;

  const Eigen::MatrixX2d& support_vectors() const noexcept { return support_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
  double bias() const noexcept { return bias_; }
  double gamma() const noexcept { return gamma_; }
  const Eigen::RowVector2d& feature_mean() const noexcept { return mean_; }
  const Eigen::RowVector2d& feature_scale() const noexcept { return scale_; }
  const SvrConfig& config() const noexcept { return config_; }

  // Training diagnostics.
  bool converged = true;
  std::size_t iterations = 0;

 private:
  Eigen::MatrixX2d support_;
  Eigen::VectorXd coef_;
  double bias_ = 0;
  double gamma_ = 0.5;
  Eigen::RowVector2d mean_ = Eigen::RowVector2d::Zero();
  Eigen::RowVector2d scale_ = Eigen::RowVector2d::Ones();
  SvrConfig config_;
};

/// epsilon-SVR by sequential minimal optimization. When the iteration cap is hit
/// before the KKT tolerance, the model is returned with `converged == false`.
/// Throws ValidationError on fewer than two samples or invalid hyperparameters.
SvrModel train_svr(std::span<const PerfSample> samples, const SvrConfig& config = {});

inline double predict_rt(const SvrModel& model, int instances, double workload) {
  return model.predict(instances, workload);
}

struct InstanceEstimate {
  int instances = 1;
  bool saturated = false;  // no count in [1, in_max] met the SLO
};

/// Smallest instance count in [1, in_max] whose predicted response time is
/// strictly below `slo_ms`, by ascending scan; `rt(instances, workload)` is any
/// response-time model.
template <typename RtModel>
InstanceEstimate estimate_min_instances(const RtModel& rt, double workload, double slo_ms, int in_max) {
  for (int n = 1; n <= in_max; ++n) {
    if (rt(n, workload) < slo_ms) return {n, false};
  }
  return {std::max(in_max, 1), true};
}

inline InstanceEstimate estimate_min_instances(const SvrModel& model, double workload, double slo_ms, int in_max) {
  return estimate_min_instances([&model](int n, double wl) { return model.predict(n, wl); }, workload, slo_ms,
                                in_max);
}

std::string serialize(const SvrModel& model);
SvrModel deserialize_svr(std::string_view text);
void save_svr(const std::filesystem::path& path, const SvrModel& model);
SvrModel load_svr(const std::filesystem::path& path);

}  // namespace burstscale::perf

#endif  // BURSTSCALE_PERFMODEL_HPP_
