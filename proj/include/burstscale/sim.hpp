#ifndef BURSTSCALE_SIM_HPP_
#define BURSTSCALE_SIM_HPP_

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace burstscale::sim {

struct ClusterConfig {
  double capacity = 100.0;      // mu: requests per step one instance serves
  double base_rt = 5.0;         // RT0, ms
  double saturation = 0.95;     // rho_sat
  std::size_t delay = 1;        // steps between a decision and its effect
  int in_max = 64;
  double ru_noise = 0.02;       // half-width of the uniform utilization noise
  std::uint64_t seed = 0;
  double slo_ms = 16.0;         // lambda_RT

  void validate() const;
};

/// Offered load over total capacity.
double utilization(int instances, double workload, const ClusterConfig& config);

/// RT0 / (1 - rho) below the knee, then linear with the knee's slope.
double ground_truth_rt(int instances, double workload, const ClusterConfig& config);

/// min(rho, 1 - 1e-6) plus noise drawn as a pure function of (seed, step).
double ground_truth_ru(int instances, double workload, const ClusterConfig& config, std::uint64_t step);

/// Requests shed in one step: round(workload * (rho - 1) / rho) when overloaded.
long long request_errors(int instances, double workload, const ClusterConfig& config);

struct StepOutcome {
  double rt = 0;
  double ru = 0;
  int instances = 1;       // effective during the step
  long long errors = 0;
  bool violated = false;   // rt > slo
};

/// A single service whose instance count follows scaling decisions after a delay.
class Cluster {
 public:
  Cluster(ClusterConfig config, int initial_instances);

  /// Outcome of serving `workload` during the current step with the instances in effect.
  StepOutcome measure(double workload);
  /// Records a decision made at the current step and moves to the next step. The
  /// target is in effect from step now + delay; a zero delay reaches the next measured step.
  void commit(int target);
  /// Decide-then-serve: the target is in effect for this step's outcome when delay is 0.
  StepOutcome step(int target, double workload);

  int effective_instances() const noexcept { return effective_; }
  std::uint64_t now() const noexcept { return now_; }
  const ClusterConfig& config() const noexcept { return config_; }

 private:
  void apply_due();
  void schedule(int target);

  ClusterConfig config_;
  int effective_;
  std::uint64_t now_ = 0;
  std::deque<std::pair<std::uint64_t, int>> pending_;
};

/// One row of the step log.
struct StepRecord {
  std::int64_t t = 0;
  double workload = 0;
  int target_in = 1;
  int effective_in = 1;
  double rt = 0;
  double ru = 0;
  long long errors = 0;
  bool violated = false;
  bool is_burst = false;
  std::string decision_path;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Metrics {
  double violation_rate = 0;
  double cost = 0;          // mean effective instances
  long long errors = 0;
  double rt_variance = 0;   // population variance
  std::size_t steps = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Throws ValidationError on an empty log.
Metrics compute_metrics(std::span<const StepRecord> log, double slo_ms);

/// CSV `t,workload,target_in,effective_in,rt,ru,errors,violated,is_burst,decision_path`;
/// reals are written in shortest round-trip form so a re-read log is bit-identical.
void write_step_log(std::ostream& out, std::span<const StepRecord> log);
std::vector<StepRecord> read_step_log(std::istream& in);

}  // namespace burstscale::sim

#endif  // BURSTSCALE_SIM_HPP_
