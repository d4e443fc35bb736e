#ifndef BURSTSCALE_ENGINE_HPP_
#define BURSTSCALE_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "burstscale/burst.hpp"
#include "burstscale/forecast.hpp"
#include "burstscale/perfmodel.hpp"
#include "burstscale/rl.hpp"
#include "burstscale/sim.hpp"
#include "burstscale/trace.hpp"

namespace burstscale::engine {

enum class Variant { kBascaler, kHpa, kAbBurst, kAbPred, kAbRl };

std::string to_string(Variant v);
/// Accepts bascaler, hpa, ab_burst, ab_pred and ab_rl.
Variant parse_variant(std::string_view name);

bool uses_model(Variant v);     // forecaster and performance model
bool uses_detector(Variant v);
bool uses_agent(Variant v);

enum class DecisionPath { kBurstOverestimate, kNonBurstEnhanced, kNonBurstEstimate, kReactiveFallback, kBaseline };

/// burst-overestimate, non-burst-enhanced, non-burst-estimate, reactive-fallback, baseline.
std::string to_string(DecisionPath p);

struct EngineConfig {
  std::string forecaster = "linear";     // linear | seasonal
  std::size_t train_steps = 1344;        // training prefix; evaluation starts here
  double hpa_target = 0.6;
  double hpa_tolerance = 0.1;
  std::size_t hpa_cooldown = 1;
  // Performance-model training samples drawn from the simulator.
  std::size_t perf_samples = 1600;
  double perf_max_utilization = 3.0;
  double perf_rt_cap = 30.0;             // ms; measured response times saturate here
  double perf_noise = 0.2;               // ms, uniform half-width
  // RL training on the training prefix.
  std::size_t rl_episodes = 600;
  std::size_t rl_episode_length = 168;

  void validate() const;
};

/// Response time (ms) as a function of (instances, workload).
using RtModel = std::function<double(int, double)>;

struct Components {
  std::shared_ptr<const forecast::Forecaster> forecaster;
  RtModel rt_model;
  std::shared_ptr<const rl::Agent> agent;
};

struct AutoscalerSpec {
  Variant variant = Variant::kBascaler;
  burst::DetectorConfig detector;
  burst::HandlerConfig handler;
  rl::RlConfig rl;
  sim::ClusterConfig cluster;
  EngineConfig engine;
  Components components;
  /// Replaces the detector verdict at a step when it returns a value.
  std::function<std::optional<bool>(std::size_t t)> burst_override;

  /// Throws ValidationError when a component the variant needs is missing.
  void validate(bool require_agent = true) const;
};

struct Decision {
  int target = 1;
  DecisionPath path = DecisionPath::kReactiveFallback;
  double forecast_median = 0;   // next-step median, 0 when no forecast was made
  double planned_workload = 0;  // workload the estimate was sized for
  bool burst = false;
  int in_min = 0;               // estimator output, 0 when not estimated
  bool saturated = false;
  int rl_action = 0;            // agent's instance count, 0 when not consulted
  burst::Verdict verdict;
  std::string degradation;      // why a model path fell back, empty otherwise
};

/// ceil(current_in * current_ru / target_ru) clamped to [1, in_max].
int hpa_step(int current_in, double current_ru, double target_ru, int in_max);

/// The proportional rule with a tolerance band and a cooldown after each change.
class HpaController {
 public:
  HpaController(double target, double tolerance, std::size_t cooldown, int in_max);
  int decide(int current_in, double current_ru);

 private:
  double target_, tolerance_;
  std::size_t cooldown_;
  int in_max_;
  std::size_t wait_ = 0;
};

/// Per-episode decision maker for one variant.
///
/// Each step it observes the workload w_t and the cluster outcome at t, and
/// plans the instance count for t + 1.
class Autoscaler {
 public:
  /// `workload_scale` normalizes workloads in the agent's state (training-prefix mean).
  Autoscaler(AutoscalerSpec spec, const trace::WorkloadTrace& trace, double workload_scale,
             bool require_agent = true);

  struct Plan {
    Decision decision;
    bool needs_agent = false;            // decision.target holds the estimate until the agent picks
    rl::Environment::Observation observation;
  };

  Plan plan(std::size_t t, const sim::StepOutcome& outcome);
  /// plan() completed with the agent in deterministic mode.
  Decision decide(std::size_t t, const sim::StepOutcome& outcome);

  const AutoscalerSpec& spec() const noexcept { return spec_; }

 private:
  Decision fallback(const sim::StepOutcome& outcome, std::string reason);

  AutoscalerSpec spec_;
  const trace::WorkloadTrace* trace_;
  double workload_scale_;
  std::optional<burst::BurstDetector> detector_;
  HpaController hpa_;
  HpaController reactive_;
};

inline Decision autoscale_step(Autoscaler& autoscaler, std::size_t t, const sim::StepOutcome& outcome) {
  return autoscaler.decide(t, outcome);
}

/// Steps [warmup_start, eval_start) prime the detector and cluster; [eval_start, eval_end) are logged.
struct EpisodeWindow {
  std::size_t warmup_start = 0;
  std::size_t eval_start = 0;
  std::size_t eval_end = 0;
};

/// Evaluation on [train_steps, trace end) with a warm-up of k + 1 steps.
EpisodeWindow default_window(const AutoscalerSpec& spec, const trace::WorkloadTrace& trace);

/// Verdict log row.
struct DetectorRecord {
  std::int64_t t = 0;
  double distance = 0;
  int outliers = 0;
  double loss = 0;
  bool proposal = false;
  bool burst = false;
};

struct EpisodeReport {
  std::vector<sim::StepRecord> steps;
  std::vector<DetectorRecord> detector;
  std::vector<std::string> degradations;  // "t: reason"
  sim::Metrics metrics;
};

/// Initial instance count: the HPA target utilization at the first workload.
int initial_instances(const AutoscalerSpec& spec, double workload);

/// Throws ValidationError on an empty evaluation range or too little history, and
/// std::runtime_error naming the step when a step fails.
EpisodeReport run_episode(const AutoscalerSpec& spec, const trace::WorkloadTrace& trace, const EpisodeWindow& window,
                          double workload_scale);

/// RL environment over segments of a trace: the agent acts only on non-burst
/// steps after warm-up; the reward of an action is measured at the next step.
class ScalingEnvironment : public rl::Environment {
 public:
  /// Episodes start uniformly in [first, last - episode_length] with a warm-up before the start;
  /// half of them begin from a uniform instance count in [1, min(in_max, 3 * estimate)].
  ScalingEnvironment(AutoscalerSpec spec, const trace::WorkloadTrace& trace, std::size_t first, std::size_t last,
                     std::size_t episode_length, double workload_scale);

  Observation reset(std::uint64_t episode_seed) override;
  Feedback step(int instances) override;
  std::size_t state_dimension() const override { return rl::state_dimension(spec_.rl); }
  void set_exploration(bool on) override { exploration_ = on; }

 private:
  /// Advances through non-agent steps; returns the next agent observation or done.
  Observation advance();

  AutoscalerSpec spec_;
  const trace::WorkloadTrace* trace_;
  std::size_t first_, last_, length_;
  double workload_scale_;
  std::optional<Autoscaler> autoscaler_;
  std::optional<sim::Cluster> cluster_;
  std::size_t t_ = 0, end_ = 0, first_agent_step_ = 0;
  bool exploration_ = true, explore_ = false;
  double explore_draw_ = 0;
  sim::StepOutcome outcome_;
};

}  // namespace burstscale::engine

#endif  // BURSTSCALE_ENGINE_HPP_
