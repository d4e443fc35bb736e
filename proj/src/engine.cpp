#include "burstscale/engine.hpp"

#include <algorithm>
#include <cmath>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"

namespace burstscale::engine {

namespace {

constexpr double kForecastFloor = 1.0;

forecast::IntervalForecast floored(forecast::IntervalForecast f) {
  for (auto& s : f.steps) {
    s.low = std::max(s.low, kForecastFloor);
    s.median = std::max(s.median, kForecastFloor);
    s.up = std::max(s.up, kForecastFloor);
  }
  return f;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBascaler: return "bascaler";
    case Variant::kHpa: return "hpa";
    case Variant::kAbBurst: return "ab_burst";
    case Variant::kAbPred: return "ab_pred";
    case Variant::kAbRl: return "ab_rl";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kBascaler, Variant::kHpa, Variant::kAbBurst, Variant::kAbPred, Variant::kAbRl}) {
    if (to_string(v) == name) return v;
  }
  throw ValidationError("unknown variant '" + std::string(name) + "'");
}

bool uses_model(Variant v) { return v != Variant::kHpa; }
bool uses_detector(Variant v) { return v != Variant::kHpa && v != Variant::kAbBurst; }
bool uses_agent(Variant v) { return v == Variant::kBascaler || v == Variant::kAbBurst || v == Variant::kAbPred; }

std::string to_string(DecisionPath p) {
  switch (p) {
    case DecisionPath::kBurstOverestimate: return "burst-overestimate";
    case DecisionPath::kNonBurstEnhanced: return "non-burst-enhanced";
    case DecisionPath::kNonBurstEstimate: return "non-burst-estimate";
    case DecisionPath::kReactiveFallback: return "reactive-fallback";
    case DecisionPath::kBaseline: return "baseline";
  }
  return "?";
}

void EngineConfig::validate() const {
  if (forecaster != "linear" && forecaster != "seasonal")
    throw ValidationError("engine: forecaster must be 'linear' or 'seasonal'");
  if (!(hpa_target > 0 && hpa_target < 1)) throw ValidationError("engine: hpa_target must lie in (0, 1)");
  if (!(hpa_tolerance >= 0)) throw ValidationError("engine: hpa_tolerance must be non-negative");
  if (perf_samples < 2) throw ValidationError("engine: perf_samples must be at least 2");
  if (!(perf_max_utilization > 0) || !(perf_rt_cap > 0) || !(perf_noise >= 0))
    throw ValidationError("engine: perf sampling parameters must be positive");
  if (rl_episode_length == 0) throw ValidationError("engine: rl_episode_length must be positive");
}

void AutoscalerSpec::validate(bool require_agent) const {
  engine.validate();
  cluster.validate();
  if (!uses_model(variant)) return;
  detector.validate();
  rl.validate();
  if (!components.forecaster) throw ValidationError(to_string(variant) + ": needs a forecaster");
  if (!components.rt_model) throw ValidationError(to_string(variant) + ": needs a performance model");
  if (require_agent && uses_agent(variant) && !components.agent)
    throw ValidationError(to_string(variant) + ": needs a trained agent");
  if (components.agent && uses_agent(variant) &&
      components.agent->policy().inputs() != static_cast<int>(rl::state_dimension(rl)))
    throw ValidationError(to_string(variant) + ": agent state dimension does not match the rl config");
  if (uses_detector(variant) && components.forecaster->config().horizon < detector.history)
    throw ValidationError(to_string(variant) + ": forecast horizon must cover the detector history k");
}

int hpa_step(int current_in, double current_ru, double target_ru, int in_max) {
  if (!(target_ru > 0 && target_ru < 1)) throw ValidationError("hpa_step: target must lie in (0, 1)");
  const double desired = std::ceil(current_in * current_ru / target_ru - 1e-9);
  return static_cast<int>(std::clamp(desired, 1.0, static_cast<double>(in_max)));
}

HpaController::HpaController(double target, double tolerance, std::size_t cooldown, int in_max)
    : target_(target), tolerance_(tolerance), cooldown_(cooldown), in_max_(in_max) {}

int HpaController::decide(int current_in, double current_ru) {
  if (wait_ > 0) {
    --wait_;
    return current_in;
  }
  if (std::abs(current_ru / target_ - 1.0) <= tolerance_) return current_in;
  const int desired = hpa_step(current_in, current_ru, target_, in_max_);
  if (desired != current_in) wait_ = cooldown_;
  return desired;
}

Autoscaler::Autoscaler(AutoscalerSpec spec, const trace::WorkloadTrace& trace, double workload_scale,
                       bool require_agent)
    : spec_(std::move(spec)),
      trace_(&trace),
      workload_scale_(workload_scale),
      hpa_(spec_.engine.hpa_target, spec_.engine.hpa_tolerance, spec_.engine.hpa_cooldown, spec_.cluster.in_max),
      reactive_(spec_.engine.hpa_target, 0.0, 0, spec_.cluster.in_max) {
  spec_.validate(require_agent);
  if (uses_detector(spec_.variant)) detector_.emplace(spec_.detector);
}

Decision Autoscaler::fallback(const sim::StepOutcome& outcome, std::string reason) {
  Decision d;
  d.target = reactive_.decide(outcome.instances, outcome.ru);
  d.path = DecisionPath::kReactiveFallback;
  d.degradation = std::move(reason);
  return d;
}

Autoscaler::Plan Autoscaler::plan(std::size_t t, const sim::StepOutcome& outcome) {
  Plan p;
  if (spec_.variant == Variant::kHpa) {
    p.decision.target = hpa_.decide(outcome.instances, outcome.ru);
    p.decision.path = DecisionPath::kBaseline;
    return p;
  }
  const auto& values = trace_->values();
  burst::Verdict verdict;
  if (detector_) verdict = detector_->observe(values[t]);

  forecast::IntervalForecast f;
  try {
    const auto& fc = *spec_.components.forecaster;
    f = floored(fc.predict(trace::window(*trace_, t, fc.config().input_length)));
  } catch (const std::exception& e) {
    Plan out;
    out.decision = fallback(outcome, std::string("forecaster: ") + e.what());
    out.decision.verdict = verdict;
    return out;
  }
  if (detector_) detector_->push_forecast(f);

  std::optional<bool> forced;
  if (spec_.burst_override) forced = spec_.burst_override(t);
  if (detector_ && !verdict.warmed_up && !forced) {
    p.decision = fallback(outcome, "");
    p.decision.verdict = verdict;
    return p;
  }

  Decision& d = p.decision;
  d.verdict = verdict;
  d.burst = forced ? *forced : (detector_ && verdict.burst);
  d.forecast_median = f[0].median;
  try {
    if (d.burst) {
      const std::size_t from = t + 1 > spec_.handler.fit_window ? t + 1 - spec_.handler.fit_window : 0;
      const std::span<const double> recent(values.data() + from, t + 1 - from);
      d.planned_workload = burst::handle_burst(recent, spec_.detector.history, spec_.handler, t).workload;
    } else {
      d.planned_workload = d.forecast_median;
    }
    const auto est = perf::estimate_min_instances(spec_.components.rt_model, d.planned_workload,
                                                  spec_.cluster.slo_ms, spec_.cluster.in_max);
    d.in_min = est.instances;
    d.saturated = est.saturated;
    d.target = est.instances;
    if (d.burst) {
      d.path = DecisionPath::kBurstOverestimate;
      return p;
    }
    if (!uses_agent(spec_.variant)) {
      d.path = DecisionPath::kNonBurstEstimate;
      return p;
    }
    const std::size_t k = spec_.rl.workload_history;
    if (t + 1 < k) throw ValidationError("agent state needs " + std::to_string(k) + " past workloads");
    const std::span<const double> recent(values.data() + (t + 1 - k), k);
    p.observation.state = rl::make_state(spec_.rl, outcome.ru, outcome.rt, outcome.instances, recent, workload_scale_,
                                         trace::time_features(trace_->timestamps()[t]));
    p.observation.p0 = spec_.variant == Variant::kAbPred ? outcome.instances : est.instances;
    p.observation.p1 = outcome.instances;
    p.needs_agent = true;
    d.path = DecisionPath::kNonBurstEnhanced;
    return p;
  } catch (const std::exception& e) {
    Plan out;
    out.decision = fallback(outcome, e.what());
    out.decision.verdict = verdict;
    return out;
  }
}

Decision Autoscaler::decide(std::size_t t, const sim::StepOutcome& outcome) {
  Plan p = plan(t, outcome);
  if (p.needs_agent) {
    const auto choice = spec_.components.agent->act(p.observation.state, p.observation.p0, p.observation.p1, true,
                                                    nullptr);
    p.decision.target = choice.action.instances;
    p.decision.rl_action = choice.action.instances;
  }
  return p.decision;
}

EpisodeWindow default_window(const AutoscalerSpec& spec, const trace::WorkloadTrace& trace) {
  EpisodeWindow w;
  w.eval_start = spec.engine.train_steps;
  const std::size_t warm = spec.detector.history + 1;
  w.warmup_start = w.eval_start > warm ? w.eval_start - warm : 0;
  w.eval_end = trace.size();
  return w;
}

int initial_instances(const AutoscalerSpec& spec, double workload) {
  const double n = std::ceil(workload / (spec.cluster.capacity * spec.engine.hpa_target) - 1e-9);
  return static_cast<int>(std::clamp(n, 1.0, static_cast<double>(spec.cluster.in_max)));
}

EpisodeReport run_episode(const AutoscalerSpec& spec, const trace::WorkloadTrace& trace, const EpisodeWindow& window,
                          double workload_scale) {
  if (window.eval_end > trace.size()) throw ValidationError("run_episode: evaluation range exceeds the trace");
  if (window.eval_end <= window.eval_start) throw ValidationError("run_episode: empty evaluation range after warm-up");
  if (window.warmup_start > window.eval_start) throw ValidationError("run_episode: warm-up starts after evaluation");
  if (uses_model(spec.variant) && spec.components.forecaster &&
      window.warmup_start + 1 < spec.components.forecaster->config().input_length)
    throw ValidationError("run_episode: warm-up needs " +
                          std::to_string(spec.components.forecaster->config().input_length) + " steps of history");
  Autoscaler autoscaler(spec, trace, workload_scale);
  sim::Cluster cluster(spec.cluster, initial_instances(spec, trace[window.warmup_start]));
  EpisodeReport report;
  for (std::size_t t = window.warmup_start; t < window.eval_end; ++t) {
    sim::StepOutcome outcome;
    Decision d;
    try {
      outcome = cluster.measure(trace[t]);
      d = autoscaler.decide(t, outcome);
      cluster.commit(d.target);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(t) + ": " + e.what());
    }
    if (t < window.eval_start) continue;
    const auto ts = static_cast<std::int64_t>(t);
    report.steps.push_back({ts, trace[t], d.target, outcome.instances, outcome.rt, outcome.ru, outcome.errors,
                            outcome.violated, d.burst, to_string(d.path)});
    if (d.verdict.warmed_up)
      report.detector.push_back(
          {ts, d.verdict.distance, d.verdict.outliers, d.verdict.loss, d.verdict.proposal, d.verdict.burst});
    if (!d.degradation.empty()) report.degradations.push_back(std::to_string(t) + ": " + d.degradation);
  }
  report.metrics = sim::compute_metrics(report.steps, spec.cluster.slo_ms);
  return report;
}

ScalingEnvironment::ScalingEnvironment(AutoscalerSpec spec, const trace::WorkloadTrace& trace, std::size_t first,
                                       std::size_t last, std::size_t episode_length, double workload_scale)
    : spec_(std::move(spec)),
      trace_(&trace),
      first_(first),
      last_(last),
      length_(episode_length),
      workload_scale_(workload_scale) {
  spec_.validate(false);
  if (!uses_agent(spec_.variant)) throw ValidationError("environment: variant " + to_string(spec_.variant) +
                                                        " has no agent");
  if (spec_.cluster.delay > 1) throw ValidationError("environment: scaling delay above one step is not supported");
  const std::size_t history = spec_.components.forecaster->config().input_length - 1 + spec_.detector.history + 1;
  if (first_ < history) throw ValidationError("environment: episodes need " + std::to_string(history) +
                                              " steps of history before the first start");
  if (length_ == 0 || last_ >= trace.size() || last_ < first_ + length_)
    throw ValidationError("environment: episode range does not fit the trace");
}

rl::Environment::Observation ScalingEnvironment::reset(std::uint64_t episode_seed) {
  Rng rng(episode_seed);
  const std::size_t start = first_ + uniform_index(rng, last_ - first_ - length_ + 1);
  const std::size_t warm = start - (spec_.detector.history + 1);
  AutoscalerSpec spec = spec_;
  spec.cluster.seed = episode_seed;
  spec.handler.seed = episode_seed;
  autoscaler_.emplace(spec, *trace_, workload_scale_, false);
  cluster_.emplace(spec.cluster, initial_instances(spec, (*trace_)[warm]));
  t_ = warm;
  end_ = start + length_;
  first_agent_step_ = start;
  // Half of the episodes start from a perturbed instance count so the agent also
  // learns to recover from over- and under-provisioned states.
  explore_ = uniform01(rng) < 0.5 && exploration_;
  explore_draw_ = uniform01(rng);
  outcome_ = cluster_->measure((*trace_)[t_]);
  return advance();
}

rl::Environment::Observation ScalingEnvironment::advance() {
  while (t_ < end_) {
    auto plan = autoscaler_->plan(t_, outcome_);
    if (plan.needs_agent && t_ >= first_agent_step_) return plan.observation;
    int target = plan.decision.target;
    if (explore_ && t_ + 1 == first_agent_step_) {
      const int hi = std::min(spec_.cluster.in_max, static_cast<int>(std::ceil(3.0 * target)));
      target = 1 + std::min(hi - 1, static_cast<int>(explore_draw_ * hi));
    }
    cluster_->commit(target);
    ++t_;
    outcome_ = cluster_->measure((*trace_)[t_]);
  }
  Observation done;
  done.done = true;
  return done;
}

rl::Environment::Feedback ScalingEnvironment::step(int instances) {
  if (!cluster_ || t_ >= end_) throw ValidationError("environment: step after the episode ended");
  cluster_->commit(std::clamp(instances, 1, spec_.cluster.in_max));
  ++t_;
  outcome_ = cluster_->measure((*trace_)[t_]);
  Feedback fb;
  fb.reward = rl::step_reward(spec_.rl, outcome_.ru, outcome_.rt);
  fb.next = advance();
  fb.done = fb.next.done;
  return fb;
}

}  // namespace burstscale::engine
