#ifndef BURSTSCALE_EXPERIMENT_HPP_
#define BURSTSCALE_EXPERIMENT_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "burstscale/engine.hpp"
#include "burstscale/pageviews.hpp"

namespace burstscale::engine {

/// Where a trace comes from.
struct TraceSource {
  std::string name;                 // report label; defaults to the kind or file stem
  std::string kind = "synthetic";   // synthetic | csv | pageviews
  std::string synthetic = "periodic";
  std::size_t length = 2016;
  std::uint64_t seed = 7;
  std::string path;                 // csv
  std::string article, start, end;  // pageviews, dates as YYYY-MM-DD
  std::string project = "en.wikipedia";
  std::string cache_dir;

  std::string label() const;
};

/// Everything one run or comparison needs; unknown keys are rejected on parse.
struct RunConfig {
  std::vector<TraceSource> traces;
  bool standardize = true;
  forecast::ForecasterConfig forecaster;
  burst::DetectorConfig detector;
  burst::HandlerConfig handler;
  perf::SvrConfig perfmodel;
  rl::RlConfig rl;
  sim::ClusterConfig sim;
  EngineConfig engine;
  std::vector<std::string> variants{"bascaler", "hpa"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";

  /// Desk-scale defaults: L_x = 168, L_y = 24, RBF gamma 10, periodic, bursty and random-walk traces.
  static RunConfig desk_defaults();
  void validate() const;
};

/// Parses a config document, or the `run_config` embedded in any output document.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& config);

struct NamedTrace {
  std::string name;
  trace::WorkloadTrace trace;
  std::size_t clamped = 0;  // values clamped at zero by standardization
};

NamedTrace resolve_trace(const TraceSource& source, bool standardize,
                         const trace::HttpGet& transport = trace::https_transport());
std::vector<NamedTrace> resolve_traces(const RunConfig& config);

/// Mean of the training prefix; the agent's workload normalizer.
double workload_scale(const RunConfig& config, const trace::WorkloadTrace& trace);

std::unique_ptr<forecast::Forecaster> train_forecaster(const RunConfig& config, const trace::WorkloadTrace& trace,
                                                       forecast::TrainingReport* report = nullptr);

/// Simulator measurements over instances in [1, in_max] and workloads up to `max_workload`,
/// half uniform over the box and half concentrated on utilizations up to perf_max_utilization.
std::vector<perf::PerfSample> generate_perf_samples(const sim::ClusterConfig& cluster, const EngineConfig& engine,
                                                    double max_workload, std::uint64_t seed);
/// Workload range the performance model must cover: twice the training-prefix peak.
double perf_workload_range(const RunConfig& config, const trace::WorkloadTrace& trace);

struct TrainedModels {
  std::shared_ptr<const forecast::Forecaster> forecaster;
  std::shared_ptr<const perf::SvrModel> perf_model;
  std::map<Variant, std::shared_ptr<const rl::Agent>> agents;
  std::map<Variant, std::vector<double>> learning_curves;
  double workload_scale = 1.0;
};

/// Configs for one variant and seed; the seed drives the cluster noise, the bootstrap and the agent.
AutoscalerSpec make_spec(const RunConfig& config, Variant variant, std::uint64_t seed, const TrainedModels& models);

/// Trains the agent of `variant` on the training prefix.
rl::TrainResult train_agent_for(const RunConfig& config, Variant variant, std::uint64_t seed,
                                const TrainedModels& models, const trace::WorkloadTrace& trace);

/// Forecaster (unless given), performance model and the agents the variants need.
TrainedModels train_models(const RunConfig& config, const trace::WorkloadTrace& trace, std::uint64_t seed,
                           std::span<const Variant> variants,
                           std::shared_ptr<const forecast::Forecaster> forecaster = nullptr);

struct EpisodeResult {
  std::string variant;
  std::string trace;
  std::uint64_t seed = 0;
  EpisodeReport report;
};

inline constexpr std::array<const char*, 4> kMetricNames{"violation_rate", "cost", "errors", "rt_variance"};
std::array<double, 4> metric_values(const sim::Metrics& metrics);

/// (baseline - candidate) / baseline; 0 when both are 0, NaN when only the baseline is.
double improvement(double baseline, double candidate);

struct ComparisonRow {
  std::string kind;     // variant | improvement
  std::string variant;  // for improvement rows: "<reference>_vs_<baseline>"
  std::string trace;
  std::size_t seeds = 0;
  std::array<double, 4> mean{};
  std::array<double, 4> std{};  // sample std across seeds, 0 for one seed
};

struct ComparisonTable {
  std::string reference;
  std::vector<ComparisonRow> rows;
};

/// Mean and std per (variant, trace) in first-seen order, then per trace one
/// improvement row of the reference against every other variant (paired by seed).
ComparisonTable tabulate(std::span<const EpisodeResult> results, const std::string& reference);

using ProgressLog = std::function<void(const std::string&)>;

/// Every (trace, seed, variant) episode of the configuration.
std::vector<EpisodeResult> run_experiment(const RunConfig& config, const std::vector<NamedTrace>& traces,
                                          const ProgressLog& log = {});
ComparisonTable run_comparison(const RunConfig& config, const std::vector<NamedTrace>& traces,
                               const ProgressLog& log = {});
/// bascaler when present, else the first variant.
std::string reference_variant(const RunConfig& config);

void write_comparison_csv(std::ostream& out, const ComparisonTable& table);
std::string comparison_json(const ComparisonTable& table, const RunConfig& config);
/// One CSV per metric: `trace,variant,mean,std`.
void write_plot_data(const std::filesystem::path& dir, const ComparisonTable& table);

std::string episode_report_json(const EpisodeResult& result, const RunConfig& config);
/// CSV `t,distance,outliers,loss,proposal,burst`.
void write_detector_log(std::ostream& out, std::span<const DetectorRecord> records);

}  // namespace burstscale::engine

#endif  // BURSTSCALE_EXPERIMENT_HPP_
