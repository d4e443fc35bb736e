#include "burstscale/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"
#include "burstscale/stats.hpp"
#include "burstscale/synthetic.hpp"
#include "config_json.hpp"

namespace burstscale::engine {

using json_io::json;

namespace {

json trace_source_to_json(const TraceSource& s) {
  json j{{"name", s.name}, {"kind", s.kind}};
  if (s.kind == "synthetic") {
    j["synthetic"] = s.synthetic;
    j["length"] = s.length;
    j["seed"] = s.seed;
  } else if (s.kind == "csv") {
    j["path"] = s.path;
  } else {
    j["article"] = s.article;
    j["start"] = s.start;
    j["end"] = s.end;
    j["project"] = s.project;
    j["cache_dir"] = s.cache_dir;
  }
  return j;
}

TraceSource trace_source_from_json(const json& j) {
  TraceSource s;
  json_io::ObjectReader r(j, "traces[]");
  r.read("name", s.name);
  r.read("kind", s.kind);
  r.read("synthetic", s.synthetic);
  r.read("length", s.length);
  r.read("seed", s.seed);
  r.read("path", s.path);
  r.read("article", s.article);
  r.read("start", s.start);
  r.read("end", s.end);
  r.read("project", s.project);
  r.read("cache_dir", s.cache_dir);
  r.finish();
  return s;
}

json run_config_to_json(const RunConfig& c) {
  json traces = json::array();
  for (const auto& t : c.traces) traces.push_back(trace_source_to_json(t));
  return {{"traces", traces},
          {"standardize", c.standardize},
          {"forecaster", json_io::to_json(c.forecaster)},
          {"detector", json_io::to_json(c.detector)},
          {"handler", json_io::to_json(c.handler)},
          {"perfmodel", json_io::to_json(c.perfmodel)},
          {"rl", json_io::to_json(c.rl)},
          {"sim", json_io::to_json(c.sim)},
          {"engine", json_io::to_json(c.engine)},
          {"variants", c.variants},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir}};
}

json metrics_to_json(const sim::Metrics& m) {
  return {{"violation_rate", m.violation_rate},
          {"cost", m.cost},
          {"errors", m.errors},
          {"rt_variance", m.rt_variance},
          {"steps", m.steps}};
}

double sample_std(const std::vector<double>& x) { return stats::sample_std(x); }

double mean_of(const std::vector<double>& x) {
  double s = 0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

std::string TraceSource::label() const {
  if (!name.empty()) return name;
  if (kind == "synthetic") return synthetic;
  if (kind == "csv") return std::filesystem::path(path).stem().string();
  return article;
}

RunConfig RunConfig::desk_defaults() {
  RunConfig c;
  c.forecaster.input_length = 168;
  c.forecaster.horizon = 24;
  c.perfmodel.gamma = 10.0;
  for (const char* kind : {"periodic", "bursty", "random_walk"}) {
    TraceSource s;
    s.synthetic = kind;
    c.traces.push_back(s);
  }
  return c;
}

void RunConfig::validate() const {
  forecaster.validate();
  detector.validate();
  if (!(perfmodel.C > 0) || !(perfmodel.epsilon >= 0)) throw ValidationError("perfmodel: C must be positive and epsilon non-negative");
  rl.validate();
  sim.validate();
  engine.validate();
  if (traces.empty()) throw ValidationError("config: at least one trace is required");
  for (const auto& t : traces) {
    if (t.kind == "synthetic") {
      trace::parse_synthetic_kind(t.synthetic);
    } else if (t.kind == "csv") {
      if (t.path.empty()) throw ValidationError("config: csv trace needs a path");
    } else if (t.kind == "pageviews") {
      if (t.article.empty() || t.start.empty() || t.end.empty())
        throw ValidationError("config: pageviews trace needs article, start and end");
    } else {
      throw ValidationError("config: unknown trace kind '" + t.kind + "'");
    }
  }
  if (variants.empty()) throw ValidationError("config: at least one variant is required");
  for (const auto& v : variants) parse_variant(v);
  if (seeds.empty()) throw ValidationError("config: at least one seed is required");
  if (rl.in_max != sim.in_max || rl.slo_ms != sim.slo_ms)
    throw ValidationError("config: rl.in_max and rl.slo_ms must equal sim.in_max and sim.slo_ms");
  if (handler.fit_window < 8) throw ValidationError("handler: fit_window must be at least 8");
  const std::size_t history = forecaster.input_length + detector.history + 1;
  if (engine.train_steps < history + engine.rl_episode_length + 1)
    throw ValidationError("engine: train_steps must exceed input_length + k + rl_episode_length + 1 = " +
                          std::to_string(history + engine.rl_episode_length + 1));
}

RunConfig parse_run_config(std::string_view text) {
  json doc = json_io::parse(text, "config");
  if (doc.is_object() && doc.contains("format") && doc.contains("run_config")) doc = doc.at("run_config");
  RunConfig c = RunConfig::desk_defaults();
  json_io::ObjectReader r(doc, "config");
  if (const json* traces = r.child("traces")) {
    if (!traces->is_array()) throw ValidationError("config.traces: expected an array");
    c.traces.clear();
    for (const auto& t : *traces) c.traces.push_back(trace_source_from_json(t));
  }
  r.read("standardize", c.standardize);
  if (const json* j = r.child("forecaster")) json_io::from_json_strict(*j, c.forecaster);
  if (const json* j = r.child("detector")) json_io::from_json_strict(*j, c.detector);
  if (const json* j = r.child("handler")) json_io::from_json_strict(*j, c.handler);
  if (const json* j = r.child("perfmodel")) json_io::from_json_strict(*j, c.perfmodel);
  if (const json* j = r.child("rl")) json_io::from_json_strict(*j, c.rl);
  if (const json* j = r.child("sim")) json_io::from_json_strict(*j, c.sim);
  if (const json* j = r.child("engine")) json_io::from_json_strict(*j, c.engine);
  r.read("variants", c.variants);
  r.read("seeds", c.seeds);
  r.read("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& config) { return run_config_to_json(config).dump(2) + "\n"; }

NamedTrace resolve_trace(const TraceSource& source, bool standardize, const trace::HttpGet& transport) {
  NamedTrace out;
  out.name = source.label();
  if (source.kind == "synthetic") {
    trace::SyntheticSpec spec;
    spec.kind = trace::parse_synthetic_kind(source.synthetic);
    spec.length = source.length;
    spec.seed = source.seed;
    out.trace = trace::synthesize(spec).trace;
  } else if (source.kind == "csv") {
    out.trace = trace::load_trace(source.path);
  } else if (source.kind == "pageviews") {
    trace::PageviewRequest req;
    req.article = source.article;
    req.start = trace::parse_date(source.start);
    req.end = trace::parse_date(source.end);
    req.project = source.project;
    trace::PageviewClient client(transport, source.cache_dir);
    out.trace = client.fetch(req);
  } else {
    throw ValidationError("unknown trace kind '" + source.kind + "'");
  }
  if (standardize) {
    auto st = trace::standardize(out.trace);
    out.trace = std::move(st.trace);
    out.clamped = st.clamped;
  }
  return out;
}

std::vector<NamedTrace> resolve_traces(const RunConfig& config) {
  std::vector<NamedTrace> out;
  for (const auto& s : config.traces) out.push_back(resolve_trace(s, config.standardize));
  return out;
}

double workload_scale(const RunConfig& config, const trace::WorkloadTrace& trace) {
  const std::size_t n = std::min(config.engine.train_steps, trace.size());
  const double m = stats::mean(std::span<const double>(trace.values().data(), n));
  return m > 0 ? m : 1.0;
}

std::unique_ptr<forecast::Forecaster> train_forecaster(const RunConfig& config, const trace::WorkloadTrace& trace,
                                                       forecast::TrainingReport* report) {
  if (trace.size() <= config.engine.train_steps)
    throw ValidationError("trace of length " + std::to_string(trace.size()) + " leaves nothing after the " +
                          std::to_string(config.engine.train_steps) + "-step training prefix");
  const auto prefix = trace.slice(0, config.engine.train_steps);
  if (config.engine.forecaster == "seasonal") return forecast::fit_seasonal_quantile(prefix, config.forecaster);
  return forecast::fit_linear_quantile(prefix, config.forecaster, report);
}

std::vector<perf::PerfSample> generate_perf_samples(const sim::ClusterConfig& cluster, const EngineConfig& engine,
                                                    double max_workload, std::uint64_t seed) {
  if (!(max_workload > 0)) throw ValidationError("generate_perf_samples: workload range must be positive");
  Rng rng(splitmix64(seed ^ 0x9e3f00dULL));
  std::vector<perf::PerfSample> out;
  out.reserve(engine.perf_samples);
  for (std::size_t i = 0; i < engine.perf_samples; ++i) {
    perf::PerfSample s;
    s.instances = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cluster.in_max)));
    if (i % 2 == 0) {
      s.workload = uniform(rng, 0.0, max_workload);
    } else {
      const double cap = std::min(engine.perf_max_utilization, max_workload / (s.instances * cluster.capacity));
      s.workload = uniform(rng, 0.0, cap) * s.instances * cluster.capacity;
    }
    const double rt = std::min(sim::ground_truth_rt(s.instances, s.workload, cluster), engine.perf_rt_cap);
    s.response_time = std::max(rt + uniform(rng, -engine.perf_noise, engine.perf_noise), 1e-3);
    out.push_back(s);
  }
  return out;
}

double perf_workload_range(const RunConfig& config, const trace::WorkloadTrace& trace) {
  const std::size_t n = std::min(config.engine.train_steps, trace.size());
  const double peak = *std::max_element(trace.values().begin(), trace.values().begin() + static_cast<std::ptrdiff_t>(n));
  return std::max(2.0 * peak, 1.0);
}

AutoscalerSpec make_spec(const RunConfig& config, Variant variant, std::uint64_t seed, const TrainedModels& models) {
  AutoscalerSpec spec;
  spec.variant = variant;
  spec.detector = config.detector;
  spec.handler = config.handler;
  spec.handler.seed = splitmix64(config.handler.seed ^ seed);
  spec.rl = config.rl;
  spec.rl.seed = splitmix64(config.rl.seed ^ (seed * 0x2545f4914f6cdd1dULL));
  spec.cluster = config.sim;
  spec.cluster.seed = splitmix64(config.sim.seed ^ (seed * 0x9e3779b97f4a7c15ULL));
  spec.engine = config.engine;
  spec.components.forecaster = models.forecaster;
  if (models.perf_model) {
    auto model = models.perf_model;
    spec.components.rt_model = [model](int n, double wl) { return model->predict(n, wl); };
  }
  if (auto it = models.agents.find(variant); it != models.agents.end()) spec.components.agent = it->second;
  return spec;
}

rl::TrainResult train_agent_for(const RunConfig& config, Variant variant, std::uint64_t seed,
                                const TrainedModels& models, const trace::WorkloadTrace& trace) {
  const AutoscalerSpec spec = make_spec(config, variant, seed, models);
  const std::size_t first = config.forecaster.input_length + config.detector.history;
  const std::size_t last = std::min(config.engine.train_steps, trace.size()) - 1;
  ScalingEnvironment env(spec, trace, first, last, config.engine.rl_episode_length, models.workload_scale);
  return rl::train_agent(env, spec.rl, config.engine.rl_episodes);
}

TrainedModels train_models(const RunConfig& config, const trace::WorkloadTrace& trace, std::uint64_t seed,
                           std::span<const Variant> variants, std::shared_ptr<const forecast::Forecaster> forecaster) {
  TrainedModels models;
  models.workload_scale = workload_scale(config, trace);
  const bool need_model = std::any_of(variants.begin(), variants.end(), uses_model);
  if (!need_model) return models;
  models.forecaster = forecaster ? std::move(forecaster) : std::shared_ptr<const forecast::Forecaster>(
                                                               train_forecaster(config, trace));
  const auto samples = generate_perf_samples(config.sim, config.engine, perf_workload_range(config, trace), seed);
  models.perf_model = std::make_shared<const perf::SvrModel>(perf::train_svr(samples, config.perfmodel));
  for (const auto v : variants) {
    if (!uses_agent(v) || models.agents.count(v)) continue;
    auto result = train_agent_for(config, v, seed, models, trace);
    models.agents[v] = std::make_shared<const rl::Agent>(std::move(result.agent));
    models.learning_curves[v] = std::move(result.learning_curve);
  }
  return models;
}

std::array<double, 4> metric_values(const sim::Metrics& m) {
  return {m.violation_rate, m.cost, static_cast<double>(m.errors), m.rt_variance};
}

double improvement(double baseline, double candidate) {
  if (baseline == 0.0) return candidate == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  return (baseline - candidate) / baseline;
}

ComparisonTable tabulate(std::span<const EpisodeResult> results, const std::string& reference) {
  ComparisonTable table;
  table.reference = reference;
  std::vector<std::string> traces, variants;
  auto remember = [](std::vector<std::string>& seen, const std::string& x) {
    if (std::find(seen.begin(), seen.end(), x) == seen.end()) seen.push_back(x);
  };
  for (const auto& r : results) {
    remember(traces, r.trace);
    remember(variants, r.variant);
  }
  auto select = [&](const std::string& trace, const std::string& variant) {
    std::vector<const EpisodeResult*> out;
    for (const auto& r : results) {
      if (r.trace == trace && r.variant == variant) out.push_back(&r);
    }
    return out;
  };
  for (const auto& trace : traces) {
    for (const auto& variant : variants) {
      const auto rows = select(trace, variant);
      if (rows.empty()) continue;
      ComparisonRow row{"variant", variant, trace, rows.size(), {}, {}};
      for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
        std::vector<double> xs;
        for (const auto* r : rows) xs.push_back(metric_values(r->report.metrics)[m]);
        row.mean[m] = mean_of(xs);
        row.std[m] = sample_std(xs);
      }
      table.rows.push_back(row);
    }
    const auto refs = select(trace, reference);
    if (refs.empty()) continue;
    for (const auto& variant : variants) {
      if (variant == reference) continue;
      const auto base = select(trace, variant);
      std::array<std::vector<double>, 4> imps;
      for (const auto* b : base) {
        const auto ref = std::find_if(refs.begin(), refs.end(), [&](const auto* r) { return r->seed == b->seed; });
        if (ref == refs.end()) continue;
        const auto bm = metric_values(b->report.metrics);
        const auto rm = metric_values((*ref)->report.metrics);
        for (std::size_t m = 0; m < 4; ++m) imps[m].push_back(improvement(bm[m], rm[m]));
      }
      if (imps[0].empty()) continue;
      ComparisonRow row{"improvement", reference + "_vs_" + variant, trace, imps[0].size(), {}, {}};
      for (std::size_t m = 0; m < 4; ++m) {
        row.mean[m] = mean_of(imps[m]);
        row.std[m] = sample_std(imps[m]);
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

std::string reference_variant(const RunConfig& config) {
  for (const auto& v : config.variants) {
    if (v == "bascaler") return v;
  }
  return config.variants.front();
}

std::vector<EpisodeResult> run_experiment(const RunConfig& config, const std::vector<NamedTrace>& traces,
                                          const ProgressLog& log) {
  config.validate();
  std::vector<Variant> variants;
  for (const auto& v : config.variants) variants.push_back(parse_variant(v));
  std::vector<EpisodeResult> results;
  for (const auto& nt : traces) {
    std::shared_ptr<const forecast::Forecaster> forecaster;
    if (std::any_of(variants.begin(), variants.end(), uses_model)) {
      if (log) log("training forecaster on " + nt.name);
      forecaster = train_forecaster(config, nt.trace);
    }
    for (const auto seed : config.seeds) {
      if (log) log("training models for " + nt.name + " seed " + std::to_string(seed));
      const auto models = train_models(config, nt.trace, seed, variants, forecaster);
      for (std::size_t i = 0; i < variants.size(); ++i) {
        const auto spec = make_spec(config, variants[i], seed, models);
        EpisodeResult r;
        r.variant = config.variants[i];
        r.trace = nt.name;
        r.seed = seed;
        r.report = run_episode(spec, nt.trace, default_window(spec, nt.trace), models.workload_scale);
        if (log)
          log(nt.name + " seed " + std::to_string(seed) + " " + r.variant + ": violation_rate " +
              format_double(r.report.metrics.violation_rate) + " cost " + format_double(r.report.metrics.cost));
        results.push_back(std::move(r));
      }
    }
  }
  return results;
}

ComparisonTable run_comparison(const RunConfig& config, const std::vector<NamedTrace>& traces,
                               const ProgressLog& log) {
  const auto results = run_experiment(config, traces, log);
  return tabulate(results, reference_variant(config));
}

void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "kind,variant,trace,seeds";
  for (const char* m : kMetricNames) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.kind << ',' << r.variant << ',' << r.trace << ',' << r.seeds;
    for (std::size_t m = 0; m < 4; ++m) out << ',' << format_double(r.mean[m]) << ',' << format_double(r.std[m]);
    out << '\n';
  }
}

std::string comparison_json(const ComparisonTable& table, const RunConfig& config) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json row{{"kind", r.kind}, {"variant", r.variant}, {"trace", r.trace}, {"seeds", r.seeds}};
    for (std::size_t m = 0; m < 4; ++m) {
      row[std::string(kMetricNames[m]) + "_mean"] = r.mean[m];
      row[std::string(kMetricNames[m]) + "_std"] = r.std[m];
    }
    rows.push_back(std::move(row));
  }
  json doc{{"format", "burstscale.comparison"},
           {"version", 1},
           {"reference", table.reference},
           {"rows", rows},
           {"run_config", run_config_to_json(config)}};
  return doc.dump(1) + "\n";
}

void write_plot_data(const std::filesystem::path& dir, const ComparisonTable& table) {
  std::filesystem::create_directories(dir);
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    std::ofstream out(dir / (std::string("plot_") + kMetricNames[m] + ".csv"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write plot data in " + dir.string());
    out << "trace,variant,mean,std\n";
    for (const auto& r : table.rows) {
      if (r.kind != "variant") continue;
      out << r.trace << ',' << r.variant << ',' << format_double(r.mean[m]) << ',' << format_double(r.std[m]) << '\n';
    }
  }
}

std::string episode_report_json(const EpisodeResult& result, const RunConfig& config) {
  json doc{{"format", "burstscale.episode"},
           {"version", 1},
           {"variant", result.variant},
           {"trace", result.trace},
           {"seed", result.seed},
           {"metrics", metrics_to_json(result.report.metrics)},
           {"degradations", result.report.degradations},
           {"run_config", run_config_to_json(config)}};
  return doc.dump(1) + "\n";
}

void write_detector_log(std::ostream& out, std::span<const DetectorRecord> records) {
  out << "t,distance,outliers,loss,proposal,burst\n";
  for (const auto& r : records) {
    out << r.t << ',' << format_double(r.distance) << ',' << r.outliers << ',' << format_double(r.loss) << ','
        << (r.proposal ? 1 : 0) << ',' << (r.burst ? 1 : 0) << '\n';
  }
}

}  // namespace burstscale::engine
