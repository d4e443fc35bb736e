#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "burstscale/common.hpp"
#include "burstscale/experiment.hpp"
#include "burstscale/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace burstscale;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Applies `a.b.c=value` overrides to the config document. Values parse as JSON
// when they can and are taken as strings otherwise.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("--set: malformed key '" + path + "'");
    if (!node->is_object()) throw ValidationError("--set: '" + path + "' does not name an object member");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::vector<std::string> trace_paths;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  bool no_standardize = false;

  void add_to(CLI::App* cmd, bool multi_variant) {
    cmd->add_option("--config", config_path, "JSON run config (an output document with an embedded config also works)");
    cmd->add_option("--set", overrides, "Override a config value, e.g. --set engine.rl_episodes=20");
    cmd->add_option("--trace", trace_paths, "CSV trace(s) replacing the configured traces");
    if (multi_variant) cmd->add_option("--variants", variants, "Variants to compare");
    cmd->add_option("--seeds", seeds, "Seeds replacing the configured seeds");
    cmd->add_option("--out", output_dir, "Output directory");
    cmd->add_flag("--no-standardize", no_standardize, "Use trace values as they are");
  }

  engine::RunConfig resolve() const {
    json doc = config_path.empty() ? json::object() : json::parse(read_file(config_path), nullptr, false);
    if (doc.is_discarded()) throw ValidationError("config " + config_path + ": not valid JSON");
    if (doc.is_object() && doc.contains("format") && doc.contains("run_config")) doc = doc.at("run_config");
    if (!doc.is_object()) throw ValidationError("config: expected a JSON object");
    if (!trace_paths.empty()) {
      json traces = json::array();
      for (const auto& p : trace_paths) traces.push_back({{"kind", "csv"}, {"path", p}});
      doc["traces"] = traces;
    }
    if (!variants.empty()) doc["variants"] = variants;
    if (!seeds.empty()) doc["seeds"] = seeds;
    if (!output_dir.empty()) doc["output_dir"] = output_dir;
    if (no_standardize) doc["standardize"] = false;
    for (const auto& o : overrides) apply_override(doc, o);
    return engine::parse_run_config(doc.dump());
  }
};

// Adds the resolved config and seed to a serialized model document.
std::string with_provenance(const std::string& model_json, const engine::RunConfig& config, std::uint64_t seed) {
  json doc = json::parse(model_json);
  doc["run_config"] = json::parse(engine::run_config_json(config));
  doc["seed"] = seed;
  return doc.dump(1) + "\n";
}

void print_summary(const trace::WorkloadTrace& t) {
  const auto s = trace::summarize(t);
  std::cout << "length " << s.length << " mean " << format_double(s.mean) << " std " << format_double(s.std)
            << " min " << format_double(s.min) << " max " << format_double(s.max) << "\n";
}

int cmd_ingest(const std::string& csv, const std::string& article, const std::string& start, const std::string& end,
               const std::string& project, const std::string& cache_dir, bool no_standardize, const std::string& out) {
  engine::TraceSource source;
  if (!csv.empty()) {
    if (!article.empty()) throw ValidationError("ingest: give either --csv or --article, not both");
    source.kind = "csv";
    source.path = csv;
  } else {
    if (article.empty() || start.empty() || end.empty())
      throw ValidationError("ingest: --csv or --article with --start and --end is required");
    source.kind = "pageviews";
    source.article = article;
    source.start = start;
    source.end = end;
    source.project = project;
    source.cache_dir = cache_dir;
  }
  const auto named = engine::resolve_trace(source, !no_standardize);
  trace::save_trace(out, named.trace);
  print_summary(named.trace);
  if (named.clamped > 0) std::cerr << "note: " << named.clamped << " values clamped at 0\n";
  return 0;
}

int cmd_synth(const std::string& kind, std::size_t length, std::uint64_t seed, double noise, const std::string& out) {
  trace::SyntheticSpec spec;
  spec.kind = trace::parse_synthetic_kind(kind);
  spec.length = length;
  spec.seed = seed;
  spec.noise = noise;
  if (length < 2) throw ValidationError("synth: --length must be at least 2");
  const auto result = trace::synthesize(spec);
  trace::save_trace(out, result.trace);
  print_summary(result.trace);
  if (!result.burst_onsets.empty()) {
    std::cout << "burst onsets";
    for (auto i : result.burst_onsets) std::cout << ' ' << i;
    std::cout << "\n";
  }
  return 0;
}

int cmd_train(engine::RunConfig config) {
  if (config.traces.size() != 1)
    throw ValidationError("train: exactly one trace is required (got " + std::to_string(config.traces.size()) + ")");
  const std::uint64_t seed = config.seeds.front();
  config.seeds = {seed};
  const auto nt = engine::resolve_trace(config.traces.front(), config.standardize);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);

  forecast::TrainingReport report;
  std::shared_ptr<const forecast::Forecaster> forecaster;
  try {
    forecaster = engine::train_forecaster(config, nt.trace, &report);
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("forecaster: ") + e.what());
  }
  write_file(dir / "forecaster.json", with_provenance(forecast::serialize(*forecaster), config, seed));
  std::cout << "forecaster: " << config.engine.forecaster;
  if (!report.loss_curve.empty())
    std::cout << " epochs " << report.epochs << " loss " << format_double(report.initial_loss) << " -> "
              << format_double(report.loss_curve.back());
  std::cout << "\n";

  std::vector<engine::Variant> variants;
  for (const auto& v : config.variants) variants.push_back(engine::parse_variant(v));
  engine::TrainedModels models;
  try {
    auto model_variants = variants;
    if (std::none_of(variants.begin(), variants.end(), engine::uses_model)) model_variants.push_back(engine::Variant::kAbRl);
    models = engine::train_models(config, nt.trace, seed, model_variants, forecaster);
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("training: ") + e.what());
  }
  write_file(dir / "perfmodel.json", with_provenance(perf::serialize(*models.perf_model), config, seed));
  std::cout << "perfmodel: " << models.perf_model->support_vectors().rows() << " support vectors, "
            << (models.perf_model->converged ? "converged" : "not converged") << " after "
            << models.perf_model->iterations << " iterations\n";
  for (const auto& [variant, agent] : models.agents) {
    const std::string name = engine::to_string(variant);
    write_file(dir / ("agent_" + name + ".json"), with_provenance(rl::serialize(*agent), config, seed));
    const auto& curve = models.learning_curves.at(variant);
    std::ostringstream lc;
    rl::write_learning_curve(lc, curve);
    write_file(dir / ("learning_curve_" + name + ".csv"), lc.str());
    std::cout << "agent " << name << ": " << curve.size() << " episodes, final reward "
              << format_double(curve.empty() ? 0.0 : curve.back()) << "\n";
  }
  write_file(dir / "run_config.json", engine::run_config_json(config));
  return 0;
}

engine::TrainedModels load_models(const fs::path& dir, engine::Variant variant, const engine::RunConfig& config,
                                  const trace::WorkloadTrace& trace) {
  engine::TrainedModels models;
  models.workload_scale = engine::workload_scale(config, trace);
  if (!engine::uses_model(variant)) return models;
  if (dir.empty()) throw ValidationError("run: variant " + engine::to_string(variant) + " needs --models");
  models.forecaster = forecast::load_forecaster(dir / "forecaster.json");
  models.perf_model = std::make_shared<const perf::SvrModel>(perf::load_svr(dir / "perfmodel.json"));
  if (engine::uses_agent(variant)) {
    const auto path = dir / ("agent_" + engine::to_string(variant) + ".json");
    if (!fs::exists(path)) throw ValidationError("run: missing " + path.string() + " (train with this variant)");
    models.agents[variant] = std::make_shared<const rl::Agent>(rl::load_agent(path));
  }
  return models;
}

int cmd_run(engine::RunConfig config, const std::string& variant_name, const std::string& models_dir) {
  if (config.traces.size() != 1)
    throw ValidationError("run: exactly one trace is required (got " + std::to_string(config.traces.size()) + ")");
  const auto variant = engine::parse_variant(variant_name);
  const std::uint64_t seed = config.seeds.front();
  config.seeds = {seed};
  config.variants = {variant_name};
  const auto nt = engine::resolve_trace(config.traces.front(), config.standardize);
  const auto models = load_models(models_dir, variant, config, nt.trace);
  const auto spec = engine::make_spec(config, variant, seed, models);

  engine::EpisodeResult result;
  result.variant = variant_name;
  result.trace = nt.name;
  result.seed = seed;
  result.report = engine::run_episode(spec, nt.trace, engine::default_window(spec, nt.trace), models.workload_scale);

  const fs::path dir = config.output_dir;
  const std::string stem = nt.name + "_" + variant_name + "_" + std::to_string(seed);
  std::ostringstream steps, detector;
  sim::write_step_log(steps, result.report.steps);
  write_file(dir / (stem + "_steps.csv"), steps.str());
  engine::write_detector_log(detector, result.report.detector);
  write_file(dir / (stem + "_detector.csv"), detector.str());
  write_file(dir / (stem + "_report.json"), engine::episode_report_json(result, config));
  write_file(dir / (stem + "_config.json"), engine::run_config_json(config));
  const auto& m = result.report.metrics;
  std::cout << variant_name << " on " << nt.name << " seed " << seed << ": violation_rate "
            << format_double(m.violation_rate) << " cost " << format_double(m.cost) << " errors " << m.errors
            << " rt_variance " << format_double(m.rt_variance) << " steps " << m.steps << "\n";
  return 0;
}

int cmd_compare(engine::RunConfig config, bool ablations, bool quiet) {
  if (ablations) {
    for (const char* v : {"ab_burst", "ab_pred", "ab_rl"}) {
      if (std::find(config.variants.begin(), config.variants.end(), v) == config.variants.end())
        config.variants.push_back(v);
    }
  }
  if (config.variants.size() < 2) throw ValidationError("compare: at least two variants are required");
  const auto traces = engine::resolve_traces(config);
  engine::ProgressLog log;
  if (!quiet) log = [](const std::string& line) { std::cerr << line << "\n"; };
  const auto results = engine::run_experiment(config, traces, log);
  const auto table = engine::tabulate(results, engine::reference_variant(config));

  const fs::path dir = config.output_dir;
  std::ostringstream csv;
  engine::write_comparison_csv(csv, table);
  write_file(dir / "comparison.csv", csv.str());
  write_file(dir / "comparison.json", engine::comparison_json(table, config));
  write_file(dir / "run_config.json", engine::run_config_json(config));
  engine::write_plot_data(dir / "plots", table);
  for (const auto& r : results) {
    const std::string stem = r.trace + "_" + r.variant + "_" + std::to_string(r.seed);
    std::ostringstream steps;
    sim::write_step_log(steps, r.report.steps);
    write_file(dir / "episodes" / (stem + "_steps.csv"), steps.str());
    write_file(dir / "episodes" / (stem + "_report.json"), engine::episode_report_json(r, config));
  }
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Burst-aware autoscaling: traces, training, episodes and comparisons"};
  app.require_subcommand(1);

  auto* ingest = app.add_subcommand("ingest", "Load a CSV or fetch Wikimedia pageviews, standardize and save");
  std::string csv, article, start, end, project = "en.wikipedia", cache_dir, ingest_out;
  bool no_standardize = false;
  ingest->add_option("--csv", csv, "CSV with timestamp,value columns");
  ingest->add_option("--article", article, "Wikipedia article title");
  ingest->add_option("--start", start, "First day, YYYY-MM-DD");
  ingest->add_option("--end", end, "Last day, YYYY-MM-DD");
  ingest->add_option("--project", project, "Wikimedia project");
  ingest->add_option("--cache-dir", cache_dir, "Directory for raw response fixtures");
  ingest->add_flag("--no-standardize", no_standardize, "Write values as they are");
  ingest->add_option("-o,--out", ingest_out, "Output CSV")->required();

  auto* synth = app.add_subcommand("synth", "Write a synthetic hourly trace");
  std::string kind = "periodic", synth_out;
  std::size_t length = 2016;
  std::uint64_t synth_seed = 1;
  double noise = 0.04;
  synth->add_option("--kind", kind, "periodic, periodic_spikes, bursty or random_walk");
  synth->add_option("--length", length, "Number of hourly steps");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--noise", noise, "Relative Gaussian noise");
  synth->add_option("-o,--out", synth_out, "Output CSV")->required();

  ConfigOptions train_opts, run_opts, compare_opts;
  auto* train = app.add_subcommand("train", "Train the forecaster, performance model and agents");
  train_opts.add_to(train, true);

  auto* run = app.add_subcommand("run", "Run one episode and write its step log and report");
  run_opts.add_to(run, false);
  std::string variant = "bascaler", models_dir;
  run->add_option("--variant", variant, "bascaler, hpa, ab_burst, ab_pred or ab_rl");
  run->add_option("--models", models_dir, "Directory written by train");

  auto* compare = app.add_subcommand("compare", "Compare variants across traces and seeds");
  compare_opts.add_to(compare, true);
  bool ablations = false, quiet = false;
  compare->add_flag("--ablations", ablations, "Add ab_burst, ab_pred and ab_rl");
  compare->add_flag("-q,--quiet", quiet, "No progress lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(csv, article, start, end, project, cache_dir, no_standardize, ingest_out);
    if (*synth) return cmd_synth(kind, length, synth_seed, noise, synth_out);
    if (*train) return cmd_train(train_opts.resolve());
    if (*run) return cmd_run(run_opts.resolve(), variant, models_dir);
    if (*compare) return cmd_compare(compare_opts.resolve(), ablations, quiet);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
