#include "burstscale/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"

namespace burstscale::sim {

namespace {

constexpr double kRuCeiling = 1.0 - 1e-6;

template <typename T>
T parse_field(const std::string& text, std::size_t row, const char* name) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw RowError(row, std::string("bad ") + name + " '" + text + "'");
  return value;
}

}  // namespace

void ClusterConfig::validate() const {
  if (!(capacity > 0)) throw ValidationError("sim: capacity must be positive");
  if (!(base_rt > 0)) throw ValidationError("sim: base_rt must be positive");
  if (!(saturation > 0 && saturation < 1)) throw ValidationError("sim: saturation must lie in (0, 1)");
  if (in_max < 1) throw ValidationError("sim: in_max must be at least 1");
  if (!(ru_noise >= 0)) throw ValidationError("sim: ru_noise must be non-negative");
  if (!(slo_ms > 0)) throw ValidationError("sim: slo_ms must be positive");
}

double utilization(int instances, double workload, const ClusterConfig& config) {
  if (instances < 1) throw ValidationError("sim: instances must be at least 1");
  return workload / (instances * config.capacity);
}

double ground_truth_rt(int instances, double workload, const ClusterConfig& config) {
  const double rho = utilization(instances, workload, config);
  const double knee = config.saturation;
  if (rho < knee) return config.base_rt / (1.0 - rho);
  const double slope = config.base_rt / ((1.0 - knee) * (1.0 - knee));
  return config.base_rt / (1.0 - knee) + slope * (rho - knee);
}

double ground_truth_ru(int instances, double workload, const ClusterConfig& config, std::uint64_t step) {
  const double rho = std::min(kRuCeiling, utilization(instances, workload, config));
  const double noise = config.ru_noise * (2.0 * hash_uniform01(config.seed, step) - 1.0);
  return std::clamp(rho + noise, 0.0, kRuCeiling);
}

long long request_errors(int instances, double workload, const ClusterConfig& config) {
  const double rho = utilization(instances, workload, config);
  if (rho <= 1.0) return 0;
  return std::llround(workload * (rho - 1.0) / rho);
}

Cluster::Cluster(ClusterConfig config, int initial_instances) : config_(config), effective_(initial_instances) {
  config_.validate();
  if (initial_instances < 1 || initial_instances > config_.in_max)
    throw ValidationError("sim: initial instances outside [1, in_max]");
}

void Cluster::apply_due() {
  while (!pending_.empty() && pending_.front().first <= now_) {
    effective_ = pending_.front().second;
    pending_.pop_front();
  }
}

void Cluster::schedule(int target) {
  if (target < 1 || target > config_.in_max)
    throw ValidationError("sim: target " + std::to_string(target) + " outside [1, in_max]");
  pending_.emplace_back(now_ + config_.delay, target);
}

StepOutcome Cluster::measure(double workload) {
  apply_due();
  StepOutcome out;
  out.instances = effective_;
  out.rt = ground_truth_rt(effective_, workload, config_);
  out.ru = ground_truth_ru(effective_, workload, config_, now_);
  out.errors = request_errors(effective_, workload, config_);
  out.violated = out.rt > config_.slo_ms;
  return out;
}

void Cluster::commit(int target) {
  schedule(target);
  ++now_;
}

StepOutcome Cluster::step(int target, double workload) {
  schedule(target);
  const StepOutcome out = measure(workload);
  ++now_;
  return out;
}

Metrics compute_metrics(std::span<const StepRecord> log, double slo_ms) {
  if (log.empty()) throw ValidationError("compute_metrics: empty step log");
  Metrics m;
  m.steps = log.size();
  std::size_t violations = 0;
  double instances = 0, rt_sum = 0;
  for (const auto& r : log) {
    violations += r.rt > slo_ms ? 1 : 0;
    instances += r.effective_in;
    m.errors += r.errors;
    rt_sum += r.rt;
  }
  const auto n = static_cast<double>(log.size());
  m.violation_rate = static_cast<double>(violations) / n;
  m.cost = instances / n;
  const double rt_mean = rt_sum / n;
  double ss = 0;
  for (const auto& r : log) ss += (r.rt - rt_mean) * (r.rt - rt_mean);
  m.rt_variance = ss / n;
  return m;
}

void write_step_log(std::ostream& out, std::span<const StepRecord> log) {
  out << "t,workload,target_in,effective_in,rt,ru,errors,violated,is_burst,decision_path\n";
  for (const auto& r : log) {
    out << r.t << ',' << format_double(r.workload) << ',' << r.target_in << ',' << r.effective_in << ','
        << format_double(r.rt) << ',' << format_double(r.ru) << ',' << r.errors << ',' << (r.violated ? 1 : 0)
        << ',' << (r.is_burst ? 1 : 0) << ',' << r.decision_path << '\n';
  }
}

std::vector<StepRecord> read_step_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("step log: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,workload,target_in,effective_in,rt,ru,errors,violated,is_burst,decision_path")
    throw ValidationError("step log: unexpected header");
  std::vector<StepRecord> log;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 10) throw RowError(row, "expected 10 fields");
    StepRecord r;
    r.t = parse_field<std::int64_t>(f[0], row, "t");
    r.workload = parse_field<double>(f[1], row, "workload");
    r.target_in = parse_field<int>(f[2], row, "target_in");
    r.effective_in = parse_field<int>(f[3], row, "effective_in");
    r.rt = parse_field<double>(f[4], row, "rt");
    r.ru = parse_field<double>(f[5], row, "ru");
    r.errors = parse_field<long long>(f[6], row, "errors");
    r.violated = parse_field<int>(f[7], row, "violated") != 0;
    r.is_burst = parse_field<int>(f[8], row, "is_burst") != 0;
    r.decision_path = f[9];
    log.push_back(std::move(r));
  }
  return log;
}

}  // namespace burstscale::sim
