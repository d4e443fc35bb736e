#include "burstscale/trace.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "burstscale/common.hpp"

namespace burstscale::trace {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc{} && ptr == field.data() + field.size();
}

}  // namespace

WorkloadTrace::WorkloadTrace(std::vector<std::int64_t> timestamps, std::vector<double> values)
    : timestamps_(std::move(timestamps)), values_(std::move(values)) {
  if (timestamps_.size() != values_.size())
    throw ValidationError("trace: timestamps and values differ in length");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || values_[i] < 0.0)
      throw RowError(i + 1, "value must be finite and non-negative");
  }
  if (timestamps_.size() >= 2) {
    step_ = timestamps_[1] - timestamps_[0];
    if (step_ <= 0) throw RowError(2, "timestamps must be strictly increasing");
    for (std::size_t i = 2; i < timestamps_.size(); ++i) {
      if (timestamps_[i] - timestamps_[i - 1] != step_) throw RowError(i + 1, "irregular spacing");
    }
  }
}

WorkloadTrace WorkloadTrace::regular(std::int64_t start, std::int64_t step_seconds, std::vector<double> values) {
  if (step_seconds <= 0) throw ValidationError("trace: step must be positive");
  std::vector<std::int64_t> ts(values.size());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = start + static_cast<std::int64_t>(i) * step_seconds;
  WorkloadTrace out(std::move(ts), std::move(values));
  out.step_ = step_seconds;
  return out;
}

WorkloadTrace WorkloadTrace::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw ValidationError("trace: slice out of range");
  WorkloadTrace out({timestamps_.begin() + first, timestamps_.begin() + first + count},
                    {values_.begin() + first, values_.begin() + first + count});
  out.step_ = step_;
  return out;
}

WorkloadTrace parse_trace_csv(std::istream& in, const CsvColumns& columns) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace csv: empty input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  auto header = split(line);
  auto find_col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("trace csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = find_col(columns.timestamp);
  const std::size_t val_col = find_col(columns.value);

  struct Row {
    std::int64_t ts;
    double value;
    std::size_t row;
  };
  std::vector<Row> rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto fields = split(line);
    if (fields.size() <= std::max(ts_col, val_col)) throw RowError(row, "too few fields");
    Row r{0, 0.0, row};
    if (!parse_number(fields[ts_col], r.ts)) throw RowError(row, "non-integer timestamp");
    if (!parse_number(fields[val_col], r.value) || !std::isfinite(r.value))
      throw RowError(row, "non-numeric value");
    if (r.value < 0.0) throw RowError(row, "negative value");
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].ts == rows[i - 1].ts)
      throw RowError(rows[i].row, "duplicate timestamp " + std::to_string(rows[i].ts));
  }
  for (std::size_t i = 2; i < rows.size(); ++i) {
    if (rows[i].ts - rows[i - 1].ts != rows[1].ts - rows[0].ts)
      throw RowError(rows[i].row, "irregular spacing at timestamp " + std::to_string(rows[i].ts));
  }
  std::vector<std::int64_t> ts;
  std::vector<double> values;
  ts.reserve(rows.size());
  values.reserve(rows.size());
  for (const auto& r : rows) {
    ts.push_back(r.ts);
    values.push_back(r.value);
  }
  return WorkloadTrace(std::move(ts), std::move(values));
}

WorkloadTrace load_trace(const std::filesystem::path& path, const CsvColumns& columns) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read trace file " + path.string());
  return parse_trace_csv(in, columns);
}

void write_trace_csv(std::ostream& out, const WorkloadTrace& trace) {
  out << "timestamp,value\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << trace.timestamps()[i] << ',' << format_double(trace[i]) << '\n';
}

void save_trace(const std::filesystem::path& path, const WorkloadTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  write_trace_csv(out, trace);
}

Summary summarize(const WorkloadTrace& trace) {
  Summary s;
  s.length = trace.size();
  if (trace.empty()) return s;
  const auto& v = trace.values();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

StandardizeResult standardize(const WorkloadTrace& trace, double target_mean, double target_std) {
  if (trace.size() < 2) throw ValidationError("standardize: need at least two values");
  const auto summary = summarize(trace);
  if (!(summary.std > 0.0)) throw ValidationError("standardize: zero variance");
  StandardizeResult result;
  std::vector<double> out(trace.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double z = (trace[i] - summary.mean) / summary.std;
    double v = target_mean + target_std * z;
    if (v < 0.0) {
      v = 0.0;
      ++result.clamped;
    }
    out[i] = v;
  }
  result.trace = WorkloadTrace::regular(trace.timestamps().front(), trace.step_seconds(), std::move(out));
  return result;
}

CalendarValue calendar_value(std::int64_t timestamp, TemporalType type) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{timestamp}};
  const auto day = floor<days>(tp);
  switch (type) {
    case TemporalType::kHourOfDay:
      return {static_cast<int>(duration_cast<hours>(tp - day).count()), 24};
    case TemporalType::kDayOfWeek:
      return {static_cast<int>(weekday{day}.iso_encoding()) - 1, 7};
    case TemporalType::kDayOfMonth:
      return {static_cast<int>(static_cast<unsigned>(year_month_day{day}.day())) - 1, 31};
    case TemporalType::kMonthOfYear:
      return {static_cast<int>(static_cast<unsigned>(year_month_day{day}.month())) - 1, 12};
  }
  throw std::logic_error("unknown temporal type");
}

Eigen::VectorXd time_features(std::int64_t timestamp, std::span<const TemporalType> types) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(types.size()));
  for (std::size_t i = 0; i < types.size(); ++i) {
    auto [h, period] = calendar_value(timestamp, types[i]);
    out[static_cast<Eigen::Index>(i)] = static_cast<double>(h) / (period - 1) - 0.5;
  }
  return out;
}

InputWindow window(const WorkloadTrace& trace, std::size_t t, std::size_t length) {
  if (length == 0) throw ValidationError("window: length must be positive");
  if (t >= trace.size()) throw ValidationError("window: index past end of trace");
  if (t + 1 < length)
    throw ValidationError("window: insufficient history (t=" + std::to_string(t) +
                          ", length=" + std::to_string(length) + ")");
  InputWindow w;
  const std::size_t first = t + 1 - length;
  const auto n = static_cast<Eigen::Index>(length);
  w.values.resize(n);
  w.timestamps.resize(length);
  w.features.resize(n, static_cast<Eigen::Index>(std::size(kAllTemporalTypes)));
  w.step_seconds = trace.step_seconds();
  for (std::size_t i = 0; i < length; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    w.values[r] = trace[first + i];
    w.timestamps[i] = trace.timestamps()[first + i];
    w.features.row(r) = time_features(w.timestamps[i]).transpose();
  }
  return w;
}

}  // namespace burstscale::trace
