#ifndef BURSTSCALE_TRACE_HPP_
#define BURSTSCALE_TRACE_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace burstscale::trace {

/// Request-rate series on a fixed time step.
///
/// Invariants (checked on construction): equal lengths, strictly increasing
/// timestamps with constant spacing, finite non-negative values.
class WorkloadTrace {
 public:
  WorkloadTrace() = default;
  WorkloadTrace(std::vector<std::int64_t> timestamps, std::vector<double> values);

  /// Trace starting at `start` with spacing `step_seconds`.
  static WorkloadTrace regular(std::int64_t start, std::int64_t step_seconds, std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::int64_t step_seconds() const noexcept { return step_; }

  const std::vector<std::int64_t>& timestamps() const noexcept { return timestamps_; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Sub-trace [first, first + count).
  WorkloadTrace slice(std::size_t first, std::size_t count) const;

  friend bool operator==(const WorkloadTrace&, const WorkloadTrace&) = default;

 private:
  std::vector<std::int64_t> timestamps_;
  std::vector<double> values_;
  std::int64_t step_ = 3600;
};

struct CsvColumns {
  std::string timestamp = "timestamp";
  std::string value = "value";
};

/// Parses a headed CSV. Rows may arrive in any order; they are sorted by timestamp.
/// Throws RowError (1-based data row) on non-numeric fields, duplicate timestamps
/// or irregular spacing, ValidationError on a missing column.
WorkloadTrace parse_trace_csv(std::istream& in, const CsvColumns& columns = {});
WorkloadTrace load_trace(const std::filesystem::path& path, const CsvColumns& columns = {});

void write_trace_csv(std::ostream& out, const WorkloadTrace& trace);
void save_trace(const std::filesystem::path& path, const WorkloadTrace& trace);

struct StandardizeResult {
  WorkloadTrace trace;
  std::size_t clamped = 0;  // values mapped below zero and clamped
};

inline constexpr double kTargetMean = 500.0;
inline constexpr double kTargetStd = 175.0;

/// Z-score (sample std) followed by the affine map onto (target_mean, target_std).
StandardizeResult standardize(const WorkloadTrace& trace, double target_mean = kTargetMean,
                              double target_std = kTargetStd);

struct Summary {
  std::size_t length = 0;
  double mean = 0, std = 0, min = 0, max = 0;
};
Summary summarize(const WorkloadTrace& trace);

enum class TemporalType { kHourOfDay, kDayOfWeek, kDayOfMonth, kMonthOfYear };

inline constexpr TemporalType kAllTemporalTypes[] = {TemporalType::kHourOfDay, TemporalType::kDayOfWeek,
                                                     TemporalType::kDayOfMonth, TemporalType::kMonthOfYear};

/// Calendar value h and period L of `type` at a UTC epoch timestamp.
/// Days of week count from Monday = 0; day-of-month and month are 0-based.
struct CalendarValue {
  int value;
  int period;
};
CalendarValue calendar_value(std::int64_t timestamp, TemporalType type);

/// Per type: h / (L - 1) - 0.5, so every entry lies in [-0.5, 0.5].
Eigen::VectorXd time_features(std::int64_t timestamp,
                              std::span<const TemporalType> types = kAllTemporalTypes);

/// The `length` observations ending at index `t` (inclusive), oldest first.
struct InputWindow {
  Eigen::VectorXd values;
  std::vector<std::int64_t> timestamps;
  Eigen::MatrixXd features;  // one row of time features per observation
  std::int64_t step_seconds = 3600;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  std::int64_t last_timestamp() const { return timestamps.back(); }
};

InputWindow window(const WorkloadTrace& trace, std::size_t t, std::size_t length);

}  // namespace burstscale::trace

#endif  // BURSTSCALE_TRACE_HPP_
