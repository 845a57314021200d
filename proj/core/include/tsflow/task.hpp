#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

struct BankSet;

enum class TaskKind { Forecasting, Generation };

std::string_view to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view text);

/// A T x d multivariate series. Rows are timesteps, columns are features.
/// Validated on construction and immutable afterwards.
class TimeSeriesFrame {
 public:
  TimeSeriesFrame(Eigen::MatrixXd values, std::vector<std::string> feature_names,
                  std::vector<std::string> timestamps = {});

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const std::vector<std::string>& timestamps() const noexcept { return timestamps_; }
  bool has_timestamps() const noexcept { return !timestamps_.empty(); }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t features() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  /// Rows [begin, end).
  TimeSeriesFrame slice_rows(std::size_t begin, std::size_t end) const;

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> timestamps_;
};

struct WindowSpec {
  std::size_t input_len = 1;
  std::size_t horizon = 1;
  std::size_t stride = 1;
};

/// One supervised pair: `input` is input_len x d, `target` is horizon x d.
struct Window {
  Eigen::MatrixXd input;
  Eigen::MatrixXd target;
};

/// floor((T - p - q) / stride) + 1, or 0 when T < p + q.
std::size_t window_count(std::size_t rows, const WindowSpec& spec) noexcept;

/// Window i covers input rows [i*stride, i*stride + p) and target rows
/// [i*stride + p, i*stride + p + q). Throws FrameTooShort when T < p + q.
std::vector<Window> make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec);

/// Contiguous segments of `length` rows for generation tasks, one every `stride` rows.
std::vector<Eigen::MatrixXd> make_segments(const TimeSeriesFrame& frame, std::size_t length,
                                           std::size_t stride);

struct DatasetSplit {
  TimeSeriesFrame train;
  TimeSeriesFrame test;
  WindowSpec window;
};

/// Checks that train/test share features and (when stamped) do not overlap in time.
DatasetSplit make_split(TimeSeriesFrame train, TimeSeriesFrame test, WindowSpec window);

/// Chronological holdout: the last floor(T * test_fraction) rows become test.
DatasetSplit split_chronological(const TimeSeriesFrame& frame, const WindowSpec& window,
                                 double test_fraction = 0.2);

enum class DataFormat { CsvWide, JsonFrame };

std::string_view to_string(DataFormat format) noexcept;
DataFormat parse_data_format(std::string_view text);
/// csv-wide for .csv, json-frame for .json.
DataFormat infer_data_format(const std::filesystem::path& path);

TimeSeriesFrame load_frame(const std::filesystem::path& path, DataFormat format);
void save_frame(const TimeSeriesFrame& frame, const std::filesystem::path& path, DataFormat format);

TimeSeriesFrame parse_csv_wide(std::string_view text);
std::string to_csv_wide(const TimeSeriesFrame& frame);

nlohmann::json to_json_frame(const TimeSeriesFrame& frame);
TimeSeriesFrame from_json_frame(const nlohmann::json& doc);

DatasetSplit load_dataset(const std::filesystem::path& path, DataFormat format,
                          const WindowSpec& window, double test_fraction = 0.2);

struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::Forecasting;
  std::string description;
  std::shared_ptr<const DatasetSplit> dataset;
  std::vector<std::string> criteria;
  std::string primary_criterion;
};

/// Reads a sidecar task file (JSON). Relative dataset paths resolve against the
/// sidecar's directory.
TaskSpec load_task(const std::filesystem::path& path);

struct TaskViolation {
  enum class Kind { UnknownMetric, KindMismatch, PrimaryNotInCriteria, EmptyCriteria, WindowTooLong };
  Kind kind;
  std::string detail;
};

std::string_view to_string(TaskViolation::Kind kind) noexcept;

/// Empty result means the task is valid against the banks.
std::vector<TaskViolation> validate_task(const TaskSpec& spec, const BankSet& banks);

}  // namespace tsflow
