#include "tsflow/task.hpp"

#include "tsflow/banks.hpp"
#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tsflow {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

double parse_cell(std::string_view cell, std::size_t line_no) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
    throw Error(ErrorCode::NonNumericCell,
                "line " + std::to_string(line_no) + ": '" + std::string(cell) + "'");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NaNDetected, "line " + std::to_string(line_no));
  }
  return value;
}

}  // namespace

std::string_view to_string(TaskKind kind) noexcept {
  return kind == TaskKind::Forecasting ? "forecasting" : "generation";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "forecasting") return TaskKind::Forecasting;
  if (text == "generation") return TaskKind::Generation;
  throw Error(ErrorCode::InvalidArgument, "unknown task kind '" + std::string(text) + "'");
}

TimeSeriesFrame::TimeSeriesFrame(Eigen::MatrixXd values, std::vector<std::string> feature_names,
                                 std::vector<std::string> timestamps)
    : values_(std::move(values)),
      feature_names_(std::move(feature_names)),
      timestamps_(std::move(timestamps)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw Error(ErrorCode::InvalidFrame, "frame needs at least one row and one feature");
  }
  if (!values_.allFinite()) throw Error(ErrorCode::NaNDetected, "frame contains NaN or Inf");
  if (feature_names_.size() != static_cast<std::size_t>(values_.cols())) {
    throw Error(ErrorCode::InvalidFrame, "feature_names length " +
                                             std::to_string(feature_names_.size()) +
                                             " does not match d=" + std::to_string(values_.cols()));
  }
  if (!timestamps_.empty()) {
    if (timestamps_.size() != static_cast<std::size_t>(values_.rows())) {
      throw Error(ErrorCode::InvalidFrame, "timestamps length does not match T");
    }
    // ISO-8601 strings in one format order lexicographically.
    for (std::size_t i = 1; i < timestamps_.size(); ++i) {
      if (!(timestamps_[i - 1] < timestamps_[i])) {
        throw Error(ErrorCode::InvalidFrame,
                    "timestamps not strictly increasing at row " + std::to_string(i));
      }
    }
  }
}

TimeSeriesFrame TimeSeriesFrame::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > rows()) {
    throw Error(ErrorCode::InvalidArgument, "bad row slice [" + std::to_string(begin) + ", " +
                                                std::to_string(end) + ")");
  }
  const auto n = static_cast<Eigen::Index>(end - begin);
  Eigen::MatrixXd block = values_.middleRows(static_cast<Eigen::Index>(begin), n);
  std::vector<std::string> stamps;
  if (has_timestamps()) {
    stamps.assign(timestamps_.begin() + static_cast<std::ptrdiff_t>(begin),
                  timestamps_.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return TimeSeriesFrame(std::move(block), feature_names_, std::move(stamps));
}

std::size_t window_count(std::size_t rows, const WindowSpec& spec) noexcept {
  if (spec.stride == 0 || rows < spec.input_len + spec.horizon) return 0;
  return (rows - spec.input_len - spec.horizon) / spec.stride + 1;
}

std::vector<Window> make_windows(const TimeSeriesFrame& frame, const WindowSpec& spec) {
  if (spec.input_len < 1 || spec.horizon < 1 || spec.stride < 1) {
    throw Error(ErrorCode::InvalidArgument, "window p, q and stride must be >= 1");
  }
  const std::size_t total = frame.rows();
  if (total < spec.input_len + spec.horizon) {
    throw Error(ErrorCode::FrameTooShort, "T=" + std::to_string(total) +
                                              " p=" + std::to_string(spec.input_len) +
                                              " q=" + std::to_string(spec.horizon));
  }
  const std::size_t n = window_count(total, spec);
  const auto p = static_cast<Eigen::Index>(spec.input_len);
  const auto q = static_cast<Eigen::Index>(spec.horizon);
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto start = static_cast<Eigen::Index>(i * spec.stride);
    out.push_back(Window{frame.values().middleRows(start, p), frame.values().middleRows(start + p, q)});
  }
  return out;
}

std::vector<Eigen::MatrixXd> make_segments(const TimeSeriesFrame& frame, std::size_t length,
                                           std::size_t stride) {
  if (length < 1 || stride < 1) throw Error(ErrorCode::InvalidArgument, "segment length and stride must be >= 1");
  if (frame.rows() < length) {
    throw Error(ErrorCode::FrameTooShort,
                "T=" + std::to_string(frame.rows()) + " segment=" + std::to_string(length));
  }
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t start = 0; start + length <= frame.rows(); start += stride) {
    out.emplace_back(frame.values().middleRows(static_cast<Eigen::Index>(start),
                                               static_cast<Eigen::Index>(length)));
  }
  return out;
}

DatasetSplit make_split(TimeSeriesFrame train, TimeSeriesFrame test, WindowSpec window) {
  if (train.feature_names() != test.feature_names()) {
    throw Error(ErrorCode::InvalidFrame, "train and test feature names differ");
  }
  if (train.has_timestamps() && test.has_timestamps() &&
      !(train.timestamps().back() < test.timestamps().front())) {
    throw Error(ErrorCode::InvalidFrame, "train and test time ranges overlap");
  }
  if (window.input_len < 1 || window.horizon < 1 || window.stride < 1) {
    throw Error(ErrorCode::InvalidArgument, "window p, q and stride must be >= 1");
  }
  return DatasetSplit{std::move(train), std::move(test), window};
}

DatasetSplit split_chronological(const TimeSeriesFrame& frame, const WindowSpec& window,
                                 double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_fraction must be in (0, 1)");
  }
  const std::size_t total = frame.rows();
  const auto test_rows = static_cast<std::size_t>(std::floor(static_cast<double>(total) * test_fraction));
  if (test_rows < 1 || test_rows >= total) {
    throw Error(ErrorCode::FrameTooShort, "T=" + std::to_string(total) + " too short to split");
  }
  return make_split(frame.slice_rows(0, total - test_rows), frame.slice_rows(total - test_rows, total),
                    window);
}

std::string_view to_string(DataFormat format) noexcept {
  return format == DataFormat::CsvWide ? "csv-wide" : "json-frame";
}

DataFormat parse_data_format(std::string_view text) {
  if (text == "csv-wide") return DataFormat::CsvWide;
  if (text == "json-frame") return DataFormat::JsonFrame;
  throw Error(ErrorCode::InvalidArgument, "unknown data format '" + std::string(text) + "'");
}

DataFormat infer_data_format(const std::filesystem::path& path) {
  return path.extension() == ".json" ? DataFormat::JsonFrame : DataFormat::CsvWide;
}

TimeSeriesFrame parse_csv_wide(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    lines.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw Error(ErrorCode::MalformedRow, "line 1: missing header");

  auto header = split_commas(lines.front());
  if (!header.empty() && header.front().size() >= 3 &&
      header.front().substr(0, 3) == "\xEF\xBB\xBF") {
    header.front().remove_prefix(3);
  }
  const bool stamped = !header.empty() && header.front() == "timestamp";
  std::vector<std::string> names;
  for (std::size_t c = stamped ? 1 : 0; c < header.size(); ++c) {
    if (header[c].empty()) throw Error(ErrorCode::MalformedRow, "line 1: empty feature name");
    names.emplace_back(header[c]);
  }
  if (names.empty()) throw Error(ErrorCode::MalformedRow, "line 1: no feature columns");

  const std::size_t rows = lines.size() - 1;
  if (rows == 0) throw Error(ErrorCode::InvalidFrame, "no data rows");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
  std::vector<std::string> stamps;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t line_no = r + 2;
    auto cells = split_commas(lines[r + 1]);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(header.size()) + " cells, got " +
                                               std::to_string(cells.size()));
    }
    std::size_t c0 = 0;
    if (stamped) {
      stamps.emplace_back(cells[0]);
      c0 = 1;
    }
    for (std::size_t c = c0; c < cells.size(); ++c) {
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - c0)) =
          parse_cell(cells[c], line_no);
    }
  }
  return TimeSeriesFrame(std::move(values), std::move(names), std::move(stamps));
}

std::string to_csv_wide(const TimeSeriesFrame& frame) {
  std::string out;
  if (frame.has_timestamps()) out += "timestamp,";
  for (std::size_t c = 0; c < frame.features(); ++c) {
    if (c) out += ',';
    out += frame.feature_names()[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    if (frame.has_timestamps()) {
      out += frame.timestamps()[r];
      out += ',';
    }
    for (std::size_t c = 0; c < frame.features(); ++c) {
      if (c) out += ',';
      out += format_double(frame.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out += '\n';
  }
  return out;
}

nlohmann::json to_json_frame(const TimeSeriesFrame& frame) {
  nlohmann::json doc;
  doc["feature_names"] = frame.feature_names();
  if (frame.has_timestamps()) doc["timestamps"] = frame.timestamps();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < frame.values().rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < frame.values().cols(); ++c) row.push_back(frame.values()(r, c));
    rows.push_back(std::move(row));
  }
  doc["values"] = std::move(rows);
  return doc;
}

TimeSeriesFrame from_json_frame(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedRow, "json-frame must be an object");
  if (!doc.contains("feature_names") || !doc["feature_names"].is_array()) {
    throw Error(ErrorCode::MalformedRow, "json-frame: feature_names missing");
  }
  if (!doc.contains("values") || !doc["values"].is_array()) {
    throw Error(ErrorCode::MalformedRow, "json-frame: values missing");
  }
  std::vector<std::string> names;
  for (const auto& n : doc["feature_names"]) {
    if (!n.is_string()) throw Error(ErrorCode::MalformedRow, "json-frame: feature name not a string");
    names.push_back(n.get<std::string>());
  }
  const auto& rows = doc["values"];
  if (rows.empty()) throw Error(ErrorCode::InvalidFrame, "no data rows");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (!row.is_array() || row.size() != names.size()) {
      throw Error(ErrorCode::MalformedRow, "row " + std::to_string(r) + ": expected " +
                                               std::to_string(names.size()) + " values");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c].is_number()) {
        throw Error(ErrorCode::NonNumericCell, "row " + std::to_string(r) + " col " + std::to_string(c));
      }
      const double v = row[c].get<double>();
      if (!std::isfinite(v)) throw Error(ErrorCode::NaNDetected, "row " + std::to_string(r));
      values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  std::vector<std::string> stamps;
  if (doc.contains("timestamps") && !doc["timestamps"].is_null()) {
    for (const auto& t : doc["timestamps"]) stamps.push_back(t.get<std::string>());
  }
  return TimeSeriesFrame(std::move(values), std::move(names), std::move(stamps));
}

TimeSeriesFrame load_frame(const std::filesystem::path& path, DataFormat format) {
  const std::string text = read_file(path);
  if (format == DataFormat::CsvWide) return parse_csv_wide(text);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedRow, path.string() + ": " + e.what());
  }
  return from_json_frame(doc);
}

void save_frame(const TimeSeriesFrame& frame, const std::filesystem::path& path, DataFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  if (format == DataFormat::CsvWide) {
    out << to_csv_wide(frame);
  } else {
    out << to_json_frame(frame).dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

DatasetSplit load_dataset(const std::filesystem::path& path, DataFormat format,
                          const WindowSpec& window, double test_fraction) {
  return split_chronological(load_frame(path, format), window, test_fraction);
}

namespace {

const nlohmann::json& require(const nlohmann::json& doc, const char* field, const std::string& file) {
  if (!doc.contains(field)) throw Error(ErrorCode::SchemaViolation, file + ": missing '" + field + "'");
  return doc[field];
}

std::size_t positive_size(const nlohmann::json& v, const char* field, const std::string& file) {
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw Error(ErrorCode::SchemaViolation, file + ": '" + field + "' must be a positive integer");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

}  // namespace

TaskSpec load_task(const std::filesystem::path& path) {
  const std::string file = path.string();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, file + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, file + ": task must be an object");

  TaskSpec spec;
  spec.id = require(doc, "id", file).get<std::string>();
  spec.kind = parse_task_kind(require(doc, "kind", file).get<std::string>());
  spec.description = require(doc, "description", file).get<std::string>();
  for (const auto& c : require(doc, "criteria", file)) spec.criteria.push_back(c.get<std::string>());
  spec.primary_criterion = require(doc, "primary_criterion", file).get<std::string>();
  if (doc.contains("direction")) {
    for (const auto& [metric, dir] : doc["direction"].items()) {
      if (dir != "minimize") {
        throw Error(ErrorCode::SchemaViolation, file + ": direction of '" + metric + "' must be minimize");
      }
    }
  }

  const auto& w = require(doc, "window", file);
  WindowSpec window;
  window.input_len = positive_size(require(w, "p", file), "p", file);
  window.horizon = positive_size(require(w, "q", file), "q", file);
  if (w.contains("stride")) window.stride = positive_size(w["stride"], "stride", file);

  const auto& ds = require(doc, "dataset", file);
  std::filesystem::path data_path = require(ds, "path", file).get<std::string>();
  if (data_path.is_relative()) data_path = path.parent_path() / data_path;
  const DataFormat format = ds.contains("format") ? parse_data_format(ds["format"].get<std::string>())
                                                  : infer_data_format(data_path);
  const double test_fraction = ds.value("test_fraction", 0.2);
  spec.dataset = std::make_shared<const DatasetSplit>(load_dataset(data_path, format, window, test_fraction));
  return spec;
}

std::string_view to_string(TaskViolation::Kind kind) noexcept {
  switch (kind) {
    case TaskViolation::Kind::UnknownMetric: return "UnknownMetric";
    case TaskViolation::Kind::KindMismatch: return "KindMismatch";
    case TaskViolation::Kind::PrimaryNotInCriteria: return "PrimaryNotInCriteria";
    case TaskViolation::Kind::EmptyCriteria: return "EmptyCriteria";
    case TaskViolation::Kind::WindowTooLong: return "WindowTooLong";
  }
  return "Unknown";
}

std::vector<TaskViolation> validate_task(const TaskSpec& spec, const BankSet& banks) {
  std::vector<TaskViolation> out;
  using K = TaskViolation::Kind;
  if (spec.criteria.empty()) out.push_back({K::EmptyCriteria, "task lists no criteria"});
  if (std::find(spec.criteria.begin(), spec.criteria.end(), spec.primary_criterion) == spec.criteria.end()) {
    out.push_back({K::PrimaryNotInCriteria, spec.primary_criterion});
  }
  auto check_metric = [&](const std::string& id) {
    const MetricDescriptor* m = banks.find_metric(id);
    if (!m) {
      out.push_back({K::UnknownMetric, id});
    } else if (!m->supports(spec.kind)) {
      out.push_back({K::KindMismatch, id + " does not apply to " + std::string(to_string(spec.kind)) + " tasks"});
    }
  };
  for (const auto& c : spec.criteria) check_metric(c);
  if (std::find(spec.criteria.begin(), spec.criteria.end(), spec.primary_criterion) == spec.criteria.end()) {
    check_metric(spec.primary_criterion);
  }
  if (spec.dataset) {
    const auto& ds = *spec.dataset;
    const std::size_t need = spec.kind == TaskKind::Forecasting
                                 ? ds.window.input_len + ds.window.horizon
                                 : ds.window.horizon;
    if (ds.train.rows() < need || ds.test.rows() < need) {
      out.push_back({K::WindowTooLong, "window needs " + std::to_string(need) + " rows per split"});
    }
  }
  return out;
}

}  // namespace tsflow
