#pragma once

#include "oracles.hpp"

#include "tsflow/audit.hpp"
#include "tsflow/banks.hpp"
#include "tsflow/controller.hpp"
#include "tsflow/executor.hpp"
#include "tsflow/planner.hpp"
#include "tsflow/report.hpp"
#include "tsflow/task.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace fixtures {

std::filesystem::path source_dir();
std::filesystem::path stub_dir();

/// The repository's banks/ directory, loaded once.
const tsflow::BankSet& starter_banks();

/// Raw records of the starter bank, for building variants.
std::vector<tsflow::RawRecord> starter_records(const std::string& section);

tsflow::TaskSpec make_task(const tsflow::TimeSeriesFrame& frame, tsflow::TaskKind kind, tsflow::WindowSpec window,
                           std::vector<std::string> criteria, std::string primary, std::string description,
                           std::string id = "test-task", double test_fraction = 0.2);

inline constexpr const char* kForecastDescription =
    "Multi-step forecasting of a stationary autoregressive multivariate series with three features.";

/// AR(2) forecasting task: x_t = 0.5 x_{t-1} + 0.3 x_{t-2} + noise, p=10, q=2.
tsflow::TaskSpec ar2_task(std::uint64_t seed = 42, std::size_t rows = 2000, std::size_t features = 3,
                          std::size_t p = 10, std::size_t q = 2);

/// Multivariate Gaussian generation task with correlated features.
tsflow::TaskSpec gaussian_task(std::uint64_t seed, std::size_t rows, std::size_t q, const Eigen::MatrixXd& cov);

oracle::Rows to_rows(const Eigen::MatrixXd& m);
oracle::WindowList to_windows(const std::vector<Eigen::MatrixXd>& blocks);
std::vector<double> flat(const Eigen::MatrixXd& m);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Fails every run whose config carries `trigger`, naming the directive in the error.
class FaultInjectingExecutor : public tsflow::Executor {
 public:
  FaultInjectingExecutor(tsflow::Executor& inner, tsflow::DirectiveKind trigger) : inner_(inner), trigger_(trigger) {}
  tsflow::RunResult run(const tsflow::CandidateConfig& config, const tsflow::TaskSpec& task) override;
  int injected() const;

 private:
  tsflow::Executor& inner_;
  tsflow::DirectiveKind trigger_;
  mutable std::mutex mutex_;
  int injected_ = 0;
};

/// Everything observable from one search.
struct Observed {
  tsflow::FinalReport report;
  std::vector<tsflow::LogEntry> entries;
  std::vector<std::string> lines;
  std::vector<tsflow::Decision> decisions;
  std::vector<tsflow::DecisionContext> contexts;
  std::vector<tsflow::IterationRecord> records;
  double seconds = 0.0;
};

/// Runs run_full with a pinned clock and recording hooks. The log lives in
/// memory unless `log_file` is given. `executor` defaults to the native
/// ModelExecutor over `banks`.
Observed run_search(const tsflow::TaskSpec& task, const tsflow::BankSet& banks, tsflow::PlannerBackend& planner,
                    const tsflow::PhaseConfig& phase, tsflow::Executor* executor = nullptr,
                    const std::filesystem::path& log_file = {});

/// The canonical line for every entry, as the log file would hold them.
std::vector<std::string> canonical_lines(const std::vector<tsflow::LogEntry>& entries);

}  // namespace fixtures
