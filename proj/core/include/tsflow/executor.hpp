#pragma once

#include "tsflow/banks.hpp"
#include "tsflow/candidate.hpp"
#include "tsflow/metrics.hpp"
#include "tsflow/task.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

enum class RunStatus { Success, TrainError, Timeout, InvalidOutput };

std::string_view to_string(RunStatus status) noexcept;
RunStatus parse_run_status(std::string_view text);

struct RunResult {
  RunStatus status = RunStatus::TrainError;
  /// Failure reason; empty on success.
  std::string message;
  std::map<std::string, double> metrics;
  std::optional<double> primary_loss;
  std::int64_t duration_ms = 0;
  std::string stdout_tail;
  std::string stderr_tail;
  std::string artifact_digest;
  /// Directive warnings from apply_directives.
  std::vector<std::string> warnings;

  bool ok() const noexcept { return status == RunStatus::Success; }
};

/// Volatile fields (duration, stdout/stderr tails) are left out.
nlohmann::json to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& doc);

/// Short text for planner contexts; failures include the stderr tail verbatim.
std::string summarize(const RunResult& result);

/// Anything that can turn a candidate into a measured result. Implementations
/// must be safe to call from several search loops at once.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual RunResult run(const CandidateConfig& config, const TaskSpec& task) = 0;
};

struct ExecutorOptions {
  std::chrono::milliseconds native_timeout{120000};
  RiskParams risk;
};

/// Runs an in-process model. Deterministic in (config, task).
RunResult run_native(const CandidateConfig& config, const ModelDescriptor& model, const TaskSpec& task,
                     const ExecutorOptions& options = {});

/// ExecRequest document sent to external executors.
nlohmann::json make_exec_request(const CandidateConfig& config, const TaskSpec& task, bool engine_scoring = false);

/// Spawns the bound command, sends one ExecRequest, reads one ExecResponse.
RunResult run_external(const CandidateConfig& config, const TaskSpec& task, const ExternalBinding& binding,
                       const ExecutorOptions& options = {});

/// Interprets a child's stdout. Exposed for protocol tests.
RunResult interpret_exec_response(const std::string& stdout_text, const TaskSpec& task, const RiskParams& risk);

/// Dispatches to run_native or run_external by the model's bank binding.
class ModelExecutor : public Executor {
 public:
  ModelExecutor(const BankSet& banks, ExecutorOptions options = {});
  RunResult run(const CandidateConfig& config, const TaskSpec& task) override;

 private:
  const BankSet& banks_;
  ExecutorOptions options_;
};

/// Predictions for forecasting (one q x d block per test window) or samples for
/// generation. Used by engine-side scoring of external results.
std::map<std::string, double> score_outputs(const TaskSpec& task, const std::vector<Eigen::MatrixXd>& outputs,
                                            const RiskParams& risk);

std::string outputs_digest(const std::vector<Eigen::MatrixXd>& outputs);

}  // namespace tsflow
