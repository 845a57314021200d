#pragma once

#include "tsflow/audit.hpp"
#include "tsflow/candidate.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsflow {

/// One refine cycle (or a loop's warm start at iteration 0) as seen by the report.
struct IterationRecord {
  std::string phase;
  std::string candidate_id;
  std::int64_t iteration = 0;
  std::string status;
  std::optional<double> candidate_loss;
  std::optional<double> incumbent_loss;
  std::string verdict;
  std::string candidate_digest;
  std::string incumbent_before;
  std::string incumbent_after;
  int debug_attempts = 0;

  bool operator==(const IterationRecord&) const = default;
};

nlohmann::json to_json(const IterationRecord& record);
IterationRecord iteration_record_from_json(const nlohmann::json& doc);

struct CandidateSummary {
  std::string candidate_id;
  std::string model_id;
  std::optional<double> best_loss;
  int iterations = 0;
  int accepted = 0;
  int rejected = 0;
  bool failed = false;
};

struct PhaseSummary {
  std::string phase;
  std::vector<CandidateSummary> candidates;
  std::string winner;
};

struct StageOneCandidate {
  std::string candidate_id;
  std::string model_id;
};

struct WallClock {
  std::int64_t total_ms = 0;
  std::int64_t stage1_ms = 0;
  std::int64_t warmup_ms = 0;
  std::int64_t optimization_ms = 0;
};

struct FinalReport {
  std::string task_id;
  bool success = false;
  std::optional<std::string> failure_phase;
  std::optional<std::string> failure_message;
  std::vector<StageOneCandidate> stage1;
  bool stage1_shortfall = false;
  std::string winner_candidate_id;
  std::optional<CandidateConfig> winning_config;
  std::map<std::string, double> final_metrics;
  std::vector<IterationRecord> loss_trace;
  std::vector<PhaseSummary> phases;
  std::string audit_head_hash;
  std::string bank_digest;
  WallClock wall_clock;
};

/// `include_volatile` adds the audit head hash and wall-clock stats, both of
/// which depend on the clock.
nlohmann::json to_json(const FinalReport& report, bool include_volatile = true);

/// Digest of the report without volatile fields.
std::string report_digest(const FinalReport& report);

/// Orders records by phase, stage-one candidate order, then iteration.
void sort_trace(std::vector<IterationRecord>& trace, const std::vector<StageOneCandidate>& stage1);

/// Per-phase summaries derived from the trace alone.
std::vector<PhaseSummary> summarize_phases(const std::vector<IterationRecord>& trace,
                                           const std::vector<StageOneCandidate>& stage1, const std::string& winner);

/// Rebuilds the report from audit entries alone. Throws SchemaViolation when
/// the log lacks the run markers.
FinalReport report_from_log(const std::vector<LogEntry>& entries);

/// Markdown rendering of a report for people.
std::string render_report_markdown(const FinalReport& report);

}  // namespace tsflow
