#pragma once

#include "tsflow/audit.hpp"
#include "tsflow/banks.hpp"
#include "tsflow/executor.hpp"
#include "tsflow/planner.hpp"
#include "tsflow/report.hpp"
#include "tsflow/retrieval.hpp"
#include "tsflow/task.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tsflow {

struct PhaseConfig {
  std::size_t k = 2;
  int warmup_iters = 3;
  int opt_iters = 10;
  int debug_retries = 2;
  std::uint64_t seed = 0;
  /// Concurrent warm-up loops; 0 means k.
  std::size_t parallel = 0;
  /// Cases retrieved before voting.
  std::size_t case_neighbors = 5;
  std::size_t context_budget = kDefaultContextBudget;

  /// Throws ConfigError.
  void validate() const;
  int t_max() const { return warmup_iters * static_cast<int>(k) + opt_iters; }
};

nlohmann::json to_json(const PhaseConfig& phase);

/// Observation points for tests and tooling. Called from search threads, so
/// implementations must synchronize.
struct RunHooks {
  std::function<void(const DecisionContext&)> on_context;
  std::function<void(const Decision&)> on_decision;
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const Memory&)> on_loop_done;
};

/// Shared, read-mostly inputs of one run. The audit log is the only shared sink.
struct SearchEnv {
  const TaskSpec& task;
  const BankSet& banks;
  Executor& executor;
  AuditLog& log;
  PhaseConfig phase;
  PromptSet prompts = PromptSet::defaults();
  RunHooks hooks;
};

/// One search loop: its incumbent, its memory view and its trace.
struct SearchState {
  std::string candidate_id;
  std::int64_t iteration = 0;
  CandidateConfig incumbent;
  RunResult incumbent_result;
  std::optional<RunResult> last_result;
  Memory memory;
  std::vector<IterationRecord> trace;
  bool failed = false;
};

struct StageOneResult {
  std::vector<StageOneCandidate> candidates;
  std::vector<CandidateConfig> configs;
  RetrievalResult retrieval;
  Decision decision;
};

/// Retrieval, vote, optional planner re-rank, k seeded default configs; one A_model entry.
StageOneResult stage1_preselect(SearchEnv& env, PlannerBackend& planner);

/// Runs the bank-default config as iteration 0 and logs it.
SearchState warm_start(SearchEnv& env, const std::string& candidate_id, const CandidateConfig& config,
                       const std::string& phase);

/// One refinement, fine-tune, execute, debug, accept/reject, log cycle.
void refine_iteration(SearchEnv& env, SearchState& state, PlannerBackend& planner, const std::string& phase);

/// Up to `retries` repair attempts on `config`; returns the last result and the attempt count.
struct DebugOutcome {
  RunResult result;
  int attempts = 0;
};
DebugOutcome debug_fix(SearchEnv& env, SearchState& state, PlannerBackend& planner, CandidateConfig& config,
                       RunResult failed, int retries, const std::string& phase);

struct WarmupResult {
  std::vector<SearchState> loops;
  std::vector<std::unique_ptr<PlannerBackend>> planners;
  std::size_t winner = 0;
};

/// Independent loops of W iterations per candidate, run concurrently. Throws AllCandidatesFailed.
WarmupResult run_warmup(SearchEnv& env, const StageOneResult& stage1, const PlannerBackend& root);

void run_optimization(SearchEnv& env, SearchState& winner, PlannerBackend& planner, int iterations);

/// The whole search. Failures come back as a report with success = false.
FinalReport run_full(SearchEnv& env, PlannerBackend& planner);

}  // namespace tsflow
