#pragma once

#include "tsflow/audit.hpp"
#include "tsflow/banks.hpp"
#include "tsflow/candidate.hpp"
#include "tsflow/executor.hpp"
#include "tsflow/prompts.hpp"
#include "tsflow/retrieval.hpp"
#include "tsflow/task.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tsflow {

inline constexpr std::size_t kDefaultContextBudget = 16000;
inline constexpr int kDefaultParseAttempts = 3;

/// Everything a backend may look at for one decision. The rendered prompt holds
/// only stage-appropriate text; the structured fields mirror it for backends
/// that do not read prose.
struct DecisionContext {
  Stage stage = Stage::ModelSelect;
  std::string candidate_id;
  std::int64_t iteration = 0;

  std::string task_text;
  std::string bank_excerpts;
  std::string memory_digest;
  std::string current_config;
  std::string last_result;
  std::string schema;

  std::string rendered;
  std::string template_digest;

  TaskKind task_kind = TaskKind::Forecasting;
  /// model_select: models in retrieval vote order and the requested count.
  std::vector<std::string> vote_models;
  std::size_t k = 0;
  /// refinement: applicable tip ids in ascending order.
  std::vector<std::string> tip_ids;
  std::optional<CandidateConfig> config;
  const ModelDescriptor* model = nullptr;
  std::optional<RunResult> last_run;
  /// Non-empty when the refinement stage is asked to repair a failed run.
  std::string repair_error;
  int repair_attempt = 0;
};

struct ContextInputs {
  const TaskSpec* task = nullptr;
  const BankSet* banks = nullptr;
  const PromptSet* prompts = nullptr;
  std::size_t budget = kDefaultContextBudget;
  std::string candidate_id;
  std::int64_t iteration = 0;
  /// model_select
  const RetrievalResult* retrieval = nullptr;
  std::size_t k = 0;
  /// refinement and fine_tune
  const Memory* memory = nullptr;
  const CandidateConfig* config = nullptr;
  const RunResult* last_result = nullptr;
  std::string repair_error;
  int repair_attempt = 0;
};

/// Throws BudgetImpossible when mandatory content alone exceeds the budget and
/// InvalidArgument when the stage's inputs are missing.
DecisionContext build_context(Stage stage, const ContextInputs& inputs);

/// Tips whose family list covers the model and whose directive it accepts.
std::vector<std::string> applicable_tips(const BankSet& banks, const ModelDescriptor& model);

std::string render_config(const CandidateConfig& config);

/// Logging entries only, newest first, under the budget; the best-so-far line is mandatory.
std::string metrics_history(const Memory& memory, std::size_t char_budget);

// -- decisions -----------------------------------------------------------------

struct ModelPayload {
  std::vector<std::string> model_ids;
};

struct RefinementPayload {
  std::vector<DirectiveInstance> directives;
  std::optional<std::string> freeform_patch;
};

struct FineTunePayload {
  Hyperparams hyperparams;
};

using DecisionPayload = std::variant<ModelPayload, RefinementPayload, FineTunePayload>;

nlohmann::json to_json(const DecisionPayload& payload);

struct Decision {
  Stage kind = Stage::ModelSelect;
  DecisionPayload payload;
  std::string rationale;
  std::string backend_id;
  int retries = 0;
  std::vector<std::string> parse_errors;
  std::string template_digest;
  /// Engine-substituted no-op after ParseExhausted.
  bool fallback = false;
};

struct DecisionSchema {
  Stage stage = Stage::ModelSelect;
  const BankSet* banks = nullptr;
  TaskKind task_kind = TaskKind::Forecasting;
  const ModelDescriptor* model = nullptr;
};

DecisionSchema schema_for(const DecisionContext& ctx, const BankSet& banks);

/// Text shown to backends describing the expected JSON object.
std::string schema_text(const DecisionSchema& schema);

/// The first balanced `{...}` in `text` that parses as JSON.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

struct ParsedDecision {
  DecisionPayload payload;
  std::string rationale;
};

/// Strict parse. Errors: NoJsonFound, FieldViolation ("path: reason").
ParsedDecision parse_decision(std::string_view text, const DecisionSchema& schema);

/// Behavioral contract for decision makers.
class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual std::string id() const = 0;
  virtual bool serves(Stage) const { return true; }
  /// Raw response text. `feedback` holds the parse errors of earlier attempts for this decision.
  virtual std::string respond(const DecisionContext& ctx, std::span<const std::string> feedback) = 0;
  /// An independent backend for one search loop. Deterministic backends derive
  /// their state from `stream` so concurrent loops do not perturb each other.
  virtual std::unique_ptr<PlannerBackend> fork(std::uint64_t stream) const = 0;
};

/// Asks the backend, re-prompting with the parse error up to `attempts` times in
/// total. Throws ParseExhausted, or BackendUnavailable if the stage is not served.
Decision decide(PlannerBackend& backend, const DecisionContext& ctx, const BankSet& banks,
                int attempts = kDefaultParseAttempts);

/// Keeps the context's current configuration (or the vote order for model selection).
Decision noop_decision(const DecisionContext& ctx, const std::string& reason);

}  // namespace tsflow
