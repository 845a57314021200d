#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tsflow {

// ---------------------------------------------------------------------------
// Refinement directive catalog. Closed set: anything outside it is rejected at
// parse time, so structured refinements cannot break a run on their own.
// ---------------------------------------------------------------------------

enum class DirectiveKind {
  NormalizeZscore,
  NormalizeMinmax,
  EarlyStopping,
  LrSchedulePlateau,
  WeightDecay,
  GradientClip,
  AugmentJitter,
  CovShrinkage,
};

std::string_view to_string(DirectiveKind kind) noexcept;
std::optional<DirectiveKind> parse_directive_kind(std::string_view text) noexcept;
const std::vector<DirectiveKind>& all_directive_kinds();

struct DirectiveParamSpec {
  std::string name;
  bool integer = false;
  double min = 0.0;
  double max = 0.0;
  bool min_exclusive = false;
  bool max_exclusive = false;

  bool admits(double value) const noexcept;
  std::string describe() const;
};

const std::vector<DirectiveParamSpec>& directive_params(DirectiveKind kind);

struct DirectiveInstance {
  DirectiveKind kind = DirectiveKind::NormalizeZscore;
  std::map<std::string, double> params;

  double param(const std::string& name) const;
  bool operator==(const DirectiveInstance&) const = default;
};

/// Empty when valid, otherwise a reason naming the offending parameter.
std::optional<std::string> check_directive(const DirectiveInstance& directive);

nlohmann::json to_json(const DirectiveInstance& directive);
/// Throws Error(FieldViolation) with a field path relative to `path`.
DirectiveInstance directive_from_json(const nlohmann::json& doc, const std::string& path = "directive");

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

using HyperValue = std::variant<std::int64_t, double, std::string>;

nlohmann::json to_json(const HyperValue& value);
std::string to_display(const HyperValue& value);
double as_real(const HyperValue& value);

enum class HyperType { Int, Real, LogReal, Categorical };

std::string_view to_string(HyperType type) noexcept;
HyperType parse_hyper_type(std::string_view text);

struct HyperparamSpec {
  std::string name;
  HyperType type = HyperType::Real;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> choices;
  HyperValue default_value;

  /// Converts a JSON value into a HyperValue of this spec's type, or returns a reason.
  std::variant<HyperValue, std::string> coerce(const nlohmann::json& value) const;
  bool admits(const HyperValue& value) const;
  std::string describe() const;
};

using Hyperparams = std::map<std::string, HyperValue>;

nlohmann::json to_json(const Hyperparams& params);

// ---------------------------------------------------------------------------
// Candidate configuration: the editable artifact the search refines.
// ---------------------------------------------------------------------------

struct CandidateConfig {
  std::string model_id;
  Hyperparams hyperparams;
  std::vector<DirectiveInstance> directives;
  std::optional<std::string> freeform_patch;
  std::uint64_t seed = 0;

  bool operator==(const CandidateConfig&) const = default;
};

nlohmann::json to_json(const CandidateConfig& config);
CandidateConfig candidate_from_json(const nlohmann::json& doc);

/// SHA-256 over the canonical JSON of the config.
std::string config_digest(const CandidateConfig& config);

}  // namespace tsflow
