#pragma once

#include "tsflow/candidate.hpp"
#include "tsflow/native_models.hpp"
#include "tsflow/task.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

/// A past task and the methodology that solved it.
struct CaseRecord {
  std::string id;
  TaskKind task_kind = TaskKind::Forecasting;
  std::vector<std::string> domain_tags;
  std::string description;
  std::string solution_summary;
  std::string recommended_model;
  std::map<std::string, double> outcome;
};

enum class RefinementCategory { Preprocessing, TrainingOptimization, TuningEvaluation };

std::string_view to_string(RefinementCategory category) noexcept;

struct DirectiveParamTemplate {
  double default_value = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Machine-actionable half of a refinement tip.
struct DirectiveTemplate {
  DirectiveKind kind = DirectiveKind::NormalizeZscore;
  std::map<std::string, DirectiveParamTemplate> params;

  DirectiveInstance instantiate() const;
};

struct RefinementEntry {
  std::string id;
  RefinementCategory category = RefinementCategory::Preprocessing;
  std::string title;
  std::string guidance;
  DirectiveTemplate directive_template;
  std::vector<std::string> applicability;
};

enum class ModelFamily { Tree, Deep, Econometric, Gan, Vae, Diffusion, Linear, Baseline };

std::string_view to_string(ModelFamily family) noexcept;
std::optional<ModelFamily> parse_model_family(std::string_view text) noexcept;

struct ExternalBinding {
  std::vector<std::string> command;
  std::int64_t timeout_ms = 600000;
};

struct ModelDescriptor {
  std::string id;
  ModelFamily family = ModelFamily::Baseline;
  std::set<TaskKind> task_kinds;
  std::vector<HyperparamSpec> hyperparam_schema;
  std::optional<NativeModel> native;
  std::optional<ExternalBinding> external;
  std::string summary;

  const HyperparamSpec* find_param(std::string_view name) const;
  Hyperparams defaults() const;
  bool accepts(DirectiveKind kind) const;
};

struct MetricDescriptor {
  std::string id;
  std::set<TaskKind> task_kinds;
  std::string summary;

  bool supports(TaskKind kind) const { return task_kinds.count(kind) > 0; }
};

/// The three read-only resources. Records are kept sorted by id.
struct BankSet {
  std::vector<CaseRecord> cases;
  std::vector<RefinementEntry> refinements;
  std::vector<ModelDescriptor> models;
  std::vector<MetricDescriptor> metrics;
  std::string content_digest;

  const CaseRecord* find_case(std::string_view id) const;
  const RefinementEntry* find_refinement(std::string_view id) const;
  const ModelDescriptor* find_model(std::string_view id) const;
  const MetricDescriptor* find_metric(std::string_view id) const;
};

/// Loads `cases/`, `refinements/`, `models/`, `metrics/` (one JSON record per
/// file) and validates every cross-reference.
BankSet load_banks(const std::filesystem::path& root);

/// Parses and validates already-read records; `load_banks` is a thin wrapper.
struct RawRecord {
  std::string file;
  nlohmann::json doc;
};
BankSet build_banks(std::span<const RawRecord> cases, std::span<const RawRecord> refinements,
                    std::span<const RawRecord> models, std::span<const RawRecord> metrics);

enum class BankSection { Cases, Refinements, Models, Metrics };

/// Plain-text rendering of the selected records in ascending id order.
std::string bank_excerpt(const BankSet& banks, BankSection section, std::span<const std::string> ids);

std::string render_case(const CaseRecord& record);
std::string render_refinement(const RefinementEntry& entry);
std::string render_model(const ModelDescriptor& model);

}  // namespace tsflow
