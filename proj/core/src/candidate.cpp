#include "tsflow/candidate.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <cmath>
#include <sstream>

namespace tsflow {

namespace {

struct KindName {
  DirectiveKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {DirectiveKind::NormalizeZscore, "normalize_zscore"},
    {DirectiveKind::NormalizeMinmax, "normalize_minmax"},
    {DirectiveKind::EarlyStopping, "early_stopping"},
    {DirectiveKind::LrSchedulePlateau, "lr_schedule_plateau"},
    {DirectiveKind::WeightDecay, "weight_decay"},
    {DirectiveKind::GradientClip, "gradient_clip"},
    {DirectiveKind::AugmentJitter, "augment_jitter"},
    {DirectiveKind::CovShrinkage, "cov_shrinkage"},
};

}  // namespace

std::string_view to_string(DirectiveKind kind) noexcept {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

std::optional<DirectiveKind> parse_directive_kind(std::string_view text) noexcept {
  for (const auto& kn : kKindNames) {
    if (kn.name == text) return kn.kind;
  }
  return std::nullopt;
}

const std::vector<DirectiveKind>& all_directive_kinds() {
  static const std::vector<DirectiveKind> kinds = [] {
    std::vector<DirectiveKind> v;
    for (const auto& kn : kKindNames) v.push_back(kn.kind);
    return v;
  }();
  return kinds;
}

bool DirectiveParamSpec::admits(double value) const noexcept {
  if (!std::isfinite(value)) return false;
  if (integer && value != std::floor(value)) return false;
  if (min_exclusive ? value <= min : value < min) return false;
  if (max_exclusive ? value >= max : value > max) return false;
  return true;
}

std::string DirectiveParamSpec::describe() const {
  std::ostringstream os;
  os << (integer ? "integer " : "real ") << (min_exclusive ? "(" : "[") << min << ", " << max
     << (max_exclusive ? ")" : "]");
  return os.str();
}

const std::vector<DirectiveParamSpec>& directive_params(DirectiveKind kind) {
  static const std::vector<DirectiveParamSpec> none;
  static const std::vector<DirectiveParamSpec> early{{"patience", true, 1, 1000}};
  static const std::vector<DirectiveParamSpec> plateau{{"factor", false, 0, 1, true, true},
                                                       {"patience", true, 1, 1000}};
  static const std::vector<DirectiveParamSpec> lambda{{"lambda", false, 0, 1}};
  static const std::vector<DirectiveParamSpec> clip{{"max_norm", false, 0, 1e6, true, false}};
  static const std::vector<DirectiveParamSpec> jitter{{"sigma", false, 0, 1}};
  switch (kind) {
    case DirectiveKind::NormalizeZscore:
    case DirectiveKind::NormalizeMinmax: return none;
    case DirectiveKind::EarlyStopping: return early;
    case DirectiveKind::LrSchedulePlateau: return plateau;
    case DirectiveKind::WeightDecay:
    case DirectiveKind::CovShrinkage: return lambda;
    case DirectiveKind::GradientClip: return clip;
    case DirectiveKind::AugmentJitter: return jitter;
  }
  return none;
}

double DirectiveInstance::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(kind)) + " has no parameter '" + name + "'");
  }
  return it->second;
}

std::optional<std::string> check_directive(const DirectiveInstance& directive) {
  const auto& specs = directive_params(directive.kind);
  for (const auto& spec : specs) {
    auto it = directive.params.find(spec.name);
    if (it == directive.params.end()) return "missing parameter '" + spec.name + "'";
    if (!spec.admits(it->second)) {
      return "parameter '" + spec.name + "' = " + format_double(it->second) + " outside " + spec.describe();
    }
  }
  for (const auto& [name, value] : directive.params) {
    bool known = false;
    for (const auto& spec : specs) known = known || spec.name == name;
    if (!known) return "unknown parameter '" + name + "'";
  }
  return std::nullopt;
}

nlohmann::json to_json(const DirectiveInstance& directive) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& spec : directive_params(directive.kind)) {
    auto it = directive.params.find(spec.name);
    if (it == directive.params.end()) continue;
    if (spec.integer) {
      params[spec.name] = static_cast<std::int64_t>(it->second);
    } else {
      params[spec.name] = it->second;
    }
  }
  return {{"kind", std::string(to_string(directive.kind))}, {"params", params}};
}

DirectiveInstance directive_from_json(const nlohmann::json& doc, const std::string& path) {
  if (!doc.is_object()) throw Error(ErrorCode::FieldViolation, path + ": expected object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "kind" && key != "params") {
      throw Error(ErrorCode::FieldViolation, path + "." + key + ": unknown field");
    }
  }
  if (!doc.contains("kind") || !doc["kind"].is_string()) {
    throw Error(ErrorCode::FieldViolation, path + ".kind: required string");
  }
  const auto kind = parse_directive_kind(doc["kind"].get<std::string>());
  if (!kind) {
    throw Error(ErrorCode::FieldViolation,
                path + ".kind: '" + doc["kind"].get<std::string>() + "' is not in the directive catalog");
  }
  DirectiveInstance out{*kind, {}};
  if (doc.contains("params")) {
    const auto& params = doc["params"];
    if (!params.is_object()) throw Error(ErrorCode::FieldViolation, path + ".params: expected object");
    for (const auto& [name, value] : params.items()) {
      if (!value.is_number()) {
        throw Error(ErrorCode::FieldViolation, path + ".params." + name + ": expected number");
      }
      out.params[name] = value.get<double>();
    }
  }
  if (auto err = check_directive(out)) throw Error(ErrorCode::FieldViolation, path + ".params: " + *err);
  return out;
}

nlohmann::json to_json(const HyperValue& value) {
  return std::visit([](const auto& v) { return nlohmann::json(v); }, value);
}

std::string to_display(const HyperValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&value)) return format_double(*d);
  return std::get<std::string>(value);
}

double as_real(const HyperValue& value) {
  if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&value)) return *d;
  throw Error(ErrorCode::InvalidArgument, "categorical hyperparameter has no numeric value");
}

std::string_view to_string(HyperType type) noexcept {
  switch (type) {
    case HyperType::Int: return "int";
    case HyperType::Real: return "real";
    case HyperType::LogReal: return "log-real";
    case HyperType::Categorical: return "categorical";
  }
  return "unknown";
}

HyperType parse_hyper_type(std::string_view text) {
  if (text == "int") return HyperType::Int;
  if (text == "real") return HyperType::Real;
  if (text == "log-real") return HyperType::LogReal;
  if (text == "categorical") return HyperType::Categorical;
  throw Error(ErrorCode::SchemaViolation, "unknown hyperparameter type '" + std::string(text) + "'");
}

std::variant<HyperValue, std::string> HyperparamSpec::coerce(const nlohmann::json& value) const {
  HyperValue out;
  switch (type) {
    case HyperType::Int:
      if (value.is_number_integer()) {
        out = value.get<std::int64_t>();
      } else if (value.is_number_float() && value.get<double>() == std::floor(value.get<double>()) &&
                 std::abs(value.get<double>()) < 9e15) {
        out = static_cast<std::int64_t>(value.get<double>());
      } else {
        return std::string("expected integer");
      }
      break;
    case HyperType::Real:
    case HyperType::LogReal:
      if (!value.is_number()) return std::string("expected number");
      out = value.get<double>();
      break;
    case HyperType::Categorical:
      if (!value.is_string()) return std::string("expected one of the listed choices");
      out = value.get<std::string>();
      break;
  }
  if (!admits(out)) return "value " + to_display(out) + " outside " + describe();
  return out;
}

bool HyperparamSpec::admits(const HyperValue& value) const {
  switch (type) {
    case HyperType::Int: {
      const auto* v = std::get_if<std::int64_t>(&value);
      return v && static_cast<double>(*v) >= min && static_cast<double>(*v) <= max;
    }
    case HyperType::Real:
    case HyperType::LogReal: {
      const auto* v = std::get_if<double>(&value);
      return v && std::isfinite(*v) && *v >= min && *v <= max && (type == HyperType::Real || *v > 0);
    }
    case HyperType::Categorical: {
      const auto* v = std::get_if<std::string>(&value);
      if (!v) return false;
      for (const auto& c : choices) {
        if (c == *v) return true;
      }
      return false;
    }
  }
  return false;
}

std::string HyperparamSpec::describe() const {
  std::ostringstream os;
  os << to_string(type);
  if (type == HyperType::Categorical) {
    os << " {";
    for (std::size_t i = 0; i < choices.size(); ++i) os << (i ? ", " : "") << choices[i];
    os << "}";
  } else {
    os << " [" << min << ", " << max << "]";
  }
  return os.str();
}

nlohmann::json to_json(const Hyperparams& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, value] : params) out[name] = to_json(value);
  return out;
}

nlohmann::json to_json(const CandidateConfig& config) {
  nlohmann::json directives = nlohmann::json::array();
  for (const auto& d : config.directives) directives.push_back(to_json(d));
  nlohmann::json out{{"model_id", config.model_id},
                     {"hyperparams", to_json(config.hyperparams)},
                     {"directives", directives},
                     {"seed", config.seed}};
  if (config.freeform_patch) out["freeform_patch"] = *config.freeform_patch;
  return out;
}

CandidateConfig candidate_from_json(const nlohmann::json& doc) {
  CandidateConfig config;
  config.model_id = doc.at("model_id").get<std::string>();
  for (const auto& [name, value] : doc.at("hyperparams").items()) {
    if (value.is_number_integer()) {
      config.hyperparams[name] = value.get<std::int64_t>();
    } else if (value.is_number()) {
      config.hyperparams[name] = value.get<double>();
    } else {
      config.hyperparams[name] = value.get<std::string>();
    }
  }
  std::size_t i = 0;
  for (const auto& d : doc.at("directives")) {
    config.directives.push_back(directive_from_json(d, "directives[" + std::to_string(i++) + "]"));
  }
  if (doc.contains("freeform_patch")) config.freeform_patch = doc["freeform_patch"].get<std::string>();
  config.seed = doc.at("seed").get<std::uint64_t>();
  return config;
}

std::string config_digest(const CandidateConfig& config) { return json_digest(to_json(config)); }

}  // namespace tsflow
