#include "tsflow/planner.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace tsflow {

using nlohmann::json;

namespace {

std::string directives_json(const std::vector<DirectiveInstance>& directives) {
  json arr = json::array();
  for (const auto& d : directives) arr.push_back(to_json(d));
  return canonical_json(arr);
}

std::string task_text(const TaskSpec& task) {
  std::ostringstream os;
  os << task.description << "\n";
  os << "Kind: " << to_string(task.kind) << "\n";
  if (task.dataset) {
    const auto& ds = *task.dataset;
    os << "Data: " << ds.train.features() << " features, " << ds.train.rows() << " train rows, " << ds.test.rows()
       << " test rows; input length " << ds.window.input_len << ", horizon " << ds.window.horizon << "\n";
  }
  os << "Criteria: ";
  for (std::size_t i = 0; i < task.criteria.size(); ++i) os << (i ? ", " : "") << task.criteria[i];
  os << " (primary: " << task.primary_criterion << ", minimize)";
  return os.str();
}

std::string hyperparam_schema_text(const ModelDescriptor& model) {
  if (model.hyperparam_schema.empty()) return model.id + " has no hyperparameters.";
  std::ostringstream os;
  os << "model: " << model.id << "\n";
  for (const auto& p : model.hyperparam_schema) {
    os << "- " << p.name << ": " << p.describe() << ", default " << to_display(p.default_value) << "\n";
  }
  std::string s = os.str();
  s.pop_back();
  return s;
}

std::string assignment_text(const CandidateConfig& config) {
  if (config.hyperparams.empty()) return "(none)";
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, value] : config.hyperparams) {
    os << (first ? "" : ", ") << name << "=" << to_display(value);
    first = false;
  }
  return os.str();
}

/// Renders `tpl` with `values`, filling `flex_key` with the largest text that
/// `make_flex(budget)` can produce within the overall budget.
template <class MakeFlex>
std::string render_within_budget(const std::string& tpl, std::map<std::string, std::string> values,
                                 const std::string& flex_key, std::size_t budget, MakeFlex make_flex,
                                 std::string& flex_out) {
  values[flex_key] = "";
  const std::string fixed = render_template(tpl, values);
  if (fixed.size() > budget) {
    throw Error(ErrorCode::BudgetImpossible, "mandatory context needs " + std::to_string(fixed.size()) +
                                                 " characters, budget is " + std::to_string(budget));
  }
  flex_out = make_flex(budget - fixed.size());
  values[flex_key] = flex_out;
  return render_template(tpl, values);
}

void require(bool cond, const char* what) {
  if (!cond) throw Error(ErrorCode::InvalidArgument, std::string("build_context: ") + what);
}

[[noreturn]] void violation(const std::string& path, const std::string& reason) {
  throw Error(ErrorCode::FieldViolation, path + ": " + reason);
}

void reject_unknown(const json& doc, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) violation(key, "unknown field");
  }
}

}  // namespace

std::vector<std::string> applicable_tips(const BankSet& banks, const ModelDescriptor& model) {
  std::vector<std::string> out;
  const std::string family(to_string(model.family));
  for (const auto& e : banks.refinements) {
    const bool listed = std::find(e.applicability.begin(), e.applicability.end(), family) != e.applicability.end();
    if (listed && model.accepts(e.directive_template.kind)) out.push_back(e.id);
  }
  return out;
}

std::string render_config(const CandidateConfig& config) {
  std::ostringstream os;
  os << "model: " << config.model_id << "\n";
  os << "hyperparams: " << assignment_text(config) << "\n";
  os << "directives: " << directives_json(config.directives) << "\n";
  if (config.freeform_patch) os << "freeform_patch: " << *config.freeform_patch << "\n";
  os << "config digest: " << config_digest(config).substr(0, 12);
  return os.str();
}

std::string metrics_history(const Memory& memory, std::size_t char_budget) {
  std::string text = "best so far: ";
  if (const auto& best = memory.best_so_far()) {
    text += "loss=" + format_double(best->primary_loss) + "\n";
  } else {
    text += "none yet\n";
  }
  if (text.size() > char_budget) {
    throw Error(ErrorCode::BudgetImpossible, "metrics history needs at least " + std::to_string(text.size()) +
                                                 " characters, budget is " + std::to_string(char_budget));
  }
  const auto& entries = memory.entries();
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->action != ActionKind::Logging) continue;
    std::ostringstream line;
    line << "iteration " << it->iteration << ":";
    if (it->payload.is_object()) {
      if (it->payload.contains("hyperparams")) line << " " << canonical_json(it->payload["hyperparams"]);
      auto st = it->payload.find("status");
      if (st != it->payload.end() && st->is_string()) line << " status=" << st->get<std::string>();
      auto loss = it->payload.find("primary_loss");
      if (loss != it->payload.end() && loss->is_number()) line << " loss=" << format_double(loss->get<double>());
    }
    if (it->metrics) {
      for (const auto& [k, v] : *it->metrics) line << " " << k << "=" << format_double(v);
    }
    if (it->verdict) line << " " << to_string(*it->verdict);
    line << "\n";
    const std::string s = line.str();
    if (text.size() + s.size() > char_budget) break;
    text += s;
  }
  return text;
}

DecisionSchema schema_for(const DecisionContext& ctx, const BankSet& banks) {
  return {ctx.stage, &banks, ctx.task_kind, ctx.model};
}

std::string schema_text(const DecisionSchema& schema) {
  std::ostringstream os;
  switch (schema.stage) {
    case Stage::ModelSelect:
      os << R"({"model_ids": ["<model id>", ...], "rationale": "<why>"})";
      break;
    case Stage::Refinement:
      os << R"({"directives": [{"kind": "<directive>", "params": {"<name>": <number>}}, ...], )";
      if (schema.model && schema.model->external) os << R"("freeform_patch": "<optional patch text>", )";
      os << R"("rationale": "<why>"})" << "\n";
      os << "Directive catalog:";
      for (DirectiveKind k : all_directive_kinds()) {
        os << "\n- " << to_string(k);
        const auto& params = directive_params(k);
        if (params.empty()) os << " (no params)";
        for (const auto& p : params) os << " " << p.name << ": " << p.describe() << ";";
      }
      break;
    case Stage::FineTune:
      os << R"({"hyperparams": {"<name>": <value>, ...}, "rationale": "<why>"})";
      break;
  }
  return os.str();
}

DecisionContext build_context(Stage stage, const ContextInputs& in) {
  require(in.task && in.banks && in.prompts, "task, banks and prompts are required");
  DecisionContext ctx;
  ctx.stage = stage;
  ctx.candidate_id = in.candidate_id;
  ctx.iteration = in.iteration;
  ctx.task_kind = in.task->kind;
  const std::string& tpl = in.prompts->for_stage(stage);
  ctx.template_digest = sha256_hex(tpl);

  switch (stage) {
    case Stage::ModelSelect: {
      require(in.retrieval != nullptr, "model_select needs a retrieval result");
      require(in.k >= 1, "model_select needs k >= 1");
      ctx.k = in.k;
      for (const auto& v : in.retrieval->model_votes) ctx.vote_models.push_back(v.model_id);
      std::string cases;
      for (const auto& rc : in.retrieval->ranked) {
        if (const auto* c = in.banks->find_case(rc.case_id)) {
          if (!cases.empty()) cases += "\n";
          cases += render_case(*c);
        }
      }
      std::ostringstream votes;
      for (std::size_t i = 0; i < in.retrieval->model_votes.size(); ++i) {
        const auto& v = in.retrieval->model_votes[i];
        votes << (i ? ", " : "") << v.model_id << "=" << format_double(v.score);
      }
      ctx.task_text = task_text(*in.task);
      ctx.bank_excerpts = cases;
      ctx.schema = schema_text({stage, in.banks, ctx.task_kind, nullptr});
      ctx.rendered = render_template(tpl, {{"task", ctx.task_text},
                                           {"cases", ctx.bank_excerpts},
                                           {"votes", votes.str()},
                                           {"k", std::to_string(in.k)},
                                           {"schema", ctx.schema}});
      if (ctx.rendered.size() > in.budget) {
        throw Error(ErrorCode::BudgetImpossible, "model selection context needs " + std::to_string(ctx.rendered.size()) +
                                                     " characters, budget is " + std::to_string(in.budget));
      }
      return ctx;
    }
    case Stage::Refinement: {
      require(in.memory && in.config, "refinement needs memory and the current config");
      ctx.model = in.banks->find_model(in.config->model_id);
      require(ctx.model != nullptr, "current config names an unknown model");
      ctx.config = *in.config;
      if (in.last_result) ctx.last_run = *in.last_result;
      ctx.repair_error = in.repair_error;
      ctx.repair_attempt = in.repair_attempt;
      ctx.tip_ids = applicable_tips(*in.banks, *ctx.model);
      ctx.task_text = task_text(*in.task);
      ctx.bank_excerpts = ctx.tip_ids.empty() ? "(none)" : bank_excerpt(*in.banks, BankSection::Refinements, ctx.tip_ids);
      ctx.current_config = render_config(*in.config);
      ctx.last_result = in.last_result ? summarize(*in.last_result) : "(no run yet)";
      if (!in.repair_error.empty()) {
        ctx.last_result += "\nThe last run failed. Repair the configuration. Error:\n" + in.repair_error;
      }
      ctx.schema = schema_text({stage, in.banks, ctx.task_kind, ctx.model});
      const Memory& memory = *in.memory;
      ctx.rendered = render_within_budget(
          tpl,
          {{"task", ctx.task_text},
           {"tips", ctx.bank_excerpts},
           {"config", ctx.current_config},
           {"last_result", ctx.last_result},
           {"schema", ctx.schema}},
          "memory", in.budget, [&](std::size_t b) { return digest_for_context(memory, b); }, ctx.memory_digest);
      return ctx;
    }
    case Stage::FineTune: {
      require(in.memory && in.config, "fine_tune needs memory and the current config");
      ctx.model = in.banks->find_model(in.config->model_id);
      require(ctx.model != nullptr, "current config names an unknown model");
      ctx.config = *in.config;
      if (in.last_result) ctx.last_run = *in.last_result;
      ctx.bank_excerpts = hyperparam_schema_text(*ctx.model);
      ctx.current_config = assignment_text(*in.config);
      ctx.schema = schema_text({stage, in.banks, ctx.task_kind, ctx.model});
      const Memory& memory = *in.memory;
      ctx.rendered = render_within_budget(
          tpl, {{"hyperparams", ctx.bank_excerpts}, {"assignment", ctx.current_config}, {"schema", ctx.schema}},
          "history", in.budget, [&](std::size_t b) { return metrics_history(memory, b); }, ctx.memory_digest);
      return ctx;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown stage");
}

json to_json(const DecisionPayload& payload) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ModelPayload>) {
          return {{"model_ids", p.model_ids}};
        } else if constexpr (std::is_same_v<T, RefinementPayload>) {
          json arr = json::array();
          for (const auto& d : p.directives) arr.push_back(to_json(d));
          json out = {{"directives", arr}};
          if (p.freeform_patch) out["freeform_patch"] = *p.freeform_patch;
          return out;
        } else {
          return {{"hyperparams", to_json(p.hyperparams)}};
        }
      },
      payload);
}

std::optional<json> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        json doc = json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!doc.is_discarded() && doc.is_object()) return doc;
        break;
      }
    }
  }
  return std::nullopt;
}

ParsedDecision parse_decision(std::string_view text, const DecisionSchema& schema) {
  auto found = extract_first_json_object(text);
  if (!found) throw Error(ErrorCode::NoJsonFound, "response contains no JSON object");
  const json& doc = *found;

  ParsedDecision out;
  if (!doc.contains("rationale") || !doc["rationale"].is_string() || doc["rationale"].get<std::string>().empty()) {
    violation("rationale", "must be a non-empty string");
  }
  out.rationale = doc["rationale"].get<std::string>();

  switch (schema.stage) {
    case Stage::ModelSelect: {
      reject_unknown(doc, {"model_id", "model_ids", "rationale"});
      ModelPayload p;
      if (doc.contains("model_id") == doc.contains("model_ids")) violation("model_ids", "give exactly one of model_id or model_ids");
      if (doc.contains("model_id")) {
        if (!doc["model_id"].is_string()) violation("model_id", "must be a string");
        p.model_ids.push_back(doc["model_id"].get<std::string>());
      } else {
        const json& ids = doc["model_ids"];
        if (!ids.is_array() || ids.empty()) violation("model_ids", "must be a non-empty array");
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!ids[i].is_string()) violation("model_ids[" + std::to_string(i) + "]", "must be a string");
          p.model_ids.push_back(ids[i].get<std::string>());
        }
      }
      std::set<std::string> seen;
      for (std::size_t i = 0; i < p.model_ids.size(); ++i) {
        const std::string path = "model_ids[" + std::to_string(i) + "]";
        if (!seen.insert(p.model_ids[i]).second) violation(path, "duplicate model '" + p.model_ids[i] + "'");
        if (schema.banks) {
          const ModelDescriptor* m = schema.banks->find_model(p.model_ids[i]);
          if (!m) violation(path, "unknown model '" + p.model_ids[i] + "'");
          if (!m->task_kinds.count(schema.task_kind)) {
            violation(path, "model '" + p.model_ids[i] + "' does not serve " + std::string(to_string(schema.task_kind)));
          }
        }
      }
      out.payload = std::move(p);
      break;
    }
    case Stage::Refinement: {
      reject_unknown(doc, {"directives", "freeform_patch", "rationale"});
      RefinementPayload p;
      if (!doc.contains("directives") || !doc["directives"].is_array()) violation("directives", "must be an array");
      const json& ds = doc["directives"];
      for (std::size_t i = 0; i < ds.size(); ++i) {
        p.directives.push_back(directive_from_json(ds[i], "directives[" + std::to_string(i) + "]"));
      }
      if (doc.contains("freeform_patch")) {
        if (!doc["freeform_patch"].is_string()) violation("freeform_patch", "must be a string");
        if (!schema.model || !schema.model->external) violation("freeform_patch", "only external bindings accept patches");
        p.freeform_patch = doc["freeform_patch"].get<std::string>();
      }
      out.payload = std::move(p);
      break;
    }
    case Stage::FineTune: {
      reject_unknown(doc, {"hyperparams", "rationale"});
      FineTunePayload p;
      if (!doc.contains("hyperparams") || !doc["hyperparams"].is_object()) violation("hyperparams", "must be an object");
      for (const auto& [name, value] : doc["hyperparams"].items()) {
        const std::string path = "hyperparams." + name;
        const HyperparamSpec* spec = schema.model ? schema.model->find_param(name) : nullptr;
        if (!spec) violation(path, "not a hyperparameter of this model");
        auto coerced = spec->coerce(value);
        if (auto* reason = std::get_if<std::string>(&coerced)) violation(path, *reason);
        p.hyperparams[name] = std::get<HyperValue>(coerced);
      }
      out.payload = std::move(p);
      break;
    }
  }
  return out;
}

Decision decide(PlannerBackend& backend, const DecisionContext& ctx, const BankSet& banks, int attempts) {
  if (!backend.serves(ctx.stage)) {
    throw Error(ErrorCode::BackendUnavailable, backend.id() + " does not serve " + std::string(to_string(ctx.stage)));
  }
  const DecisionSchema schema = schema_for(ctx, banks);
  std::vector<std::string> feedback;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    const std::string text = backend.respond(ctx, feedback);
    try {
      ParsedDecision parsed = parse_decision(text, schema);
      Decision d;
      d.kind = ctx.stage;
      d.payload = std::move(parsed.payload);
      d.rationale = std::move(parsed.rationale);
      d.backend_id = backend.id();
      d.retries = attempt;
      d.parse_errors = feedback;
      d.template_digest = ctx.template_digest;
      return d;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoJsonFound && e.code() != ErrorCode::FieldViolation) throw;
      feedback.push_back(e.what());
    }
  }
  throw Error(ErrorCode::ParseExhausted, std::to_string(attempts) + " unusable responses; last: " + feedback.back());
}

Decision noop_decision(const DecisionContext& ctx, const std::string& reason) {
  Decision d;
  d.kind = ctx.stage;
  d.rationale = reason;
  d.backend_id = "fallback";
  d.fallback = true;
  d.template_digest = ctx.template_digest;
  switch (ctx.stage) {
    case Stage::ModelSelect: {
      ModelPayload p;
      for (std::size_t i = 0; i < ctx.vote_models.size() && i < std::max<std::size_t>(ctx.k, 1); ++i) {
        p.model_ids.push_back(ctx.vote_models[i]);
      }
      d.payload = std::move(p);
      break;
    }
    case Stage::Refinement: {
      RefinementPayload p;
      if (ctx.config) {
        p.directives = ctx.config->directives;
        p.freeform_patch = ctx.config->freeform_patch;
      }
      d.payload = std::move(p);
      break;
    }
    case Stage::FineTune:
      d.payload = FineTunePayload{};
      break;
  }
  return d;
}

}  // namespace tsflow
