#include "tsflow/backends.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsflow {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

bool is_normalization(DirectiveKind k) {
  return k == DirectiveKind::NormalizeZscore || k == DirectiveKind::NormalizeMinmax;
}

/// Removes directives that `d` supersedes, then appends it.
std::vector<DirectiveInstance> with_directive(std::vector<DirectiveInstance> list, const DirectiveInstance& d) {
  std::erase_if(list, [&](const DirectiveInstance& x) {
    return x.kind == d.kind || (is_normalization(x.kind) && is_normalization(d.kind));
  });
  list.push_back(d);
  return list;
}

std::string describe(const DirectiveInstance& d) {
  std::ostringstream os;
  os << to_string(d.kind);
  if (!d.params.empty()) {
    os << "(";
    bool first = true;
    for (const auto& [k, v] : d.params) {
      os << (first ? "" : ", ") << k << "=" << format_double(v);
      first = false;
    }
    os << ")";
  }
  return os.str();
}

json refinement_response(const std::vector<DirectiveInstance>& directives, const DecisionContext& ctx,
                         const std::string& rationale) {
  json arr = json::array();
  for (const auto& d : directives) arr.push_back(to_json(d));
  json doc = {{"directives", arr}, {"rationale", rationale}};
  if (ctx.config && ctx.config->freeform_patch && ctx.model && ctx.model->external) {
    doc["freeform_patch"] = *ctx.config->freeform_patch;
  }
  return doc;
}

std::string first_line(const std::string& text) {
  auto pos = text.find('\n');
  return pos == std::string::npos ? text : text.substr(0, pos);
}

std::string where(const DecisionContext& ctx) {
  return "Iteration " + std::to_string(ctx.iteration) + " for " + ctx.candidate_id;
}

/// Template parameters for pass `round` over the tip list: the default first,
/// then alternately smaller and larger values inside the template range.
DirectiveInstance scaled_directive(const DirectiveTemplate& tpl, std::size_t round) {
  DirectiveInstance d = tpl.instantiate();
  if (round == 0) return d;
  for (const auto& spec : directive_params(tpl.kind)) {
    auto it = tpl.params.find(spec.name);
    if (it == tpl.params.end()) continue;
    const DirectiveParamTemplate& t = it->second;
    double v;
    if (t.default_value != 0.0) {
      const double factor = round % 2 == 1 ? std::pow(0.5, static_cast<double>((round + 1) / 2))
                                           : std::pow(2.0, static_cast<double>(round / 2));
      v = t.default_value * factor;
    } else {
      v = t.min + (t.max - t.min) / static_cast<double>(round + 1);
    }
    v = std::clamp(v, t.min, t.max);
    if (spec.integer) v = std::round(v);
    d.params[spec.name] = v;
  }
  if (check_directive(d)) return tpl.instantiate();
  return d;
}

std::optional<HyperValue> step(const HyperparamSpec& spec, const HyperValue& current, int dir) {
  switch (spec.type) {
    case HyperType::Int: {
      const auto v = static_cast<std::int64_t>(as_real(current));
      std::int64_t nv = dir > 0 ? std::max(v + 1, v * 2) : std::min(v - 1, v / 2);
      nv = std::clamp(nv, static_cast<std::int64_t>(std::ceil(spec.min)), static_cast<std::int64_t>(std::floor(spec.max)));
      if (nv == v) return std::nullopt;
      return HyperValue{nv};
    }
    case HyperType::Real:
    case HyperType::LogReal: {
      const double v = as_real(current);
      double nv;
      if (v == 0.0) {
        nv = dir > 0 ? spec.min + (spec.max - spec.min) * 0.25 : spec.min;
      } else {
        nv = dir > 0 ? v * 2.0 : v / 2.0;
      }
      nv = std::clamp(nv, spec.min, spec.max);
      if (nv == v) return std::nullopt;
      return HyperValue{nv};
    }
    case HyperType::Categorical: {
      const auto& s = std::get<std::string>(current);
      auto it = std::find(spec.choices.begin(), spec.choices.end(), s);
      const auto idx = static_cast<std::ptrdiff_t>(it - spec.choices.begin()) + dir;
      if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(spec.choices.size())) return std::nullopt;
      return HyperValue{spec.choices[static_cast<std::size_t>(idx)]};
    }
  }
  return std::nullopt;
}

HyperValue current_value(const CandidateConfig& config, const HyperparamSpec& spec) {
  auto it = config.hyperparams.find(spec.name);
  return it != config.hyperparams.end() ? it->second : spec.default_value;
}

bool same_value(const HyperValue& a, const HyperValue& b) {
  if (std::holds_alternative<std::string>(a) || std::holds_alternative<std::string>(b)) return a == b;
  return as_real(a) == as_real(b);
}

}  // namespace

// -- scripted -----------------------------------------------------------------

ScriptedBackend::ScriptedBackend(const BankSet& banks, ScriptedOptions options) : banks_(banks), options_(options) {}

std::unique_ptr<PlannerBackend> ScriptedBackend::fork(std::uint64_t) const {
  return std::make_unique<ScriptedBackend>(banks_, options_);
}

std::string ScriptedBackend::respond(const DecisionContext& ctx, std::span<const std::string>) {
  switch (ctx.stage) {
    case Stage::ModelSelect:
      return model_select(ctx);
    case Stage::Refinement:
      return ctx.repair_error.empty() ? refinement(ctx) : repair(ctx);
    case Stage::FineTune:
      return fine_tune(ctx);
  }
  return "{}";
}

std::string ScriptedBackend::model_select(const DecisionContext& ctx) const {
  std::vector<std::string> ids = ctx.vote_models;
  std::string rule;
  switch (options_.model_order) {
    case ModelOrder::Votes:
      rule = "retrieval vote order";
      break;
    case ModelOrder::ReverseVotes:
      std::reverse(ids.begin(), ids.end());
      rule = "reversed vote order";
      break;
    case ModelOrder::Lexical:
      std::sort(ids.begin(), ids.end());
      rule = "lexical order";
      break;
    case ModelOrder::ReverseLexical:
      std::sort(ids.rbegin(), ids.rend());
      rule = "reverse lexical order";
      break;
  }
  if (ids.size() > ctx.k) ids.resize(ctx.k);
  std::string listing;
  for (const auto& id : ids) listing += (listing.empty() ? "" : ", ") + id;
  const std::string rationale = "Model selection by " + rule + ": " + listing + ".";
  return json{{"model_ids", ids}, {"rationale", rationale}}.dump();
}

std::string ScriptedBackend::refinement(const DecisionContext& ctx) {
  const std::vector<DirectiveInstance> current = ctx.config ? ctx.config->directives : std::vector<DirectiveInstance>{};
  const std::size_t n = ctx.tip_ids.size();
  for (std::size_t tries = 0; tries < n; ++tries) {
    const std::size_t pos = tip_cursor_++;
    const RefinementEntry* tip = banks_.find_refinement(ctx.tip_ids[pos % n]);
    if (!tip) continue;
    const DirectiveInstance d = scaled_directive(tip->directive_template, pos / n);
    std::vector<DirectiveInstance> next = with_directive(current, d);
    if (next == current) continue;
    const std::string rationale =
        where(ctx) + ": apply tip " + tip->id + " (" + tip->title + ") as " + describe(d) + ".";
    return refinement_response(next, ctx, rationale).dump();
  }
  return refinement_response(current, ctx, where(ctx) + ": no applicable tip changes the directives; keeping them.")
      .dump();
}

std::string ScriptedBackend::repair(const DecisionContext& ctx) const {
  std::vector<DirectiveInstance> directives = ctx.config ? ctx.config->directives : std::vector<DirectiveInstance>{};
  const std::string prefix = where(ctx) + ", repair attempt " + std::to_string(ctx.repair_attempt);
  const std::string error = first_line(ctx.repair_error);
  if (!options_.repair || directives.empty()) {
    return refinement_response(directives, ctx, prefix + ": keeping directives unchanged after error: " + error).dump();
  }
  std::size_t victim = directives.size() - 1;
  for (std::size_t i = 0; i < directives.size(); ++i) {
    if (ctx.repair_error.find(std::string(to_string(directives[i].kind))) != std::string::npos) {
      victim = i;
      break;
    }
  }
  const std::string dropped = describe(directives[victim]);
  directives.erase(directives.begin() + static_cast<std::ptrdiff_t>(victim));
  return refinement_response(directives, ctx, prefix + ": drop " + dropped + " after error: " + error).dump();
}

std::string ScriptedBackend::fine_tune(const DecisionContext& ctx) {
  if (!ctx.model || !ctx.config || ctx.model->hyperparam_schema.empty()) {
    return json{{"hyperparams", json::object()},
                {"rationale", where(ctx) + ": the model has no hyperparameters to tune."}}
        .dump();
  }
  const auto& params = ctx.model->hyperparam_schema;
  const std::size_t n = params.size();
  auto advance = [&] {
    if (direction_ > 0 && !direction_progressed_) {
      direction_ = -1;
    } else {
      ++param_index_;
      direction_ = 1;
    }
    direction_progressed_ = false;
  };

  std::string verdict = "first move";
  if (last_move_) {
    const HyperparamSpec* spec = ctx.model->find_param(last_move_->first);
    const bool kept = spec && same_value(current_value(*ctx.config, *spec), last_move_->second);
    verdict = kept ? "previous move kept" : "previous move not kept";
    if (kept) {
      direction_progressed_ = true;
      rejected_moves_.clear();
    } else {
      rejected_moves_.emplace(last_move_->first, to_display(last_move_->second));
      advance();
    }
  }
  for (std::size_t tries = 0; tries < 2 * n; ++tries) {
    const HyperparamSpec& spec = params[param_index_ % n];
    const HyperValue cur = current_value(*ctx.config, spec);
    auto nv = step(spec, cur, direction_);
    if (nv && rejected_moves_.count({spec.name, to_display(*nv)})) nv.reset();
    if (nv) {
      last_move_ = std::make_pair(spec.name, *nv);
      const std::string rationale = where(ctx) + ": " + verdict + "; move " + spec.name + " from " + to_display(cur) +
                                    " to " + to_display(*nv) + ".";
      return json{{"hyperparams", {{spec.name, to_json(*nv)}}}, {"rationale", rationale}}.dump();
    }
    advance();
  }
  last_move_.reset();
  return json{{"hyperparams", json::object()},
              {"rationale", where(ctx) + ": no untried move within the ranges; keeping the assignment."}}
      .dump();
}

// -- seeded random ------------------------------------------------------------

RandomBackend::RandomBackend(const BankSet& banks, std::uint64_t seed, std::uint64_t stream)
    : banks_(banks), seed_(seed), stream_(stream), rng_(mix_seed(seed, stream)) {}

std::unique_ptr<PlannerBackend> RandomBackend::fork(std::uint64_t stream) const {
  return std::make_unique<RandomBackend>(banks_, seed_, stream);
}

std::string RandomBackend::respond(const DecisionContext& ctx, std::span<const std::string>) {
  ++draws_;
  const std::string tag = "Random draw " + std::to_string(draws_) + " (stream " + std::to_string(stream_) + "), " +
                          where(ctx);
  auto uniform_index = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); };

  if (ctx.stage == Stage::ModelSelect) {
    std::vector<std::string> ids = ctx.vote_models;
    std::shuffle(ids.begin(), ids.end(), rng_);
    if (ids.size() > ctx.k) ids.resize(ctx.k);
    return json{{"model_ids", ids}, {"rationale", tag + ": shuffled the voted models."}}.dump();
  }

  if (ctx.stage == Stage::Refinement) {
    std::vector<DirectiveInstance> directives = ctx.config ? ctx.config->directives : std::vector<DirectiveInstance>{};
    if (!ctx.repair_error.empty()) {
      if (directives.empty()) return refinement_response(directives, ctx, tag + ": nothing to drop for repair.").dump();
      const std::size_t victim = uniform_index(directives.size());
      const std::string dropped = describe(directives[victim]);
      directives.erase(directives.begin() + static_cast<std::ptrdiff_t>(victim));
      return refinement_response(directives, ctx, tag + ": repair by dropping " + dropped + ".").dump();
    }
    std::vector<int> actions{2};
    if (!ctx.tip_ids.empty()) actions.push_back(0);
    if (!directives.empty()) actions.push_back(1);
    std::sort(actions.begin(), actions.end());
    const int action = actions[uniform_index(actions.size())];
    if (action == 0) {
      const RefinementEntry* tip = banks_.find_refinement(ctx.tip_ids[uniform_index(ctx.tip_ids.size())]);
      DirectiveInstance d = tip->directive_template.instantiate();
      for (const auto& spec : directive_params(d.kind)) {
        auto it = tip->directive_template.params.find(spec.name);
        if (it == tip->directive_template.params.end()) continue;
        for (int attempt = 0; attempt < 16; ++attempt) {
          double v;
          if (spec.integer) {
            v = static_cast<double>(std::uniform_int_distribution<std::int64_t>(
                static_cast<std::int64_t>(std::ceil(it->second.min)),
                static_cast<std::int64_t>(std::floor(it->second.max)))(rng_));
          } else {
            v = std::uniform_real_distribution<double>(it->second.min, it->second.max)(rng_);
          }
          if (spec.admits(v)) {
            d.params[spec.name] = v;
            break;
          }
        }
      }
      if (check_directive(d)) d = tip->directive_template.instantiate();
      return refinement_response(with_directive(directives, d), ctx, tag + ": apply tip " + tip->id + " as " + describe(d) + ".")
          .dump();
    }
    if (action == 1) {
      const std::size_t victim = uniform_index(directives.size());
      const std::string dropped = describe(directives[victim]);
      directives.erase(directives.begin() + static_cast<std::ptrdiff_t>(victim));
      return refinement_response(directives, ctx, tag + ": drop " + dropped + ".").dump();
    }
    return refinement_response(directives, ctx, tag + ": keep the directives.").dump();
  }

  if (!ctx.model || ctx.model->hyperparam_schema.empty()) {
    return json{{"hyperparams", json::object()}, {"rationale", tag + ": no hyperparameters."}}.dump();
  }
  const HyperparamSpec& spec = ctx.model->hyperparam_schema[uniform_index(ctx.model->hyperparam_schema.size())];
  json value;
  switch (spec.type) {
    case HyperType::Int:
      value = std::uniform_int_distribution<std::int64_t>(static_cast<std::int64_t>(std::ceil(spec.min)),
                                                          static_cast<std::int64_t>(std::floor(spec.max)))(rng_);
      break;
    case HyperType::Real:
      value = std::uniform_real_distribution<double>(spec.min, spec.max)(rng_);
      break;
    case HyperType::LogReal:
      if (spec.min > 0.0) {
        value = std::exp(std::uniform_real_distribution<double>(std::log(spec.min), std::log(spec.max))(rng_));
      } else {
        value = std::uniform_real_distribution<double>(spec.min, spec.max)(rng_);
      }
      break;
    case HyperType::Categorical:
      value = spec.choices[uniform_index(spec.choices.size())];
      break;
  }
  auto coerced = spec.coerce(value);
  if (std::holds_alternative<std::string>(coerced)) {
    return json{{"hyperparams", json::object()}, {"rationale", tag + ": drew an invalid value; keeping the assignment."}}
        .dump();
  }
  return json{{"hyperparams", {{spec.name, value}}},
              {"rationale", tag + ": set " + spec.name + " to " + to_display(std::get<HyperValue>(coerced)) + "."}}
      .dump();
}

// -- LLM --------------------------------------------------------------------------

LlmBackend::LlmBackend(std::shared_ptr<LlmGateway> gateway, ChatParams params)
    : gateway_(std::move(gateway)), params_(std::move(params)) {
  if (!gateway_) throw Error(ErrorCode::BackendUnavailable, "LLM backend needs a gateway");
  if (params_.model_name.empty()) params_.model_name = gateway_->model_name();
}

std::string LlmBackend::id() const { return "llm:" + std::string(to_string(gateway_->mode())); }

std::unique_ptr<PlannerBackend> LlmBackend::fork(std::uint64_t) const {
  return std::make_unique<LlmBackend>(gateway_, params_);
}

ChatRequest LlmBackend::make_request(const DecisionContext& ctx, std::span<const std::string> feedback) const {
  ChatRequest req;
  req.params = params_;
  req.messages.push_back({"system",
                          "You are the planning component of a time-series modelling workflow. Reply with exactly one "
                          "JSON object that matches the requested schema."});
  std::string user = ctx.rendered;
  for (const auto& err : feedback) {
    user += "\n\nYour previous answer could not be used (" + err + "). Reply again with one valid JSON object.";
  }
  req.messages.push_back({"user", user});
  return req;
}

std::string LlmBackend::respond(const DecisionContext& ctx, std::span<const std::string> feedback) {
  return gateway_->complete(make_request(ctx, feedback));
}

}  // namespace tsflow
