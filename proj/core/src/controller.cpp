#include "tsflow/controller.hpp"

#include "tsflow/backends.hpp"
#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <thread>

namespace tsflow {

using nlohmann::json;

namespace {

std::int64_t since_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
}

json loss_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json decision_payload(const Decision& d) {
  return {{"stage", to_string(d.kind)},
          {"decision", to_json(d.payload)},
          {"backend_id", d.backend_id},
          {"retries", d.retries},
          {"parse_errors", d.parse_errors},
          {"template_digest", d.template_digest},
          {"fallback", d.fallback}};
}

std::string where(const std::string& candidate_id, std::int64_t iteration) {
  return "Iteration " + std::to_string(iteration) + " for " + candidate_id;
}

LogEntry log_and_remember(SearchEnv& env, SearchState& state, EntryFields fields) {
  LogEntry e = env.log.append_entry(std::move(fields));
  state.memory.add(e);
  return e;
}

Decision decide_or_fallback(SearchEnv& env, PlannerBackend& planner, const DecisionContext& ctx) {
  if (env.hooks.on_context) env.hooks.on_context(ctx);
  Decision d;
  try {
    d = decide(planner, ctx, env.banks);
  } catch (const Error& e) {
    d = noop_decision(ctx, where(ctx.candidate_id, ctx.iteration) + ", " + std::string(to_string(ctx.stage)) +
                               " stage: planner gave no usable decision (" + e.what() +
                               "); keeping the current configuration.");
  }
  if (env.hooks.on_decision) env.hooks.on_decision(d);
  return d;
}

ContextInputs context_inputs(SearchEnv& env, SearchState& state, const CandidateConfig& config) {
  ContextInputs in;
  in.task = &env.task;
  in.banks = &env.banks;
  in.prompts = &env.prompts;
  in.budget = env.phase.context_budget;
  in.candidate_id = state.candidate_id;
  in.iteration = state.iteration;
  in.memory = &state.memory;
  in.config = &config;
  in.last_result = state.last_result ? &*state.last_result : nullptr;
  return in;
}

std::string failure_text(const RunResult& r) {
  std::string text = std::string(to_string(r.status)) + ": " + r.message;
  if (!r.stderr_tail.empty() && r.message.find(r.stderr_tail) == std::string::npos) {
    text += "\nstderr tail:\n" + r.stderr_tail;
  }
  return text;
}

json result_fields(const RunResult& r) {
  return {{"status", to_string(r.status)},
          {"message", r.message},
          {"primary_loss", loss_json(r.primary_loss)},
          {"artifact_digest", r.artifact_digest},
          {"warnings", r.warnings}};
}

void emit(SearchEnv& env, SearchState& state, IterationRecord record) {
  if (env.hooks.on_iteration) env.hooks.on_iteration(record);
  state.trace.push_back(std::move(record));
}

}  // namespace

void PhaseConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::ConfigError, "k must be >= 1");
  if (warmup_iters < 1) throw Error(ErrorCode::ConfigError, "warmup iterations must be >= 1");
  if (opt_iters < 1) throw Error(ErrorCode::ConfigError, "optimization iterations must be >= 1");
  if (debug_retries < 0) throw Error(ErrorCode::ConfigError, "debug retries must be >= 0");
  if (case_neighbors < 1) throw Error(ErrorCode::ConfigError, "case neighbors must be >= 1");
  if (context_budget < 256) throw Error(ErrorCode::ConfigError, "context budget must be >= 256 characters");
}

json to_json(const PhaseConfig& p) {
  return {{"k", p.k},
          {"warmup_iters", p.warmup_iters},
          {"opt_iters", p.opt_iters},
          {"debug_retries", p.debug_retries},
          {"seed", p.seed},
          {"case_neighbors", p.case_neighbors},
          {"context_budget", p.context_budget},
          {"t_max", p.t_max()}};
}

StageOneResult stage1_preselect(SearchEnv& env, PlannerBackend& planner) {
  StageOneResult out;
  const CaseIndex index = index_cases(env.banks, env.task.kind);
  out.retrieval = top_k_models(retrieve(index, env.task.description, env.phase.case_neighbors), env.banks, env.phase.k);

  ContextInputs in;
  in.task = &env.task;
  in.banks = &env.banks;
  in.prompts = &env.prompts;
  in.budget = env.phase.context_budget;
  in.candidate_id = "stage1";
  in.retrieval = &out.retrieval;
  in.k = env.phase.k;
  const DecisionContext ctx = build_context(Stage::ModelSelect, in);
  out.decision = decide_or_fallback(env, planner, ctx);

  std::vector<std::string> ids = std::get<ModelPayload>(out.decision.payload).model_ids;
  if (ids.size() > env.phase.k) ids.resize(env.phase.k);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const ModelDescriptor* model = env.banks.find_model(ids[i]);
    CandidateConfig cfg;
    cfg.model_id = ids[i];
    cfg.hyperparams = model->defaults();
    cfg.seed = mix_seed(env.phase.seed, i);
    out.candidates.push_back({"c" + std::to_string(i) + "-" + ids[i], ids[i]});
    out.configs.push_back(std::move(cfg));
  }

  json votes = json::array();
  for (const auto& v : out.retrieval.model_votes) {
    votes.push_back({{"model_id", v.model_id}, {"score", v.score}, {"cases", v.contributing_cases}});
  }
  json ranked = json::array();
  for (const auto& rc : out.retrieval.ranked) ranked.push_back({{"case_id", rc.case_id}, {"similarity", rc.similarity}});
  json candidates = json::array();
  for (std::size_t i = 0; i < out.candidates.size(); ++i) {
    candidates.push_back({{"candidate_id", out.candidates[i].candidate_id},
                          {"model_id", out.candidates[i].model_id},
                          {"seed", out.configs[i].seed},
                          {"config_digest", config_digest(out.configs[i])}});
  }
  json payload = decision_payload(out.decision);
  payload["votes"] = votes;
  payload["ranked_cases"] = ranked;
  payload["candidates"] = candidates;
  payload["retrieval_rationale"] = out.retrieval.rationale;
  payload["shortfall"] = out.retrieval.shortfall;
  if (out.retrieval.shortfall) {
    payload["warning"] = "only " + std::to_string(out.retrieval.model_votes.size()) + " distinct model(s) for k=" +
                         std::to_string(env.phase.k);
  }
  EntryFields f;
  f.iteration = 0;
  f.candidate_id = "stage1";
  f.action = ActionKind::Model;
  f.payload = std::move(payload);
  f.rationale = out.decision.rationale;
  f.verdict = Verdict::NotApplicable;
  env.log.append(std::move(f));
  return out;
}

SearchState warm_start(SearchEnv& env, const std::string& candidate_id, const CandidateConfig& config,
                       const std::string& phase) {
  SearchState st;
  st.candidate_id = candidate_id;
  st.memory = Memory(candidate_id);
  st.incumbent = config;
  RunResult r = env.executor.run(config, env.task);
  st.incumbent_result = r;
  st.last_result = r;
  st.failed = !r.ok();
  const std::string digest = config_digest(config);

  json payload = result_fields(r);
  payload["phase"] = phase;
  payload["kind"] = "warm_start";
  payload["candidate"] = to_json(config);
  payload["hyperparams"] = to_json(config.hyperparams);
  payload["incumbent_before"] = nullptr;
  payload["incumbent_after"] = r.ok() ? json(digest) : json(nullptr);
  payload["incumbent_loss"] = loss_json(r.primary_loss);
  payload["debug_attempts"] = 0;

  EntryFields f;
  f.iteration = 0;
  f.candidate_id = candidate_id;
  f.action = ActionKind::Logging;
  f.payload = std::move(payload);
  f.rationale = r.ok() ? where(candidate_id, 0) + ": bank defaults scored " + format_double(*r.primary_loss) +
                             "; they become the incumbent."
                       : where(candidate_id, 0) + ": bank defaults failed (" + failure_text(r) +
                             "); candidate is skipped.";
  f.config_digest = digest;
  if (r.ok()) f.metrics = r.metrics;
  f.verdict = r.ok() ? Verdict::Accepted : Verdict::Rejected;
  log_and_remember(env, st, std::move(f));
  st.memory.push_state(digest);
  if (r.ok()) st.memory.offer_best(digest, *r.primary_loss);

  IterationRecord rec;
  rec.phase = phase;
  rec.candidate_id = candidate_id;
  rec.iteration = 0;
  rec.status = std::string(to_string(r.status));
  rec.candidate_loss = r.primary_loss;
  rec.incumbent_loss = r.primary_loss;
  rec.verdict = r.ok() ? "accepted" : "rejected";
  rec.candidate_digest = digest;
  rec.incumbent_after = r.ok() ? digest : std::string{};
  emit(env, st, std::move(rec));
  return st;
}

DebugOutcome debug_fix(SearchEnv& env, SearchState& state, PlannerBackend& planner, CandidateConfig& config,
                       RunResult failed, int retries, const std::string& phase) {
  DebugOutcome out{std::move(failed), 0};
  for (int attempt = 1; attempt <= retries && !out.result.ok(); ++attempt) {
    const std::string error = failure_text(out.result);
    ContextInputs in = context_inputs(env, state, config);
    in.last_result = &out.result;
    in.repair_error = error;
    in.repair_attempt = attempt;
    const DecisionContext ctx = build_context(Stage::Refinement, in);
    const Decision d = decide_or_fallback(env, planner, ctx);
    const auto& p = std::get<RefinementPayload>(d.payload);
    config.directives = p.directives;
    config.freeform_patch = p.freeform_patch;
    RunResult r = env.executor.run(config, env.task);
    out.attempts = attempt;

    json payload = decision_payload(d);
    payload["phase"] = phase;
    payload["attempt"] = attempt;
    payload["error"] = error;
    payload["result"] = result_fields(r);
    EntryFields f;
    f.iteration = state.iteration;
    f.candidate_id = state.candidate_id;
    f.action = ActionKind::DebugAttempt;
    f.payload = std::move(payload);
    f.rationale = d.rationale;
    f.config_digest = config_digest(config);
    if (r.ok()) f.metrics = r.metrics;
    f.verdict = Verdict::NotApplicable;
    log_and_remember(env, state, std::move(f));
    out.result = std::move(r);
  }
  return out;
}

void refine_iteration(SearchEnv& env, SearchState& state, PlannerBackend& planner, const std::string& phase) {
  ++state.iteration;
  const std::string before = config_digest(state.incumbent);
  CandidateConfig candidate = state.incumbent;

  {
    const DecisionContext ctx = build_context(Stage::Refinement, context_inputs(env, state, candidate));
    const Decision d = decide_or_fallback(env, planner, ctx);
    const auto& p = std::get<RefinementPayload>(d.payload);
    candidate.directives = p.directives;
    candidate.freeform_patch = p.freeform_patch;
    EntryFields f;
    f.iteration = state.iteration;
    f.candidate_id = state.candidate_id;
    f.action = ActionKind::Refinement;
    f.payload = decision_payload(d);
    f.payload["phase"] = phase;
    f.rationale = d.rationale;
    f.config_digest = config_digest(candidate);
    f.verdict = Verdict::NotApplicable;
    log_and_remember(env, state, std::move(f));
  }
  {
    const DecisionContext ctx = build_context(Stage::FineTune, context_inputs(env, state, candidate));
    const Decision d = decide_or_fallback(env, planner, ctx);
    for (const auto& [name, value] : std::get<FineTunePayload>(d.payload).hyperparams) candidate.hyperparams[name] = value;
    EntryFields f;
    f.iteration = state.iteration;
    f.candidate_id = state.candidate_id;
    f.action = ActionKind::FineTune;
    f.payload = decision_payload(d);
    f.payload["phase"] = phase;
    f.rationale = d.rationale;
    f.config_digest = config_digest(candidate);
    f.verdict = Verdict::NotApplicable;
    log_and_remember(env, state, std::move(f));
  }

  RunResult result = env.executor.run(candidate, env.task);
  int attempts = 0;
  if (!result.ok()) {
    DebugOutcome fixed = debug_fix(env, state, planner, candidate, std::move(result), env.phase.debug_retries, phase);
    result = std::move(fixed.result);
    attempts = fixed.attempts;
  }

  const double incumbent_loss = *state.incumbent_result.primary_loss;
  const bool accepted = result.ok() && *result.primary_loss < incumbent_loss;
  const std::string candidate_digest = config_digest(candidate);
  std::string rationale = where(state.candidate_id, state.iteration) + ": ";
  if (!result.ok()) {
    rationale += "candidate failed (" + std::string(to_string(result.status)) + ") after " + std::to_string(attempts) +
                 " repair attempt(s); reverting to the incumbent.";
  } else if (accepted) {
    rationale += "candidate loss " + format_double(*result.primary_loss) + " < incumbent " +
                 format_double(incumbent_loss) + "; candidate becomes the incumbent.";
  } else {
    rationale += "candidate loss " + format_double(*result.primary_loss) + " >= incumbent " +
                 format_double(incumbent_loss) + "; reverting to the incumbent.";
  }
  if (accepted) {
    state.incumbent = candidate;
    state.incumbent_result = result;
    state.memory.offer_best(candidate_digest, *result.primary_loss);
  }
  const std::string after = config_digest(state.incumbent);

  json payload = result_fields(result);
  payload["phase"] = phase;
  payload["kind"] = "iteration";
  payload["candidate"] = to_json(candidate);
  payload["hyperparams"] = to_json(candidate.hyperparams);
  payload["incumbent_before"] = before;
  payload["incumbent_after"] = after;
  payload["incumbent_loss"] = *state.incumbent_result.primary_loss;
  payload["debug_attempts"] = attempts;
  EntryFields f;
  f.iteration = state.iteration;
  f.candidate_id = state.candidate_id;
  f.action = ActionKind::Logging;
  f.payload = std::move(payload);
  f.rationale = rationale;
  f.config_digest = candidate_digest;
  if (result.ok()) f.metrics = result.metrics;
  f.verdict = accepted ? Verdict::Accepted : Verdict::Rejected;
  log_and_remember(env, state, std::move(f));
  state.memory.push_state(after);
  state.last_result = result;

  IterationRecord rec;
  rec.phase = phase;
  rec.candidate_id = state.candidate_id;
  rec.iteration = state.iteration;
  rec.status = std::string(to_string(result.status));
  rec.candidate_loss = result.primary_loss;
  rec.incumbent_loss = state.incumbent_result.primary_loss;
  rec.verdict = accepted ? "accepted" : "rejected";
  rec.candidate_digest = candidate_digest;
  rec.incumbent_before = before;
  rec.incumbent_after = after;
  rec.debug_attempts = attempts;
  emit(env, state, std::move(rec));
}

namespace {

/// Runs every warm-up loop and keeps their states even when some fail.
WarmupResult run_warmup_loops(SearchEnv& env, const StageOneResult& stage1, const PlannerBackend& root) {
  const std::size_t n = stage1.candidates.size();
  if (n == 0) throw Error(ErrorCode::NoCandidates, "warm-up needs at least one candidate");
  WarmupResult out;
  out.loops.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.planners.push_back(root.fork(i + 1));

  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      SearchState st;
      try {
        st = warm_start(env, stage1.candidates[i].candidate_id, stage1.configs[i], "warmup");
        if (!st.failed) {
          for (int t = 0; t < env.phase.warmup_iters; ++t) refine_iteration(env, st, *out.planners[i], "warmup");
        }
        if (env.hooks.on_loop_done) env.hooks.on_loop_done(st.memory);
      } catch (...) {
        errors[i] = std::current_exception();
        st.failed = true;
      }
      out.loops[i] = std::move(st);
    }
  };
  const std::size_t workers = std::min(n, env.phase.parallel == 0 ? env.phase.k : env.phase.parallel);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// Minimum best loss; ties keep the earlier stage-one candidate.
std::optional<std::size_t> pick_winner(const WarmupResult& wu) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < wu.loops.size(); ++i) {
    if (wu.loops[i].failed) continue;
    if (!best || *wu.loops[i].incumbent_result.primary_loss < *wu.loops[*best].incumbent_result.primary_loss) best = i;
  }
  return best;
}

}  // namespace

WarmupResult run_warmup(SearchEnv& env, const StageOneResult& stage1, const PlannerBackend& root) {
  WarmupResult out = run_warmup_loops(env, stage1, root);
  auto best = pick_winner(out);
  if (!best) throw Error(ErrorCode::AllCandidatesFailed, "no candidate produced a successful run during warm-up");
  out.winner = *best;
  return out;
}

void run_optimization(SearchEnv& env, SearchState& winner, PlannerBackend& planner, int iterations) {
  if (winner.failed) throw Error(ErrorCode::InvalidArgument, "optimization needs a successful incumbent");
  for (int t = 0; t < iterations; ++t) refine_iteration(env, winner, planner, "optimization");
  if (env.hooks.on_loop_done) env.hooks.on_loop_done(winner.memory);
}

namespace {

void marker(SearchEnv& env, const std::string& name, json payload, std::string rationale) {
  payload["marker"] = name;
  EntryFields f;
  f.iteration = 0;
  f.candidate_id = "run";
  f.action = ActionKind::PhaseMarker;
  f.payload = std::move(payload);
  f.rationale = std::move(rationale);
  f.verdict = Verdict::NotApplicable;
  env.log.append(std::move(f));
}

}  // namespace

FinalReport run_full(SearchEnv& env, PlannerBackend& planner) {
  const auto start = std::chrono::steady_clock::now();
  env.phase.validate();
  FinalReport report;
  report.task_id = env.task.id;
  report.bank_digest = env.banks.content_digest;
  marker(env, "run_start",
         {{"task_id", env.task.id},
          {"task_kind", to_string(env.task.kind)},
          {"bank_digest", env.banks.content_digest},
          {"phase_config", to_json(env.phase)},
          {"planner", planner.id()}},
         "Run started for task " + env.task.id + ".");

  std::string phase_name = "stage1";
  std::vector<IterationRecord> trace;
  WarmupResult wu;
  SearchState* winner_ptr = nullptr;
  try {
    auto t0 = std::chrono::steady_clock::now();
    StageOneResult s1 = stage1_preselect(env, planner);
    report.stage1 = s1.candidates;
    report.stage1_shortfall = s1.retrieval.shortfall;
    report.wall_clock.stage1_ms = since_ms(t0);

    phase_name = "warmup";
    t0 = std::chrono::steady_clock::now();
    marker(env, "warmup_start", {{"candidates", s1.candidates.size()}, {"iterations", env.phase.warmup_iters}},
           "Warm-up started.");
    wu = run_warmup_loops(env, s1, planner);
    for (auto& loop : wu.loops) trace.insert(trace.end(), loop.trace.begin(), loop.trace.end());
    const auto best = pick_winner(wu);
    if (!best) throw Error(ErrorCode::AllCandidatesFailed, "no candidate produced a successful run during warm-up");
    wu.winner = *best;
    SearchState& winner = wu.loops[wu.winner];
    winner_ptr = &winner;
    report.winner_candidate_id = winner.candidate_id;
    json bests = json::array();
    for (const auto& loop : wu.loops) {
      bests.push_back({{"candidate_id", loop.candidate_id},
                       {"best_loss", loop.failed ? json(nullptr) : json(*loop.incumbent_result.primary_loss)}});
    }
    marker(env, "warmup_end", {{"winner", winner.candidate_id}, {"best", bests}},
           "Warm-up finished; " + winner.candidate_id + " wins with loss " +
               format_double(*winner.incumbent_result.primary_loss) + ".");
    report.wall_clock.warmup_ms = since_ms(t0);

    phase_name = "optimization";
    t0 = std::chrono::steady_clock::now();
    marker(env, "optimization_start", {{"candidate_id", winner.candidate_id}, {"iterations", env.phase.opt_iters}},
           "Optimization started on " + winner.candidate_id + ".");
    run_optimization(env, winner, *wu.planners[wu.winner], env.phase.opt_iters);
    marker(env, "optimization_end",
           {{"candidate_id", winner.candidate_id}, {"final_loss", *winner.incumbent_result.primary_loss}},
           "Optimization finished with loss " + format_double(*winner.incumbent_result.primary_loss) + ".");
    report.wall_clock.optimization_ms = since_ms(t0);

    report.winning_config = winner.incumbent;
    report.final_metrics = winner.incumbent_result.metrics;
    report.success = true;
  } catch (const std::exception& e) {
    report.success = false;
    report.failure_phase = phase_name;
    report.failure_message = e.what();
  }
  if (winner_ptr) {
    for (const auto& rec : winner_ptr->trace) {
      if (rec.phase == "optimization") trace.push_back(rec);
    }
  }

  sort_trace(trace, report.stage1);
  report.loss_trace = std::move(trace);
  report.phases = summarize_phases(report.loss_trace, report.stage1, report.winner_candidate_id);
  report.wall_clock.total_ms = since_ms(start);

  json end = {{"success", report.success},
              {"failure_phase", report.failure_phase ? json(*report.failure_phase) : json(nullptr)},
              {"failure_message", report.failure_message ? json(*report.failure_message) : json(nullptr)},
              {"winner", report.winner_candidate_id},
              {"winning_config_digest", report.winning_config ? json(config_digest(*report.winning_config)) : json(nullptr)},
              {"wall_clock",
               {{"total_ms", report.wall_clock.total_ms},
                {"stage1_ms", report.wall_clock.stage1_ms},
                {"warmup_ms", report.wall_clock.warmup_ms},
                {"optimization_ms", report.wall_clock.optimization_ms}}}};
  marker(env, "run_end", std::move(end),
         report.success ? "Run finished successfully." : "Run failed during " + *report.failure_phase + ".");
  report.audit_head_hash = env.log.head_hash();
  return report;
}

}  // namespace tsflow
