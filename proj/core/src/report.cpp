#include "tsflow/report.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"

#include <algorithm>
#include <sstream>

namespace tsflow {

using nlohmann::json;

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::string opt_string(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return {};
  return it->get<std::string>();
}

int phase_rank(const std::string& phase) {
  if (phase == "warmup") return 0;
  if (phase == "optimization") return 1;
  return 2;
}

const json* find_marker(const std::vector<LogEntry>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.action == ActionKind::PhaseMarker && e.payload.is_object() && e.payload.value("marker", "") == name) {
      return &e.payload;
    }
  }
  return nullptr;
}

std::string loss_text(const std::optional<double>& v) { return v ? format_double(*v) : "-"; }

}  // namespace

json to_json(const IterationRecord& r) {
  return {{"phase", r.phase},
          {"candidate_id", r.candidate_id},
          {"iteration", r.iteration},
          {"status", r.status},
          {"candidate_loss", opt_json(r.candidate_loss)},
          {"incumbent_loss", opt_json(r.incumbent_loss)},
          {"verdict", r.verdict},
          {"candidate_digest", r.candidate_digest},
          {"incumbent_before", r.incumbent_before},
          {"incumbent_after", r.incumbent_after},
          {"debug_attempts", r.debug_attempts}};
}

IterationRecord iteration_record_from_json(const json& doc) {
  IterationRecord r;
  r.phase = doc.at("phase").get<std::string>();
  r.candidate_id = doc.at("candidate_id").get<std::string>();
  r.iteration = doc.at("iteration").get<std::int64_t>();
  r.status = doc.at("status").get<std::string>();
  r.candidate_loss = opt_double(doc, "candidate_loss");
  r.incumbent_loss = opt_double(doc, "incumbent_loss");
  r.verdict = doc.at("verdict").get<std::string>();
  r.candidate_digest = doc.at("candidate_digest").get<std::string>();
  r.incumbent_before = doc.at("incumbent_before").get<std::string>();
  r.incumbent_after = doc.at("incumbent_after").get<std::string>();
  r.debug_attempts = doc.at("debug_attempts").get<int>();
  return r;
}

json to_json(const FinalReport& report, bool include_volatile) {
  json stage1 = json::array();
  for (const auto& c : report.stage1) stage1.push_back({{"candidate_id", c.candidate_id}, {"model_id", c.model_id}});
  json trace = json::array();
  for (const auto& r : report.loss_trace) trace.push_back(to_json(r));
  json phases = json::array();
  for (const auto& p : report.phases) {
    json cands = json::array();
    for (const auto& c : p.candidates) {
      cands.push_back({{"candidate_id", c.candidate_id},
                       {"model_id", c.model_id},
                       {"best_loss", opt_json(c.best_loss)},
                       {"iterations", c.iterations},
                       {"accepted", c.accepted},
                       {"rejected", c.rejected},
                       {"failed", c.failed}});
    }
    phases.push_back({{"phase", p.phase}, {"candidates", cands}, {"winner", p.winner}});
  }
  json doc = {{"task_id", report.task_id},
              {"success", report.success},
              {"failure", report.failure_phase ? json{{"phase", *report.failure_phase},
                                                      {"message", report.failure_message.value_or("")}}
                                               : json(nullptr)},
              {"stage1", {{"candidates", stage1}, {"shortfall", report.stage1_shortfall}}},
              {"winner_candidate_id", report.winner_candidate_id},
              {"winning_config", report.winning_config ? to_json(*report.winning_config) : json(nullptr)},
              {"final_metrics", report.final_metrics},
              {"loss_trace", trace},
              {"phases", phases},
              {"bank_digest", report.bank_digest}};
  if (include_volatile) {
    doc["audit_head_hash"] = report.audit_head_hash;
    doc["wall_clock"] = {{"total_ms", report.wall_clock.total_ms},
                         {"stage1_ms", report.wall_clock.stage1_ms},
                         {"warmup_ms", report.wall_clock.warmup_ms},
                         {"optimization_ms", report.wall_clock.optimization_ms}};
  }
  return doc;
}

std::string report_digest(const FinalReport& report) { return json_digest(to_json(report, false)); }

void sort_trace(std::vector<IterationRecord>& trace, const std::vector<StageOneCandidate>& stage1) {
  auto order = [&](const std::string& id) {
    for (std::size_t i = 0; i < stage1.size(); ++i) {
      if (stage1[i].candidate_id == id) return i;
    }
    return stage1.size();
  };
  std::stable_sort(trace.begin(), trace.end(), [&](const IterationRecord& a, const IterationRecord& b) {
    const auto ka = std::make_tuple(phase_rank(a.phase), order(a.candidate_id), a.iteration);
    const auto kb = std::make_tuple(phase_rank(b.phase), order(b.candidate_id), b.iteration);
    return ka < kb;
  });
}

std::vector<PhaseSummary> summarize_phases(const std::vector<IterationRecord>& trace,
                                           const std::vector<StageOneCandidate>& stage1, const std::string& winner) {
  std::vector<PhaseSummary> out;
  auto summarize = [&](const std::string& phase, const StageOneCandidate& c) {
    CandidateSummary s;
    s.candidate_id = c.candidate_id;
    s.model_id = c.model_id;
    bool seen = false;
    for (const auto& r : trace) {
      if (r.phase != phase || r.candidate_id != c.candidate_id) continue;
      seen = true;
      if (r.iteration == 0) {
        s.failed = r.status != "success";
      } else {
        ++s.iterations;
        if (r.verdict == "accepted") ++s.accepted;
        if (r.verdict == "rejected") ++s.rejected;
      }
      s.best_loss = r.incumbent_loss;
    }
    if (!seen) s.failed = phase == "warmup";
    return s;
  };
  if (!stage1.empty() && std::any_of(trace.begin(), trace.end(), [](const auto& r) { return r.phase == "warmup"; })) {
    PhaseSummary w{"warmup", {}, winner};
    for (const auto& c : stage1) w.candidates.push_back(summarize("warmup", c));
    out.push_back(std::move(w));
  }
  if (std::any_of(trace.begin(), trace.end(), [](const auto& r) { return r.phase == "optimization"; })) {
    PhaseSummary o{"optimization", {}, winner};
    for (const auto& c : stage1) {
      if (c.candidate_id == winner) o.candidates.push_back(summarize("optimization", c));
    }
    out.push_back(std::move(o));
  }
  return out;
}

FinalReport report_from_log(const std::vector<LogEntry>& entries) {
  const json* start = find_marker(entries, "run_start");
  const json* end = find_marker(entries, "run_end");
  if (!start || !end) throw Error(ErrorCode::SchemaViolation, "log has no run_start/run_end markers");
  FinalReport report;
  report.task_id = start->at("task_id").get<std::string>();
  report.bank_digest = start->at("bank_digest").get<std::string>();

  for (const auto& e : entries) {
    if (e.action != ActionKind::Model) continue;
    for (const auto& c : e.payload.at("candidates")) {
      report.stage1.push_back({c.at("candidate_id").get<std::string>(), c.at("model_id").get<std::string>()});
    }
    report.stage1_shortfall = e.payload.value("shortfall", false);
  }

  if (const json* wu = find_marker(entries, "warmup_end")) report.winner_candidate_id = wu->at("winner").get<std::string>();

  for (const auto& e : entries) {
    if (e.action != ActionKind::Logging) continue;
    const json& p = e.payload;
    IterationRecord r;
    r.phase = p.at("phase").get<std::string>();
    r.candidate_id = e.candidate_id;
    r.iteration = e.iteration;
    r.status = p.at("status").get<std::string>();
    r.candidate_loss = opt_double(p, "primary_loss");
    r.incumbent_loss = opt_double(p, "incumbent_loss");
    r.verdict = e.verdict ? std::string(to_string(*e.verdict)) : std::string{};
    r.candidate_digest = e.config_digest;
    r.incumbent_before = opt_string(p, "incumbent_before");
    r.incumbent_after = opt_string(p, "incumbent_after");
    r.debug_attempts = p.value("debug_attempts", 0);
    report.loss_trace.push_back(std::move(r));
  }
  sort_trace(report.loss_trace, report.stage1);

  report.success = end->at("success").get<bool>();
  if (!end->at("failure_phase").is_null()) report.failure_phase = end->at("failure_phase").get<std::string>();
  if (!end->at("failure_message").is_null()) report.failure_message = end->at("failure_message").get<std::string>();
  if (report.success) {
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
      if (it->action == ActionKind::Logging && it->candidate_id == report.winner_candidate_id &&
          it->verdict == Verdict::Accepted) {
        report.winning_config = candidate_from_json(it->payload.at("candidate"));
        report.final_metrics = it->metrics.value_or(std::map<std::string, double>{});
        break;
      }
    }
  }
  report.phases = summarize_phases(report.loss_trace, report.stage1, report.winner_candidate_id);
  if (end->contains("wall_clock")) {
    const json& w = end->at("wall_clock");
    report.wall_clock = {w.value("total_ms", std::int64_t{0}), w.value("stage1_ms", std::int64_t{0}),
                         w.value("warmup_ms", std::int64_t{0}), w.value("optimization_ms", std::int64_t{0})};
  }
  report.audit_head_hash = entries.empty() ? std::string(kZeroHash) : entries.back().entry_hash;
  return report;
}

std::string render_report_markdown(const FinalReport& report) {
  std::ostringstream os;
  os << "# Run report: " << report.task_id << "\n\n";
  os << "Result: " << (report.success ? "success" : "failure") << "\n";
  if (report.failure_phase) os << "Failed in: " << *report.failure_phase << " (" << report.failure_message.value_or("") << ")\n";
  os << "Winner: " << (report.winner_candidate_id.empty() ? "-" : report.winner_candidate_id) << "\n";
  os << "Bank digest: `" << report.bank_digest << "`\n";
  os << "Audit head: `" << report.audit_head_hash << "`\n\n";
  if (!report.final_metrics.empty()) {
    os << "## Final metrics\n\n| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : report.final_metrics) os << "| " << k << " | " << format_double(v) << " |\n";
    os << "\n";
  }
  os << "## Loss trace\n\n| phase | candidate | iteration | status | candidate loss | incumbent loss | verdict |\n";
  os << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : report.loss_trace) {
    os << "| " << r.phase << " | " << r.candidate_id << " | " << r.iteration << " | " << r.status << " | "
       << loss_text(r.candidate_loss) << " | " << loss_text(r.incumbent_loss) << " | " << r.verdict << " |\n";
  }
  return os.str();
}

}  // namespace tsflow
