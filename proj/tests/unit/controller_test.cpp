#include "fixtures.hpp"

#include "tsflow/backends.hpp"
#include "tsflow/controller.hpp"
#include "tsflow/error.hpp"
#include "tsflow/report.hpp"

#include <gtest/gtest.h>

using namespace tsflow;

namespace {

PhaseConfig small_phase(std::uint64_t seed = 1) {
  PhaseConfig p;
  p.k = 2;
  p.warmup_iters = 2;
  p.opt_iters = 3;
  p.debug_retries = 1;
  p.seed = seed;
  return p;
}

const TaskSpec& small_task() {
  static const TaskSpec task = fixtures::ar2_task(6, 400, 2, 5, 1);
  return task;
}

/// Always answers with text that is not a decision.
class BrokenBackend : public PlannerBackend {
 public:
  std::string id() const override { return "broken"; }
  std::string respond(const DecisionContext&, std::span<const std::string>) override { return "I refuse"; }
  std::unique_ptr<PlannerBackend> fork(std::uint64_t) const override { return std::make_unique<BrokenBackend>(); }
};

/// Fails every run.
class FailingExecutor : public Executor {
 public:
  RunResult run(const CandidateConfig&, const TaskSpec&) override {
    RunResult r;
    r.status = RunStatus::TrainError;
    r.message = "no GPU";
    return r;
  }
};

}  // namespace

TEST(PhaseConfig, ValidationAndBudget) {
  PhaseConfig p;
  EXPECT_EQ(p.t_max(), 3 * 2 + 10);
  p.k = 0;
  EXPECT_THROW(p.validate(), Error);
  p = PhaseConfig{};
  p.debug_retries = -1;
  EXPECT_THROW(p.validate(), Error);
}

TEST(Controller, TraceHasOneRecordPerIteration) {
  ScriptedBackend planner(fixtures::starter_banks());
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase());
  ASSERT_TRUE(o.report.success) << o.report.failure_message.value_or("");
  const auto& s1 = o.report.stage1;
  ASSERT_EQ(s1.size(), 2u);
  // k warm starts, k * W warm-up iterations, O optimization iterations.
  EXPECT_EQ(o.report.loss_trace.size(), 2u + 2u * 2u + 3u);
  EXPECT_EQ(o.records.size(), o.report.loss_trace.size());
  int opt = 0;
  for (const auto& r : o.report.loss_trace) opt += r.phase == "optimization";
  EXPECT_EQ(opt, 3);
}

TEST(Controller, WinnerHasTheLowestWarmupLoss) {
  ScriptedBackend planner(fixtures::starter_banks());
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase());
  ASSERT_TRUE(o.report.success);
  std::map<std::string, double> best;
  for (const auto& r : o.report.loss_trace) {
    if (r.phase != "warmup" || !r.incumbent_loss) continue;
    best[r.candidate_id] = *r.incumbent_loss;
  }
  const auto winner = std::min_element(best.begin(), best.end(), [](auto& a, auto& b) {
    return a.second < b.second || (a.second == b.second && a.first < b.first);
  });
  EXPECT_EQ(o.report.winner_candidate_id, winner->first);
}

TEST(Controller, ParallelismDoesNotChangeTheResult) {
  PhaseConfig serial = small_phase(4), parallel = small_phase(4);
  serial.parallel = 1;
  parallel.parallel = 2;
  ScriptedBackend p1(fixtures::starter_banks()), p2(fixtures::starter_banks());
  RandomBackend r1(fixtures::starter_banks(), 9), r2(fixtures::starter_banks(), 9);
  EXPECT_EQ(report_digest(fixtures::run_search(small_task(), fixtures::starter_banks(), p1, serial).report),
            report_digest(fixtures::run_search(small_task(), fixtures::starter_banks(), p2, parallel).report));
  EXPECT_EQ(report_digest(fixtures::run_search(small_task(), fixtures::starter_banks(), r1, serial).report),
            report_digest(fixtures::run_search(small_task(), fixtures::starter_banks(), r2, parallel).report));
}

TEST(Controller, UnusablePlannerFallsBackToNoops) {
  BrokenBackend planner;
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase());
  ASSERT_TRUE(o.report.success) << o.report.failure_message.value_or("");
  for (const auto& r : o.report.loss_trace) {
    if (r.iteration > 0) EXPECT_EQ(r.verdict, "rejected");  // nothing changes, so nothing improves
  }
  bool saw_fallback = false;
  for (const auto& e : o.entries) saw_fallback = saw_fallback || e.payload.value("fallback", false);
  EXPECT_TRUE(saw_fallback);
}

TEST(Controller, AllCandidatesFailingIsAReportedFailure) {
  ScriptedBackend planner(fixtures::starter_banks());
  FailingExecutor exec;
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase(), &exec);
  EXPECT_FALSE(o.report.success);
  EXPECT_EQ(o.report.failure_phase, "warmup");
  EXPECT_NE(o.report.failure_message->find("AllCandidatesFailed"), std::string::npos);
  EXPECT_EQ(o.entries.back().payload.value("marker", ""), "run_end");
}

TEST(Controller, DebugFixStopsAtTheFirstSuccess) {
  ModelExecutor native(fixtures::starter_banks());
  fixtures::FaultInjectingExecutor faulty(native, DirectiveKind::AugmentJitter);
  ScriptedBackend planner(fixtures::starter_banks());  // repairs by dropping the named directive
  PhaseConfig phase = small_phase();
  phase.debug_retries = 3;
  phase.warmup_iters = 4;
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, phase, &faulty);
  ASSERT_TRUE(o.report.success);
  for (const auto& r : o.report.loss_trace) {
    EXPECT_LE(r.debug_attempts, 3);
    if (r.debug_attempts > 0) {
      EXPECT_EQ(r.debug_attempts, 1) << "the scripted repair should fix the run on the first attempt";
      EXPECT_EQ(r.status, "success");
    }
  }
}

TEST(Controller, EveryLogEntryIsInTheVerifiedChain) {
  fixtures::TempDir dir;
  ScriptedBackend planner(fixtures::starter_banks());
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase(), nullptr,
                                      dir / "log");
  const auto v = verify_chain(dir / "log");
  EXPECT_TRUE(v.ok) << v.reason;
  EXPECT_EQ(v.entries, o.entries.size());
  EXPECT_EQ(o.entries.front().payload.value("marker", ""), "run_start");
}

TEST(Report, RebuildsFromTheLogAlone) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RandomBackend planner(fixtures::starter_banks(), seed);
    const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase(seed));
    const FinalReport rebuilt = report_from_log(o.entries);
    EXPECT_EQ(to_json(rebuilt, false), to_json(o.report, false)) << "seed " << seed;
    EXPECT_EQ(rebuilt.audit_head_hash, o.entries.back().entry_hash);
  }
}

TEST(Report, FailedRunsRebuildToo) {
  ScriptedBackend planner(fixtures::starter_banks());
  FailingExecutor exec;
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase(), &exec);
  EXPECT_EQ(to_json(report_from_log(o.entries), false), to_json(o.report, false));
}

TEST(Report, DigestIgnoresVolatileFields) {
  ScriptedBackend planner(fixtures::starter_banks());
  FinalReport r = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase()).report;
  const std::string d = report_digest(r);
  r.wall_clock.total_ms += 1000;
  r.audit_head_hash = "x";
  EXPECT_EQ(report_digest(r), d);
  r.final_metrics["rmse"] += 1e-12;
  EXPECT_NE(report_digest(r), d);
}

TEST(Report, IterationRecordsRoundTrip) {
  IterationRecord r{"warmup", "c0", 3, "success", 1.5, 1.25, "rejected", "a", "b", "b", 1};
  EXPECT_EQ(iteration_record_from_json(to_json(r)), r);
}

TEST(Report, SummariesCountVerdicts) {
  std::vector<IterationRecord> t = {
      {"warmup", "c0", 0, "success", 2.0, 2.0, "accepted", "a", "", "a", 0},
      {"warmup", "c0", 1, "success", 1.0, 1.0, "accepted", "b", "a", "b", 0},
      {"warmup", "c0", 2, "train_error", std::nullopt, 1.0, "rejected", "c", "b", "b", 1},
      {"warmup", "c1", 0, "train_error", std::nullopt, std::nullopt, "rejected", "d", "", "", 0},
  };
  const std::vector<StageOneCandidate> s1 = {{"c0", "gd_linear"}, {"c1", "naive_last"}};
  const auto phases = summarize_phases(t, s1, "c0");
  ASSERT_FALSE(phases.empty());
  const auto& c0 = phases[0].candidates[0];
  EXPECT_EQ(c0.iterations, 2);
  EXPECT_EQ(c0.accepted, 1);
  EXPECT_EQ(c0.rejected, 1);
  EXPECT_EQ(c0.best_loss, 1.0);
  EXPECT_TRUE(phases[0].candidates[1].failed);
}

TEST(Report, MarkdownMentionsTheWinner) {
  ScriptedBackend planner(fixtures::starter_banks());
  const auto o = fixtures::run_search(small_task(), fixtures::starter_banks(), planner, small_phase());
  const std::string md = render_report_markdown(o.report);
  EXPECT_NE(md.find(o.report.winner_candidate_id), std::string::npos);
  EXPECT_NE(md.find("rmse"), std::string::npos);
}
