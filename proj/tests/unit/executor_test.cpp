#include "fixtures.hpp"
#include "oracles.hpp"

#include "tsflow/error.hpp"
#include "tsflow/executor.hpp"
#include "tsflow/subprocess.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace tsflow;

namespace {

ExternalBinding stub(const std::string& mode, std::int64_t timeout_ms = 20000, const std::string& arg = {}) {
  ExternalBinding b;
  b.command = {"python3", (fixtures::stub_dir() / "stub_executor.py").string(), mode};
  if (!arg.empty()) b.command.push_back(arg);
  b.timeout_ms = timeout_ms;
  return b;
}

CandidateConfig config_for(const std::string& model) {
  CandidateConfig c;
  c.model_id = model;
  c.hyperparams = fixtures::starter_banks().find_model(model)->defaults();
  c.seed = 1;
  return c;
}

const TaskSpec& small_task() {
  static const TaskSpec task = fixtures::ar2_task(4, 300, 2, 5, 2);
  return task;
}

}  // namespace

TEST(Subprocess, CapturesStdoutStderrAndExitCode) {
  const auto r = run_process({"sh", "-c", "cat; echo err >&2; exit 3"}, "hello");
  EXPECT_FALSE(r.spawn_error);
  EXPECT_EQ(r.stdout_text, "hello");
  EXPECT_EQ(r.stderr_tail, "err\n");
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Subprocess, TimeoutKillsTheChild) {
  ProcessOptions o;
  o.timeout = std::chrono::milliseconds(200);
  const auto start = std::chrono::steady_clock::now();
  const auto r = run_process({"sh", "-c", "sleep 5"}, "", o);
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}

TEST(Subprocess, StderrTailKeepsTheEnd) {
  ProcessOptions o;
  o.stderr_tail_bytes = 4;
  const auto r = run_process({"sh", "-c", "printf abcdefgh >&2"}, "", o);
  EXPECT_EQ(r.stderr_tail, "efgh");
}

TEST(Subprocess, MissingProgramIsASpawnError) {
  const auto r = run_process({"/nonexistent/program"}, "");
  EXPECT_TRUE(r.spawn_error.has_value() || r.exit_code != 0);
}

TEST(Native, NaiveLastMatchesTheOracle) {
  const RunResult r = run_native(config_for("naive_last"), *fixtures::starter_banks().find_model("naive_last"),
                                 small_task());
  ASSERT_TRUE(r.ok()) << r.message;
  const auto& ds = *small_task().dataset;
  EXPECT_NEAR(r.metrics.at("rmse"), oracle::naive_last_rmse(fixtures::to_rows(ds.test.values()), 5, 2, 1), 1e-12);
  EXPECT_EQ(r.primary_loss, r.metrics.at("rmse"));
}

TEST(Native, RunsAreDeterministic) {
  ModelExecutor exec(fixtures::starter_banks());
  for (const char* m : {"gd_linear", "exp_smoothing"}) {
    const RunResult a = exec.run(config_for(m), small_task());
    const RunResult b = exec.run(config_for(m), small_task());
    ASSERT_TRUE(a.ok()) << a.message;
    EXPECT_EQ(to_json(a), to_json(b));
  }
}

TEST(Native, GdLinearBeatsNaiveOnAr2) {
  ModelExecutor exec(fixtures::starter_banks());
  const TaskSpec task = fixtures::ar2_task(8, 1500, 2, 6, 1);
  CandidateConfig gd = config_for("gd_linear");
  gd.directives = {{DirectiveKind::NormalizeZscore, {}}};
  gd.hyperparams["epochs"] = std::int64_t{1500};
  gd.hyperparams["lr"] = 0.05;
  const RunResult a = exec.run(gd, task);
  const RunResult b = exec.run(config_for("naive_last"), task);
  ASSERT_TRUE(a.ok()) << a.message;
  EXPECT_LT(*a.primary_loss, *b.primary_loss);
}

TEST(Native, WrongTaskKindFails) {
  ModelExecutor exec(fixtures::starter_banks());
  const RunResult r = exec.run(config_for("gaussian_gen"), small_task());
  EXPECT_EQ(r.status, RunStatus::TrainError);
}

TEST(Native, DivergenceIsATrainError) {
  ModelExecutor exec(fixtures::starter_banks());
  CandidateConfig c = config_for("gd_linear");
  c.hyperparams["lr"] = 0.5;
  c.hyperparams["epochs"] = std::int64_t{5000};
  auto task = fixtures::ar2_task(4, 300, 2, 5, 2);
  const RunResult r = exec.run(c, task);
  if (!r.ok()) {
    EXPECT_EQ(r.status, RunStatus::TrainError);
    EXPECT_FALSE(r.message.empty());
  }
}

TEST(Native, GenerationRunsScoreEveryCriterion) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  const TaskSpec task = fixtures::gaussian_task(3, 800, 4, cov);
  ModelExecutor exec(fixtures::starter_banks());
  for (const char* m : {"gaussian_gen", "block_bootstrap_gen"}) {
    const RunResult r = exec.run(config_for(m), task);
    ASSERT_TRUE(r.ok()) << m << ": " << r.message;
    for (const auto& c : task.criteria) EXPECT_TRUE(r.metrics.count(c)) << c;
  }
}

TEST(ExecRequest, CarriesTaskDataAndConfig) {
  const auto req = make_exec_request(config_for("gd_linear"), small_task());
  EXPECT_EQ(req["v"], 1);
  EXPECT_EQ(req["task"]["window"]["p"], 5);
  EXPECT_EQ(req["task"]["primary_criterion"], "rmse");
  EXPECT_EQ(req["config"]["model_id"], "gd_linear");
  EXPECT_EQ(req["data"]["test"]["values"].size(), small_task().dataset->test.rows());
}

TEST(External, MetricsResponse) {
  const RunResult r = run_external(config_for("gd_linear"), small_task(), stub("metrics"));
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_EQ(r.metrics.at("rmse"), 1.5);
  EXPECT_EQ(r.primary_loss, 1.5);
}

TEST(External, PredictionsAreScoredByTheEngine) {
  const RunResult r = run_external(config_for("gd_linear"), small_task(), stub("predictions"));
  ASSERT_TRUE(r.ok()) << r.message;
  const auto& ds = *small_task().dataset;
  EXPECT_NEAR(r.metrics.at("rmse"), oracle::naive_last_rmse(fixtures::to_rows(ds.test.values()), 5, 2, 1), 1e-9);
}

TEST(External, TimeoutIsReported) {
  const RunResult r = run_external(config_for("gd_linear"), small_task(), stub("sleep", 300, "5"));
  EXPECT_EQ(r.status, RunStatus::Timeout);
}

TEST(External, NonZeroExitCarriesStderr) {
  const RunResult r = run_external(config_for("gd_linear"), small_task(), stub("fail"));
  EXPECT_EQ(r.status, RunStatus::TrainError);
  EXPECT_NE(r.message.find("boom"), std::string::npos);
  EXPECT_NE(summarize(r).find("boom"), std::string::npos);
}

TEST(External, MalformedResponsesAreTrainErrors) {
  for (const char* mode : {"garbage", "extra", "error"}) {
    const RunResult r = run_external(config_for("gd_linear"), small_task(), stub(mode));
    EXPECT_EQ(r.status, RunStatus::TrainError) << mode;
    EXPECT_FALSE(r.message.empty()) << mode;
  }
  EXPECT_NE(run_external(config_for("gd_linear"), small_task(), stub("error")).message.find("model refused"),
            std::string::npos);
}

TEST(External, RequestReachesTheChildIntact) {
  fixtures::TempDir dir;
  const auto path = dir / "req.json";
  CandidateConfig c = config_for("gd_linear");
  c.freeform_patch = "use a bigger model";
  ASSERT_TRUE(run_external(c, small_task(), stub("capture", 20000, path.string())).ok());
  std::ifstream in(path);
  const auto got = nlohmann::json::parse(in);
  EXPECT_EQ(got, make_exec_request(c, small_task()));
}

TEST(ExecResponse, InterpretationRules) {
  const auto& t = small_task();
  EXPECT_EQ(interpret_exec_response(R"({"v":2,"status":"success","metrics":{}})", t, {}).status, RunStatus::TrainError);
  EXPECT_EQ(interpret_exec_response(R"({"v":1,"status":"success","metrics":{"rmse":1}})", t, {}).status,
            RunStatus::TrainError);  // mae and smape missing
  EXPECT_TRUE(interpret_exec_response(R"({"v":1,"status":"success","metrics":{"rmse":1,"mae":2,"smape":3}})", t, {}).ok());
  EXPECT_EQ(interpret_exec_response(R"({"v":1,"status":"success"})", t, {}).status, RunStatus::TrainError);
}

TEST(RunResult, JsonRoundTripDropsVolatileFields) {
  RunResult r;
  r.status = RunStatus::Success;
  r.metrics = {{"rmse", 0.5}};
  r.primary_loss = 0.5;
  r.duration_ms = 99;
  r.stderr_tail = "noise";
  const RunResult back = run_result_from_json(to_json(r));
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(back.primary_loss, r.primary_loss);
  EXPECT_EQ(back.duration_ms, 0);
  EXPECT_FALSE(to_json(r).contains("duration_ms"));
}
