#include "fixtures.hpp"

#include "tsflow/error.hpp"
#include "tsflow/hash.hpp"
#include "tsflow/synthetic.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

namespace fixtures {

using namespace tsflow;

std::filesystem::path source_dir() { return TSFLOW_SOURCE_DIR; }
std::filesystem::path stub_dir() { return source_dir() / "tests" / "fixtures" / "stubs"; }

const BankSet& starter_banks() {
  static const BankSet banks = load_banks(source_dir() / "banks");
  return banks;
}

std::vector<RawRecord> starter_records(const std::string& section) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(source_dir() / "banks" / section)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RawRecord> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    out.push_back({f.string(), nlohmann::json::parse(in)});
  }
  return out;
}

TaskSpec make_task(const TimeSeriesFrame& frame, TaskKind kind, WindowSpec window, std::vector<std::string> criteria,
                   std::string primary, std::string description, std::string id, double test_fraction) {
  TaskSpec t;
  t.id = std::move(id);
  t.kind = kind;
  t.description = std::move(description);
  t.dataset = std::make_shared<const DatasetSplit>(split_chronological(frame, window, test_fraction));
  t.criteria = std::move(criteria);
  t.primary_criterion = std::move(primary);
  return t;
}

TaskSpec ar2_task(std::uint64_t seed, std::size_t rows, std::size_t features, std::size_t p, std::size_t q) {
  Ar2Params a;
  a.rows = rows;
  a.features = features;
  a.seed = seed;
  return make_task(make_ar2(a), TaskKind::Forecasting, {p, q, 1}, {"rmse", "mae", "smape"}, "rmse",
                   kForecastDescription, "ar2-" + std::to_string(seed));
}

TaskSpec gaussian_task(std::uint64_t seed, std::size_t rows, std::size_t q, const Eigen::MatrixXd& cov) {
  const Eigen::Index d = cov.rows();
  const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), d);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    Eigen::VectorXd z(d);
    for (Eigen::Index j = 0; j < d; ++j) z(j) = n01(rng);
    x.row(t) = (l * z).transpose();
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < d; ++j) names.push_back("g" + std::to_string(j));
  return make_task(TimeSeriesFrame(x, names), TaskKind::Generation, {1, q, q},
                   {"covariance_score", "correlation_score", "marginal_score"}, "covariance_score",
                   "Generate synthetic multivariate Gaussian segments with matching covariance and correlation.",
                   "gauss-" + std::to_string(seed));
}

oracle::Rows to_rows(const Eigen::MatrixXd& m) {
  oracle::Rows out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

oracle::WindowList to_windows(const std::vector<Eigen::MatrixXd>& blocks) {
  oracle::WindowList out;
  for (const auto& b : blocks) out.push_back(to_rows(b));
  return out;
}

std::vector<double> flat(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("tsflow-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

RunResult FaultInjectingExecutor::run(const CandidateConfig& config, const TaskSpec& task) {
  for (const auto& d : config.directives) {
    if (d.kind == trigger_) {
      std::lock_guard lock(mutex_);
      ++injected_;
      RunResult r;
      r.status = RunStatus::TrainError;
      r.message = "training diverged: " + std::string(to_string(trigger_)) + " produced NaN gradients";
      r.stderr_tail = "Traceback: " + std::string(to_string(trigger_)) + " failed";
      return r;
    }
  }
  return inner_.run(config, task);
}

int FaultInjectingExecutor::injected() const {
  std::lock_guard lock(mutex_);
  return injected_;
}

std::vector<std::string> canonical_lines(const std::vector<LogEntry>& entries) {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(canonical_json(to_json(e)));
  return out;
}

Observed run_search(const TaskSpec& task, const BankSet& banks, PlannerBackend& planner, const PhaseConfig& phase,
                    Executor* executor, const std::filesystem::path& log_file) {
  ModelExecutor native(banks);
  std::unique_ptr<AuditLog> owned = log_file.empty() ? std::make_unique<AuditLog>() : std::make_unique<AuditLog>(log_file);
  AuditLog& log = *owned;
  log.set_clock([] { return std::string("2024-01-01T00:00:00.000Z"); });
  Observed obs;
  std::mutex mutex;
  SearchEnv env{task, banks, executor ? *executor : native, log, phase, PromptSet::defaults(), {}};
  env.hooks.on_context = [&](const DecisionContext& c) {
    std::lock_guard lock(mutex);
    obs.contexts.push_back(c);
  };
  env.hooks.on_decision = [&](const Decision& d) {
    std::lock_guard lock(mutex);
    obs.decisions.push_back(d);
  };
  env.hooks.on_iteration = [&](const IterationRecord& r) {
    std::lock_guard lock(mutex);
    obs.records.push_back(r);
  };
  const auto t0 = std::chrono::steady_clock::now();
  obs.report = run_full(env, planner);
  obs.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  obs.entries = log.snapshot();
  log.close();
  obs.lines = canonical_lines(obs.entries);
  return obs;
}

}  // namespace fixtures
