#include "tsflow/audit.hpp"
#include "tsflow/metrics.hpp"
#include "tsflow/native_models.hpp"
#include "tsflow/retrieval.hpp"
#include "tsflow/synthetic.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace tsflow;

namespace {

std::vector<Eigen::MatrixXd> segments(std::size_t n, std::size_t q, std::size_t d, std::uint64_t seed) {
  return make_segments(make_gaussian({n * q, d, 0.0, 1.0, seed}), q, q);
}

BankSet synthetic_banks(std::size_t cases) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> words = {"daily", "hourly", "stock", "energy", "load", "trend", "seasonal",
                                          "volatility", "sensor", "traffic", "returns", "macro", "weekly"};
  BankSet b;
  for (std::size_t i = 0; i < cases; ++i) {
    CaseRecord c;
    c.id = "case-" + std::to_string(i);
    for (int w = 0; w < 12; ++w) c.description += words[rng() % words.size()] + " ";
    c.recommended_model = i % 2 ? "gd_linear" : "naive_last";
    b.cases.push_back(std::move(c));
  }
  return b;
}

}  // namespace

static void BM_Rmse(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(n, 8), b = Eigen::MatrixXd::Random(n, 8);
  for (auto _ : state) benchmark::DoNotOptimize(rmse(a, b).value);
}
BENCHMARK(BM_Rmse)->Arg(1000)->Arg(100000);

static void BM_CovarianceScore(benchmark::State& state) {
  const auto real = segments(static_cast<std::size_t>(state.range(0)), 24, 6, 1);
  const auto fake = segments(static_cast<std::size_t>(state.range(0)), 24, 6, 2);
  for (auto _ : state) benchmark::DoNotOptimize(covariance_score(real, fake).value);
}
BENCHMARK(BM_CovarianceScore)->Arg(100)->Arg(1000);

static void BM_AutocorrelationScore(benchmark::State& state) {
  const auto real = segments(static_cast<std::size_t>(state.range(0)), 24, 6, 1);
  const auto fake = segments(static_cast<std::size_t>(state.range(0)), 24, 6, 2);
  for (auto _ : state) benchmark::DoNotOptimize(autocorrelation_score(real, fake).value);
}
BENCHMARK(BM_AutocorrelationScore)->Arg(100)->Arg(1000);

static void BM_Retrieve(benchmark::State& state) {
  const BankSet banks = synthetic_banks(static_cast<std::size_t>(state.range(0)));
  const CaseIndex index = index_cases(banks, TaskKind::Forecasting);
  for (auto _ : state) benchmark::DoNotOptimize(retrieve(index, "hourly energy load with weekly seasonal trend", 5));
}
BENCHMARK(BM_Retrieve)->Arg(100)->Arg(10000);

static void BM_AuditAppend(benchmark::State& state) {
  AuditLog log;
  EntryFields f;
  f.candidate_id = "c0";
  f.action = ActionKind::Logging;
  f.payload = {{"status", "success"}, {"primary_loss", 1.25}, {"hyperparams", {{"lr", 0.01}, {"epochs", 300}}}};
  f.rationale = "candidate loss 1.25 < incumbent 1.5; candidate becomes the incumbent.";
  for (auto _ : state) benchmark::DoNotOptimize(log.append(f));
}
BENCHMARK(BM_AuditAppend);

static void BM_GdLinearFit(benchmark::State& state) {
  const auto windows = make_windows(make_ar2({2000, 3, 0.5, 0.3, 1.0, 42}), {10, 2, 1});
  GdLinearOptions o;
  o.epochs = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(fit_gd_linear(windows, o).weights(0, 0));
}
BENCHMARK(BM_GdLinearFit)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
