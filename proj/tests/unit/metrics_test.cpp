#include "fixtures.hpp"
#include "oracles.hpp"

#include "tsflow/error.hpp"
#include "tsflow/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tsflow;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double shift = 0.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n01(rng) + shift;
  return m;
}

std::vector<Eigen::MatrixXd> random_windows(std::mt19937_64& rng, int n, int q, int d, double scale = 1.0) {
  std::vector<Eigen::MatrixXd> out;
  for (int i = 0; i < n; ++i) out.push_back(random_matrix(rng, q, d) * scale);
  return out;
}

}  // namespace

TEST(PointMetrics, HandComputedValues) {
  Eigen::MatrixXd p(2, 2), t(2, 2);
  p << 1, 2, 3, 4;
  t << 2, 2, 1, 8;
  EXPECT_DOUBLE_EQ(mse(p, t).value, (1.0 + 0.0 + 4.0 + 16.0) / 4.0);
  EXPECT_DOUBLE_EQ(rmse(p, t).value, std::sqrt(21.0 / 4.0));
  EXPECT_DOUBLE_EQ(mae(p, t).value, 7.0 / 4.0);
  EXPECT_DOUBLE_EQ(mape(p, t).value, 100.0 * (0.5 + 0.0 + 2.0 + 0.5) / 4.0);
  EXPECT_NEAR(smape(p, t).value, 100.0 * (2.0 / 3.0 + 0.0 + 1.0 + 8.0 / 12.0) / 4.0, 1e-12);
}

TEST(PointMetrics, MatchOracleOnRandomShapes) {
  std::mt19937_64 rng(5);
  for (int it = 0; it < 50; ++it) {
    const int r = 1 + static_cast<int>(rng() % 12), c = 1 + static_cast<int>(rng() % 4);
    const auto p = random_matrix(rng, r, c), t = random_matrix(rng, r, c, 3.0);
    EXPECT_NEAR(rmse(p, t).value, oracle::rmse(fixtures::flat(p), fixtures::flat(t)), 1e-12);
    EXPECT_NEAR(mae(p, t).value, oracle::mae(fixtures::flat(p), fixtures::flat(t)), 1e-12);
  }
}

TEST(PointMetrics, MapeRejectsZeroTruth) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(2, 1), t(2, 1);
  t << 1.0, 0.0;
  try {
    mape(p, t);
    FAIL() << "expected MapeDenominatorZero";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MapeDenominatorZero);
  }
}

TEST(PointMetrics, SmapeSkipsDoubleZeroCells) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2, 1), t = Eigen::MatrixXd::Zero(2, 1);
  p(1, 0) = 1.0;
  t(1, 0) = 3.0;
  EXPECT_DOUBLE_EQ(smape(p, t).value, 100.0 * (0.0 + 1.0) / 2.0);
}

TEST(PointMetrics, ShapeMismatchThrows) {
  EXPECT_THROW(rmse(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 2)), Error);
}

TEST(PointMetrics, PropertiesHold) {
  std::mt19937_64 rng(9);
  for (int it = 0; it < 30; ++it) {
    const auto p = random_matrix(rng, 6, 3), t = random_matrix(rng, 6, 3, 2.0);
    EXPECT_GE(rmse(p, t).value, mae(p, t).value - 1e-12);
    EXPECT_DOUBLE_EQ(rmse(t, t).value, 0.0);
    EXPECT_DOUBLE_EQ(rmse(p, t).value, rmse(t, p).value);
    const double s = smape(p, t).value;
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 200.0 + 1e-9);
  }
}

TEST(RiskMetrics, VarAndEsOnKnownSample) {
  const std::vector<double> r = {-0.05, 0.01, -0.02, 0.03, -0.01, 0.02, 0.0, -0.03, 0.04, 0.05};
  // alpha = 0.2 over 10 returns: the 2nd smallest return is -0.03.
  EXPECT_DOUBLE_EQ(value_at_risk(r, {0.2}), 0.03);
  EXPECT_DOUBLE_EQ(expected_shortfall(r, {0.2}), 0.04);
  EXPECT_DOUBLE_EQ(value_at_risk(r, {0.1}), 0.05);
  // Fewer than one return in the tail is refused.
  EXPECT_THROW(value_at_risk(r, {0.05}), Error);
}

TEST(RiskMetrics, EsDominatesVar) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.02);
  for (int it = 0; it < 30; ++it) {
    std::vector<double> r(100);
    for (auto& x : r) x = n(rng);
    for (double a : {0.01, 0.05, 0.1, 0.5}) {
      EXPECT_GE(expected_shortfall(r, {a}), value_at_risk(r, {a}) - 1e-15);
      EXPECT_NEAR(value_at_risk(r, {a}), oracle::var(r, a), 1e-15);
    }
  }
}

TEST(RiskMetrics, SharpeMatchesOracleAndRejectsDegenerate) {
  const std::vector<double> r = {0.01, 0.02, -0.01, 0.03};
  EXPECT_NEAR(sharpe(r), oracle::sharpe(r), 1e-14);
  const std::vector<double> flat = {0.01, 0.01, 0.01};
  EXPECT_THROW(sharpe(flat), Error);
  const std::vector<double> one = {0.01};
  EXPECT_THROW(sharpe(one), Error);
}

TEST(RiskMetrics, ReturnsFromPrices) {
  const std::vector<double> prices = {100.0, 110.0, 99.0};
  const auto r = returns_from_prices(prices);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0], 0.1, 1e-15);
  EXPECT_NEAR(r[1], -0.1, 1e-15);
  const std::vector<double> bad = {1.0, 0.0};
  EXPECT_THROW(returns_from_prices(bad), Error);
}

TEST(GenerationMetrics, IdenticalSetsScoreZero) {
  std::mt19937_64 rng(1);
  const auto real = random_windows(rng, 12, 6, 3);
  EXPECT_EQ(marginal_score(real, real).value, 0.0);
  EXPECT_EQ(covariance_score(real, real).value, 0.0);
  EXPECT_EQ(correlation_score(real, real).value, 0.0);
  EXPECT_EQ(autocorrelation_score(real, real).value, 0.0);
}

TEST(GenerationMetrics, MatchOracle) {
  std::mt19937_64 rng(12);
  for (int it = 0; it < 20; ++it) {
    const auto real = random_windows(rng, 10, 5, 3);
    const auto fake = random_windows(rng, 7, 5, 3, 1.5);
    const auto wr = fixtures::to_windows(real), wf = fixtures::to_windows(fake);
    EXPECT_NEAR(marginal_score(real, fake, 20).value, oracle::marginal(wr, wf, 20), 1e-12);
    EXPECT_NEAR(covariance_score(real, fake).value, oracle::covariance(wr, wf), 1e-12);
    EXPECT_NEAR(correlation_score(real, fake).value, oracle::correlation(wr, wf), 1e-12);
    EXPECT_NEAR(autocorrelation_score(real, fake).value, oracle::autocorrelation(wr, wf, 4), 1e-12);
  }
}

TEST(GenerationMetrics, ScoresGrowWithDistortion) {
  std::mt19937_64 rng(4);
  const auto real = random_windows(rng, 40, 4, 2);
  const auto near = random_windows(rng, 40, 4, 2, 1.1);
  const auto far = random_windows(rng, 40, 4, 2, 3.0);
  EXPECT_LT(covariance_score(real, near).value, covariance_score(real, far).value);
  EXPECT_LT(marginal_score(real, near).value, marginal_score(real, far).value);
}

TEST(GenerationMetrics, Errors) {
  std::mt19937_64 rng(2);
  const auto a = random_windows(rng, 3, 4, 2);
  const auto b = random_windows(rng, 3, 4, 3);
  EXPECT_THROW(covariance_score(a, b), Error);
  EXPECT_THROW(covariance_score(a, std::vector<Eigen::MatrixXd>{}), Error);
  EXPECT_THROW(autocorrelation_score(a, a, 4), Error);
  EXPECT_THROW(marginal_score(a, a, 0), Error);
}

TEST(GenerationMetrics, CorrelationIsZeroForOneFeature) {
  std::mt19937_64 rng(8);
  EXPECT_EQ(correlation_score(random_windows(rng, 5, 3, 1), random_windows(rng, 5, 3, 1, 2.0)).value, 0.0);
}

TEST(MetricRegistry, EveryBankMetricIsImplemented) {
  for (const auto& m : fixtures::starter_banks().metrics) EXPECT_NE(find_metric_info(m.id), nullptr) << m.id;
  EXPECT_EQ(find_metric_info("nope"), nullptr);
}

TEST(MetricRegistry, EvaluateForecastAgreesWithDirectCalls) {
  std::mt19937_64 rng(21);
  std::vector<Eigen::MatrixXd> p, t;
  for (int i = 0; i < 8; ++i) {
    p.push_back(random_matrix(rng, 2, 2, 5.0));
    t.push_back(random_matrix(rng, 2, 2, 5.0));
  }
  const std::vector<std::string> ids = {"rmse", "mae"};
  const auto got = evaluate_forecast(ids, p, t);
  EXPECT_NEAR(got.at("rmse"), rmse(stack_rows(p), stack_rows(t)).value, 1e-15);
  EXPECT_NEAR(got.at("mae"), mae(stack_rows(p), stack_rows(t)).value, 1e-15);
}
