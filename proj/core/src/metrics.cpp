#include "tsflow/metrics.hpp"

#include "tsflow/error.hpp"

#include <algorithm>
#include <cmath>

namespace tsflow {

namespace {

void check_pair(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                                              " vs " + std::to_string(truth.rows()) + "x" +
                                              std::to_string(truth.cols()));
  }
  if (pred.size() == 0) throw Error(ErrorCode::EmptyInput, "no cells to score");
}

double count(const Eigen::MatrixXd& m) { return static_cast<double>(m.size()); }

void check_sets(WindowSet real, WindowSet fake) {
  if (real.empty() || fake.empty()) throw Error(ErrorCode::EmptySet, "real and fake sets must be nonempty");
  const auto rows = real.front().rows();
  const auto cols = real.front().cols();
  if (rows < 1 || cols < 1) throw Error(ErrorCode::EmptySet, "windows must be nonempty");
  auto same = [&](const Eigen::MatrixXd& w) { return w.rows() == rows && w.cols() == cols; };
  if (!std::all_of(real.begin(), real.end(), same) || !std::all_of(fake.begin(), fake.end(), same)) {
    throw Error(ErrorCode::DimensionMismatch, "all windows must share q and d");
  }
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::size_t tail_count(std::size_t n, const RiskParams& params) {
  if (!(params.alpha > 0.0 && params.alpha <= 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must be in (0, 0.5]");
  }
  const double scaled = params.alpha * static_cast<double>(n);
  // Guards products like 0.1 * 30 = 3.0000000000000004.
  if (scaled < 1.0 - 1e-9) {
    throw Error(ErrorCode::TooShort, "alpha * N = " + std::to_string(scaled) + " < 1");
  }
  return static_cast<std::size_t>(std::ceil(scaled - 1e-9));
}

double quantile_threshold(std::span<const double> returns, const RiskParams& params) {
  if (returns.empty()) throw Error(ErrorCode::TooShort, "no returns");
  const std::size_t m = tail_count(returns.size(), params);
  std::vector<double> sorted(returns.begin(), returns.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m - 1), sorted.end());
  return sorted[m - 1];
}

/// Rows of all windows stacked: (N * q) x d.
Eigen::MatrixXd pooled(WindowSet set) { return stack_rows(set); }

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw Error(ErrorCode::TooShort, "covariance needs at least two rows");
  const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
}

Eigen::MatrixXd pearson(const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd cov = sample_cov(rows);
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 0.0)) throw Error(ErrorCode::DegenerateFeature, "feature " + std::to_string(j) + " has zero variance");
  }
  Eigen::MatrixXd corr = cov;
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    for (Eigen::Index j = 0; j < corr.cols(); ++j) corr(i, j) = cov(i, j) / (sd(i) * sd(j));
  }
  return corr;
}

/// Mean over windows of the sample ACF of feature j at `lag`; zero-variance windows contribute 0.
double mean_acf(WindowSet set, Eigen::Index feature, Eigen::Index lag) {
  double total = 0.0;
  for (const auto& w : set) {
    const auto x = w.col(feature);
    const double m = x.mean();
    double denom = 0.0;
    for (Eigen::Index t = 0; t < x.size(); ++t) denom += (x(t) - m) * (x(t) - m);
    if (!(denom > 0.0)) continue;
    double num = 0.0;
    for (Eigen::Index t = 0; t + lag < x.size(); ++t) num += (x(t) - m) * (x(t + lag) - m);
    total += num / denom;
  }
  return total / static_cast<double>(set.size());
}

MetricValue per_feature_mean(std::string id, std::vector<double> detail) {
  double s = 0.0;
  for (double v : detail) s += v;
  return MetricValue{std::move(id), s / static_cast<double>(detail.size()), std::move(detail)};
}

}  // namespace

Eigen::MatrixXd stack_rows(std::span<const Eigen::MatrixXd> blocks) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.rows();
  const Eigen::Index cols = blocks.empty() ? 0 : blocks.front().cols();
  Eigen::MatrixXd out(total, cols);
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw Error(ErrorCode::DimensionMismatch, "blocks differ in width");
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

MetricValue mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_pair(pred, truth);
  return {"mse", (pred - truth).squaredNorm() / count(pred), {}};
}

MetricValue rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_pair(pred, truth);
  return {"rmse", std::sqrt((pred - truth).squaredNorm() / count(pred)), {}};
}

MetricValue mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_pair(pred, truth);
  return {"mae", (pred - truth).cwiseAbs().sum() / count(pred), {}};
}

MetricValue mape(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_pair(pred, truth);
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double a = truth.data()[i];
    if (std::abs(a) < 1e-8) throw Error(ErrorCode::MapeDenominatorZero, "truth cell " + std::to_string(i) + " ~ 0");
    total += std::abs(pred.data()[i] - a) / std::abs(a);
  }
  return {"mape", 100.0 * total / count(pred), {}};
}

MetricValue smape(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_pair(pred, truth);
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double f = pred.data()[i];
    const double a = truth.data()[i];
    const double denom = std::abs(f) + std::abs(a);
    if (denom < 1e-12) continue;
    total += 2.0 * std::abs(f - a) / denom;
  }
  return {"smape", 100.0 * total / count(pred), {}};
}

std::vector<double> returns_from_prices(std::span<const double> prices) {
  if (prices.size() < 2) throw Error(ErrorCode::TooShort, "need at least two prices");
  std::vector<double> out;
  out.reserve(prices.size() - 1);
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (!(prices[i] > 0.0)) throw Error(ErrorCode::NonPositivePrice, "price at " + std::to_string(i));
    if (i > 0) out.push_back(prices[i] / prices[i - 1] - 1.0);
  }
  return out;
}

double sharpe(std::span<const double> returns) {
  if (returns.size() < 2) throw Error(ErrorCode::TooShort, "sharpe needs at least two returns");
  const double m = mean_of(returns);
  double ss = 0.0;
  for (double r : returns) ss += (r - m) * (r - m);
  const double sd = std::sqrt(ss / static_cast<double>(returns.size() - 1));
  if (sd <= 1e-15 * std::max(1.0, std::abs(m))) throw Error(ErrorCode::ZeroVolatility, "returns have zero volatility");
  return m / sd;
}

double value_at_risk(std::span<const double> returns, const RiskParams& params) {
  return -quantile_threshold(returns, params);
}

double expected_shortfall(std::span<const double> returns, const RiskParams& params) {
  const double q = quantile_threshold(returns, params);
  double total = 0.0;
  std::size_t n = 0;
  for (double r : returns) {
    if (r <= q) {
      total += r;
      ++n;
    }
  }
  return -total / static_cast<double>(n);
}

MetricValue metric_difference(RiskMetric metric, std::span<const double> pred_prices,
                              std::span<const double> true_prices, const RiskParams& params) {
  const auto rp = returns_from_prices(pred_prices);
  const auto rt = returns_from_prices(true_prices);
  auto eval = [&](std::span<const double> r) {
    switch (metric) {
      case RiskMetric::Sharpe: return sharpe(r);
      case RiskMetric::VaR: return value_at_risk(r, params);
      case RiskMetric::ES: return expected_shortfall(r, params);
    }
    return 0.0;
  };
  const char* id = metric == RiskMetric::Sharpe ? "sharpe_diff" : metric == RiskMetric::VaR ? "var_diff" : "es_diff";
  return {id, std::abs(eval(rp) - eval(rt)), {}};
}

MetricValue marginal_score(WindowSet real, WindowSet fake, int bins) {
  check_sets(real, fake);
  if (bins < 1) throw Error(ErrorCode::InvalidArgument, "bins must be >= 1");
  const Eigen::MatrixXd r = pooled(real);
  const Eigen::MatrixXd f = pooled(fake);
  std::vector<double> detail;
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    const double lo = std::min(r.col(j).minCoeff(), f.col(j).minCoeff());
    const double hi = std::max(r.col(j).maxCoeff(), f.col(j).maxCoeff());
    const double width = (hi - lo) / bins;
    auto histogram = [&](const Eigen::MatrixXd& m) {
      Eigen::VectorXd h = Eigen::VectorXd::Zero(bins);
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        int b = width > 0.0 ? static_cast<int>(std::floor((m(i, j) - lo) / width)) : 0;
        h(std::clamp(b, 0, bins - 1)) += 1.0;
      }
      return Eigen::VectorXd(h / static_cast<double>(m.rows()));
    };
    detail.push_back((histogram(r) - histogram(f)).norm());
  }
  return per_feature_mean("marginal_score", std::move(detail));
}

MetricValue correlation_score(WindowSet real, WindowSet fake) {
  check_sets(real, fake);
  if (real.front().cols() < 2) return {"correlation_score", 0.0, {}};
  return {"correlation_score", (pearson(pooled(real)) - pearson(pooled(fake))).norm(), {}};
}

MetricValue covariance_score(WindowSet real, WindowSet fake) {
  check_sets(real, fake);
  return {"covariance_score", (sample_cov(pooled(real)) - sample_cov(pooled(fake))).norm(), {}};
}

MetricValue autocorrelation_score(WindowSet real, WindowSet fake, std::optional<int> max_lag) {
  check_sets(real, fake);
  const auto q = static_cast<int>(real.front().rows());
  const int lags = max_lag.value_or(q - 1);
  if (q < 2 || lags < 1 || lags > q - 1) {
    throw Error(ErrorCode::LagOutOfRange, "max_lag " + std::to_string(lags) + " with q=" + std::to_string(q));
  }
  std::vector<double> detail;
  for (Eigen::Index j = 0; j < real.front().cols(); ++j) {
    double ss = 0.0;
    for (int lag = 1; lag <= lags; ++lag) {
      const double diff = mean_acf(real, j, lag) - mean_acf(fake, j, lag);
      ss += diff * diff;
    }
    detail.push_back(std::sqrt(ss));
  }
  return per_feature_mean("autocorrelation_score", std::move(detail));
}

const std::vector<MetricInfo>& implemented_metrics() {
  static const std::vector<MetricInfo> metrics{
      {"mse", true, false, "mean squared error over all forecast cells"},
      {"rmse", true, false, "root mean squared error over all forecast cells"},
      {"mae", true, false, "mean absolute error over all forecast cells"},
      {"mape", true, false, "mean absolute percentage error (percent)"},
      {"smape", true, false, "symmetric MAPE on the 0-200 scale"},
      {"sharpe_diff", true, false, "absolute Sharpe ratio difference of forecast-implied vs true returns"},
      {"var_diff", true, false, "absolute historical VaR difference of forecast-implied vs true returns"},
      {"es_diff", true, false, "absolute expected shortfall difference of forecast-implied vs true returns"},
      {"marginal_score", false, true, "mean l2 distance between per-feature marginal histograms"},
      {"correlation_score", false, true, "Frobenius distance between cross-feature correlation matrices"},
      {"covariance_score", false, true, "Frobenius distance between cross-feature covariance matrices"},
      {"autocorrelation_score", false, true, "mean l2 distance between per-feature autocorrelation profiles"},
      {"tail_var_diff", false, true, "absolute VaR difference of within-segment returns"},
      {"tail_es_diff", false, true, "absolute expected shortfall difference of within-segment returns"},
  };
  return metrics;
}

const MetricInfo* find_metric_info(std::string_view id) {
  for (const auto& m : implemented_metrics()) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

namespace {

std::vector<double> first_step_path(std::span<const Eigen::MatrixXd> blocks, Eigen::Index feature) {
  std::vector<double> path;
  path.reserve(blocks.size());
  for (const auto& b : blocks) path.push_back(b(0, feature));
  return path;
}

std::vector<double> segment_returns(WindowSet set, Eigen::Index feature) {
  std::vector<double> out;
  for (const auto& w : set) {
    std::vector<double> prices(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index t = 0; t < w.rows(); ++t) prices[static_cast<std::size_t>(t)] = w(t, feature);
    const auto r = returns_from_prices(prices);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace

std::map<std::string, double> evaluate_forecast(std::span<const std::string> metric_ids,
                                                std::span<const Eigen::MatrixXd> predictions,
                                                std::span<const Eigen::MatrixXd> targets, const RiskParams& params) {
  if (predictions.size() != targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction and target window counts differ");
  }
  const Eigen::MatrixXd pred = stack_rows(predictions);
  const Eigen::MatrixXd truth = stack_rows(targets);
  std::map<std::string, double> out;
  for (const auto& id : metric_ids) {
    if (id == "mse") out[id] = mse(pred, truth).value;
    else if (id == "rmse") out[id] = rmse(pred, truth).value;
    else if (id == "mae") out[id] = mae(pred, truth).value;
    else if (id == "mape") out[id] = mape(pred, truth).value;
    else if (id == "smape") out[id] = smape(pred, truth).value;
    else if (id == "sharpe_diff" || id == "var_diff" || id == "es_diff") {
      const RiskMetric which = id == "sharpe_diff" ? RiskMetric::Sharpe : id == "var_diff" ? RiskMetric::VaR : RiskMetric::ES;
      check_pair(pred, truth);
      std::vector<double> detail;
      for (Eigen::Index j = 0; j < pred.cols(); ++j) {
        detail.push_back(metric_difference(which, first_step_path(predictions, j), first_step_path(targets, j), params).value);
      }
      out[id] = per_feature_mean(id, std::move(detail)).value;
    } else {
      throw Error(ErrorCode::UnknownId, "'" + id + "' is not a forecasting metric");
    }
  }
  return out;
}

std::map<std::string, double> evaluate_generation(std::span<const std::string> metric_ids, WindowSet real,
                                                  WindowSet fake, const RiskParams& params) {
  std::map<std::string, double> out;
  for (const auto& id : metric_ids) {
    if (id == "marginal_score") out[id] = marginal_score(real, fake).value;
    else if (id == "correlation_score") out[id] = correlation_score(real, fake).value;
    else if (id == "covariance_score") out[id] = covariance_score(real, fake).value;
    else if (id == "autocorrelation_score") out[id] = autocorrelation_score(real, fake).value;
    else if (id == "tail_var_diff" || id == "tail_es_diff") {
      check_sets(real, fake);
      std::vector<double> detail;
      for (Eigen::Index j = 0; j < real.front().cols(); ++j) {
        const auto rr = segment_returns(real, j);
        const auto rf = segment_returns(fake, j);
        detail.push_back(id == "tail_var_diff"
                             ? std::abs(value_at_risk(rr, params) - value_at_risk(rf, params))
                             : std::abs(expected_shortfall(rr, params) - expected_shortfall(rf, params)));
      }
      out[id] = per_feature_mean(id, std::move(detail)).value;
    } else {
      throw Error(ErrorCode::UnknownId, "'" + id + "' is not a generation metric");
    }
  }
  return out;
}

}  // namespace tsflow
