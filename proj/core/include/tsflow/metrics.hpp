#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

enum class TaskKind;

struct MetricValue {
  std::string id;
  double value = 0.0;
  /// Per-feature breakdown whose mean is `value`; empty for pooled metrics.
  std::vector<double> detail;
};

struct RiskParams {
  double alpha = 0.05;
};

// -- point forecast errors, pooled over every (window, step, feature) cell ----

MetricValue mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);
MetricValue rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);
MetricValue mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);
/// 100 * mean(|e| / |a|). Throws MapeDenominatorZero when any |a| < 1e-8.
MetricValue mape(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);
/// 100 * mean(2|f - a| / (|f| + |a|)); cells with |f| + |a| < 1e-12 contribute 0.
MetricValue smape(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

// -- risk and trading ----------------------------------------------------------

/// Simple returns r_t = p_t / p_{t-1} - 1.
std::vector<double> returns_from_prices(std::span<const double> prices);

/// mean / sample std (N - 1), not annualized.
double sharpe(std::span<const double> returns);
/// Historical VaR: minus the ceil(alpha N)-th smallest return.
double value_at_risk(std::span<const double> returns, const RiskParams& params = {});
/// Minus the mean of all returns at or below the VaR quantile.
double expected_shortfall(std::span<const double> returns, const RiskParams& params = {});

enum class RiskMetric { Sharpe, VaR, ES };

/// |metric(returns(pred)) - metric(returns(truth))|.
MetricValue metric_difference(RiskMetric metric, std::span<const double> pred_prices,
                              std::span<const double> true_prices, const RiskParams& params = {});

// -- generation fidelity -------------------------------------------------------

using WindowSet = std::span<const Eigen::MatrixXd>;

MetricValue marginal_score(WindowSet real, WindowSet fake, int bins = 50);
MetricValue correlation_score(WindowSet real, WindowSet fake);
MetricValue covariance_score(WindowSet real, WindowSet fake);
/// max_lag defaults to q - 1.
MetricValue autocorrelation_score(WindowSet real, WindowSet fake, std::optional<int> max_lag = std::nullopt);

// -- registry and task-level evaluation ----------------------------------------

struct MetricInfo {
  std::string_view id;
  bool forecasting = false;
  bool generation = false;
  std::string_view summary;
};

const std::vector<MetricInfo>& implemented_metrics();
const MetricInfo* find_metric_info(std::string_view id);

/// Scores per-window forecasts against targets. Trading differences use, per
/// feature, the path of first-step forecasts across consecutive windows.
std::map<std::string, double> evaluate_forecast(std::span<const std::string> metric_ids,
                                                std::span<const Eigen::MatrixXd> predictions,
                                                std::span<const Eigen::MatrixXd> targets,
                                                const RiskParams& params = {});

/// Scores generated segments against real ones. Tail differences pool the
/// within-segment simple returns of each feature.
std::map<std::string, double> evaluate_generation(std::span<const std::string> metric_ids, WindowSet real,
                                                  WindowSet fake, const RiskParams& params = {});

/// Stacks q x d blocks vertically into an (n q) x d matrix.
Eigen::MatrixXd stack_rows(std::span<const Eigen::MatrixXd> blocks);

}  // namespace tsflow
