#pragma once

#include "tsflow/candidate.hpp"
#include "tsflow/task.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsflow {

/// Models the engine runs in-process. Anything else goes through the external
/// executor protocol.
enum class NativeModel { NaiveLast, GdLinear, ExpSmoothing, GaussianGen, BlockBootstrapGen };

std::string_view to_string(NativeModel model) noexcept;
std::optional<NativeModel> parse_native_model(std::string_view text) noexcept;
const std::vector<NativeModel>& all_native_models();
TaskKind task_kind_of(NativeModel model) noexcept;

/// Whether the model consumes the directive. Unhonored directives are ignored.
bool honors(NativeModel model, DirectiveKind directive) noexcept;

enum class Normalization { None, Zscore, Minmax };

struct PlateauSettings {
  double factor = 0.5;
  int patience = 5;
};

/// Training settings after translating an ordered directive list for one model.
struct EffectiveSettings {
  Normalization normalization = Normalization::None;
  std::optional<int> early_stopping;
  std::optional<PlateauSettings> plateau;
  double weight_decay = 0.0;
  std::optional<double> gradient_clip;
  double jitter_sigma = 0.0;
  double cov_shrinkage = 0.0;
  std::vector<std::string> warnings;
};

EffectiveSettings apply_directives(const CandidateConfig& config, NativeModel model);

/// Per-feature affine transform fitted on training rows.
class Scaler {
 public:
  Scaler() = default;
  static Scaler fit(const Eigen::MatrixXd& rows, Normalization kind);

  Eigen::MatrixXd transform(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& rows) const;
  Normalization kind() const noexcept { return kind_; }

 private:
  Normalization kind_ = Normalization::None;
  Eigen::RowVectorXd shift_;
  Eigen::RowVectorXd scale_;
};

// -- forecasting -------------------------------------------------------------

Eigen::MatrixXd predict_naive_last(const Eigen::MatrixXd& input, std::size_t horizon);

/// Simple exponential smoothing per feature over the input window, level held flat.
Eigen::MatrixXd predict_exp_smoothing(const Eigen::MatrixXd& input, std::size_t horizon, double alpha);

struct GdLinearOptions {
  double lr = 0.01;
  int epochs = 300;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  EffectiveSettings settings;
};

struct GdLinearModel {
  /// (p*d + 1) x (q*d); last row is the bias.
  Eigen::MatrixXd weights;
  std::size_t input_len = 0;
  std::size_t horizon = 0;
  std::size_t features = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int epochs_run = 0;
  bool stopped_early = false;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& input) const;
};

/// Full-batch gradient descent on mean squared error. Throws Error(InvalidArgument)
/// when the loss turns non-finite.
GdLinearModel fit_gd_linear(std::span<const Window> windows, const GdLinearOptions& options);

/// Row-major flattening of a window block into one row vector.
Eigen::RowVectorXd flatten_rows(const Eigen::MatrixXd& block);

// -- generation --------------------------------------------------------------

/// Fits mean and covariance of flattened q*d segments (with optional shrinkage
/// toward the diagonal) and draws `count` samples.
std::vector<Eigen::MatrixXd> generate_gaussian(std::span<const Eigen::MatrixXd> segments, std::size_t count,
                                               double shrinkage, std::uint64_t seed);

/// Concatenates randomly chosen contiguous blocks of the source rows.
std::vector<Eigen::MatrixXd> generate_block_bootstrap(const Eigen::MatrixXd& source, std::size_t length,
                                                      std::size_t count, std::size_t block_len,
                                                      std::uint64_t seed);

}  // namespace tsflow
