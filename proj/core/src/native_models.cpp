#include "tsflow/native_models.hpp"

#include "tsflow/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tsflow {

namespace {

struct ModelName {
  NativeModel model;
  std::string_view name;
};

constexpr ModelName kModelNames[] = {
    {NativeModel::NaiveLast, "naive_last"},
    {NativeModel::GdLinear, "gd_linear"},
    {NativeModel::ExpSmoothing, "exp_smoothing"},
    {NativeModel::GaussianGen, "gaussian_gen"},
    {NativeModel::BlockBootstrapGen, "block_bootstrap_gen"},
};

}  // namespace

std::string_view to_string(NativeModel model) noexcept {
  for (const auto& mn : kModelNames) {
    if (mn.model == model) return mn.name;
  }
  return "unknown";
}

std::optional<NativeModel> parse_native_model(std::string_view text) noexcept {
  for (const auto& mn : kModelNames) {
    if (mn.name == text) return mn.model;
  }
  return std::nullopt;
}

const std::vector<NativeModel>& all_native_models() {
  static const std::vector<NativeModel> models = [] {
    std::vector<NativeModel> v;
    for (const auto& mn : kModelNames) v.push_back(mn.model);
    return v;
  }();
  return models;
}

TaskKind task_kind_of(NativeModel model) noexcept {
  switch (model) {
    case NativeModel::GaussianGen:
    case NativeModel::BlockBootstrapGen: return TaskKind::Generation;
    default: return TaskKind::Forecasting;
  }
}

bool honors(NativeModel model, DirectiveKind directive) noexcept {
  using D = DirectiveKind;
  switch (model) {
    case NativeModel::NaiveLast:
    case NativeModel::BlockBootstrapGen: return false;
    case NativeModel::ExpSmoothing: return directive == D::NormalizeZscore || directive == D::NormalizeMinmax;
    case NativeModel::GdLinear: return directive != D::CovShrinkage;
    case NativeModel::GaussianGen:
      return directive == D::CovShrinkage || directive == D::NormalizeZscore || directive == D::NormalizeMinmax;
  }
  return false;
}

EffectiveSettings apply_directives(const CandidateConfig& config, NativeModel model) {
  EffectiveSettings out;
  bool normalization_set = false;
  for (const auto& d : config.directives) {
    if (!honors(model, d.kind)) {
      out.warnings.push_back(std::string(to_string(d.kind)) + " ignored: not applicable to " +
                             std::string(to_string(model)));
      continue;
    }
    switch (d.kind) {
      case DirectiveKind::NormalizeZscore:
      case DirectiveKind::NormalizeMinmax: {
        const auto next = d.kind == DirectiveKind::NormalizeZscore ? Normalization::Zscore : Normalization::Minmax;
        if (normalization_set) {
          out.warnings.push_back(std::string("conflicting normalizations: ") + std::string(to_string(d.kind)) +
                                 " overrides the earlier one");
        }
        out.normalization = next;
        normalization_set = true;
        break;
      }
      case DirectiveKind::EarlyStopping:
        out.early_stopping = static_cast<int>(d.param("patience"));
        break;
      case DirectiveKind::LrSchedulePlateau:
        out.plateau = PlateauSettings{d.param("factor"), static_cast<int>(d.param("patience"))};
        break;
      case DirectiveKind::WeightDecay:
        out.weight_decay = d.param("lambda");
        break;
      case DirectiveKind::GradientClip:
        out.gradient_clip = d.param("max_norm");
        break;
      case DirectiveKind::AugmentJitter:
        out.jitter_sigma = d.param("sigma");
        break;
      case DirectiveKind::CovShrinkage:
        out.cov_shrinkage = d.param("lambda");
        break;
    }
  }
  return out;
}

Scaler Scaler::fit(const Eigen::MatrixXd& rows, Normalization kind) {
  Scaler s;
  s.kind_ = kind;
  const auto d = rows.cols();
  s.shift_ = Eigen::RowVectorXd::Zero(d);
  s.scale_ = Eigen::RowVectorXd::Ones(d);
  if (kind == Normalization::None || rows.rows() == 0) return s;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto col = rows.col(j);
    if (kind == Normalization::Zscore) {
      const double mean = col.mean();
      double ss = 0.0;
      for (Eigen::Index i = 0; i < col.size(); ++i) ss += (col(i) - mean) * (col(i) - mean);
      const double sd = col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0;
      s.shift_(j) = mean;
      s.scale_(j) = sd > 0.0 ? sd : 1.0;
    } else {
      const double lo = col.minCoeff();
      const double hi = col.maxCoeff();
      s.shift_(j) = lo;
      s.scale_(j) = hi > lo ? hi - lo : 1.0;
    }
  }
  return s;
}

Eigen::MatrixXd Scaler::transform(const Eigen::MatrixXd& rows) const {
  if (kind_ == Normalization::None) return rows;
  return (rows.rowwise() - shift_).array().rowwise() / scale_.array();
}

Eigen::MatrixXd Scaler::inverse(const Eigen::MatrixXd& rows) const {
  if (kind_ == Normalization::None) return rows;
  Eigen::MatrixXd out = rows.array().rowwise() * scale_.array();
  return out.rowwise() + shift_;
}

Eigen::MatrixXd predict_naive_last(const Eigen::MatrixXd& input, std::size_t horizon) {
  return input.row(input.rows() - 1).replicate(static_cast<Eigen::Index>(horizon), 1);
}

Eigen::MatrixXd predict_exp_smoothing(const Eigen::MatrixXd& input, std::size_t horizon, double alpha) {
  Eigen::RowVectorXd level = input.row(0);
  for (Eigen::Index t = 1; t < input.rows(); ++t) level = alpha * input.row(t) + (1.0 - alpha) * level;
  return level.replicate(static_cast<Eigen::Index>(horizon), 1);
}

Eigen::RowVectorXd flatten_rows(const Eigen::MatrixXd& block) {
  Eigen::RowVectorXd out(block.size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < block.rows(); ++r) {
    for (Eigen::Index c = 0; c < block.cols(); ++c) out(k++) = block(r, c);
  }
  return out;
}

namespace {

Eigen::MatrixXd unflatten_rows(const Eigen::RowVectorXd& flat, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = flat(k++);
  }
  return out;
}

double mean_sq(const Eigen::MatrixXd& residual) {
  return residual.squaredNorm() / static_cast<double>(residual.size());
}

}  // namespace

Eigen::MatrixXd GdLinearModel::predict(const Eigen::MatrixXd& input) const {
  const auto in_dim = static_cast<Eigen::Index>(input_len * features);
  Eigen::RowVectorXd x(in_dim + 1);
  x.head(in_dim) = flatten_rows(input);
  x(in_dim) = 1.0;
  const Eigen::RowVectorXd y = x * weights;
  return unflatten_rows(y, static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(features));
}

GdLinearModel fit_gd_linear(std::span<const Window> windows, const GdLinearOptions& options) {
  if (windows.empty()) throw Error(ErrorCode::EmptyInput, "gd_linear needs at least one training window");
  if (!(options.lr > 0.0) || options.epochs < 1) {
    throw Error(ErrorCode::InvalidArgument, "gd_linear needs lr > 0 and epochs >= 1");
  }
  const auto& settings = options.settings;
  GdLinearModel model;
  model.input_len = static_cast<std::size_t>(windows.front().input.rows());
  model.horizon = static_cast<std::size_t>(windows.front().target.rows());
  model.features = static_cast<std::size_t>(windows.front().input.cols());

  const auto n_total = static_cast<Eigen::Index>(windows.size());
  const auto in_dim = static_cast<Eigen::Index>(model.input_len * model.features);
  const auto out_dim = static_cast<Eigen::Index>(model.horizon * model.features);

  Eigen::MatrixXd x_all(n_total, in_dim + 1);
  Eigen::MatrixXd y_all(n_total, out_dim);
  for (Eigen::Index i = 0; i < n_total; ++i) {
    x_all.row(i).head(in_dim) = flatten_rows(windows[static_cast<std::size_t>(i)].input);
    x_all(i, in_dim) = 1.0;
    y_all.row(i) = flatten_rows(windows[static_cast<std::size_t>(i)].target);
  }

  // Chronological holdout only when a directive consumes validation loss.
  const bool use_val = settings.early_stopping.has_value() || settings.plateau.has_value();
  Eigen::Index n_val = 0;
  if (use_val) {
    n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(n_total) * options.val_fraction));
    n_val = std::clamp<Eigen::Index>(n_val, 1, std::max<Eigen::Index>(n_total - 1, 0));
    if (n_total < 2) n_val = 0;
  }
  const Eigen::Index n_train = n_total - n_val;
  const Eigen::MatrixXd x_train = x_all.topRows(n_train);
  const Eigen::MatrixXd y_train = y_all.topRows(n_train);
  const Eigen::MatrixXd x_val = x_all.bottomRows(n_val);
  const Eigen::MatrixXd y_val = y_all.bottomRows(n_val);

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(in_dim + 1, out_dim);
  Eigen::MatrixXd best_w = w;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int since_plateau_best = 0;
  double plateau_best = std::numeric_limits<double>::infinity();
  double lr = options.lr;
  const double inv_n = 1.0 / static_cast<double>(n_train);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Eigen::MatrixXd x_epoch;
    const Eigen::MatrixXd* x = &x_train;
    if (settings.jitter_sigma > 0.0) {
      x_epoch = x_train;
      for (Eigen::Index i = 0; i < x_epoch.rows(); ++i) {
        for (Eigen::Index j = 0; j < in_dim; ++j) x_epoch(i, j) += settings.jitter_sigma * noise(rng);
      }
      x = &x_epoch;
    }
    const Eigen::MatrixXd residual = (*x) * w - y_train;
    const double loss = x == &x_train ? mean_sq(residual) : mean_sq(x_train * w - y_train);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::InvalidArgument,
                  "training diverged: non-finite loss at epoch " + std::to_string(epoch));
    }
    model.train_loss.push_back(loss);

    Eigen::MatrixXd grad = 2.0 * inv_n * x->transpose() * residual;
    if (settings.weight_decay > 0.0) grad.topRows(in_dim) += 2.0 * settings.weight_decay * w.topRows(in_dim);
    if (settings.gradient_clip) {
      const double norm = grad.norm();
      if (norm > *settings.gradient_clip) grad *= *settings.gradient_clip / norm;
    }
    w -= lr * grad;
    model.epochs_run = epoch + 1;

    if (n_val > 0) {
      const double vloss = mean_sq(x_val * w - y_val);
      if (!std::isfinite(vloss)) {
        throw Error(ErrorCode::InvalidArgument,
                    "training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
      }
      model.val_loss.push_back(vloss);
      if (vloss < best_val) {
        best_val = vloss;
        best_w = w;
        since_best = 0;
      } else {
        ++since_best;
      }
      if (settings.plateau) {
        if (vloss < plateau_best) {
          plateau_best = vloss;
          since_plateau_best = 0;
        } else if (++since_plateau_best >= settings.plateau->patience) {
          lr *= settings.plateau->factor;
          since_plateau_best = 0;
        }
      }
      if (settings.early_stopping && since_best >= *settings.early_stopping) {
        model.stopped_early = true;
        break;
      }
    }
  }
  if (!w.allFinite()) throw Error(ErrorCode::InvalidArgument, "training diverged: non-finite weights");
  model.weights = settings.early_stopping && n_val > 0 ? best_w : w;
  return model;
}

std::vector<Eigen::MatrixXd> generate_gaussian(std::span<const Eigen::MatrixXd> segments, std::size_t count,
                                               double shrinkage, std::uint64_t seed) {
  if (segments.empty()) throw Error(ErrorCode::EmptyInput, "gaussian_gen needs training segments");
  const auto rows = segments.front().rows();
  const auto cols = segments.front().cols();
  const auto dim = rows * cols;
  const auto n = static_cast<Eigen::Index>(segments.size());
  Eigen::MatrixXd data(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) data.row(i) = flatten_rows(segments[static_cast<std::size_t>(i)]);

  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  if (n > 1) cov = centered.transpose() * centered / static_cast<double>(n - 1);
  if (shrinkage > 0.0) {
    const Eigen::MatrixXd diag = cov.diagonal().asDiagonal();
    cov = (1.0 - shrinkage) * cov + shrinkage * diag;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "covariance factorization failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd factor = eig.eigenvectors() * root.asDiagonal();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(count);
  Eigen::VectorXd z(dim);
  for (std::size_t s = 0; s < count; ++s) {
    for (Eigen::Index k = 0; k < dim; ++k) z(k) = normal(rng);
    const Eigen::RowVectorXd sample = mean + (factor * z).transpose();
    out.push_back(unflatten_rows(sample, rows, cols));
  }
  return out;
}

std::vector<Eigen::MatrixXd> generate_block_bootstrap(const Eigen::MatrixXd& source, std::size_t length,
                                                      std::size_t count, std::size_t block_len,
                                                      std::uint64_t seed) {
  const auto total = static_cast<std::size_t>(source.rows());
  if (total == 0 || length == 0) throw Error(ErrorCode::EmptyInput, "block bootstrap needs source rows");
  const std::size_t block = std::clamp<std::size_t>(block_len, 1, std::min(total, length));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - block);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::MatrixXd sample(static_cast<Eigen::Index>(length), source.cols());
    std::size_t filled = 0;
    while (filled < length) {
      const std::size_t start = pick(rng);
      const std::size_t take = std::min(block, length - filled);
      sample.middleRows(static_cast<Eigen::Index>(filled), static_cast<Eigen::Index>(take)) =
          source.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(take));
      filled += take;
    }
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace tsflow
