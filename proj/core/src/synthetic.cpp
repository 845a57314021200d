#include "tsflow/synthetic.hpp"

#include "tsflow/error.hpp"

#include <random>

namespace tsflow {

namespace {

std::vector<std::string> feature_names(std::size_t d) {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

}  // namespace

TimeSeriesFrame make_ar2(const Ar2Params& p) {
  if (p.rows < 2 || p.features == 0) throw Error(ErrorCode::InvalidArgument, "ar2 needs rows >= 2 and features >= 1");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.noise_std);
  const auto T = static_cast<Eigen::Index>(p.rows);
  const auto d = static_cast<Eigen::Index>(p.features);
  Eigen::MatrixXd x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index j = 0; j < d; ++j) {
      double v = noise(rng);
      if (t >= 2) v += p.phi1 * x(t - 1, j) + p.phi2 * x(t - 2, j);
      x(t, j) = v;
    }
  }
  return TimeSeriesFrame(std::move(x), feature_names(p.features));
}

TimeSeriesFrame make_gaussian(const GaussianParams& p) {
  if (p.rows == 0 || p.features == 0) throw Error(ErrorCode::InvalidArgument, "gaussian needs rows and features");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> dist(p.mean, p.std);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(p.rows), static_cast<Eigen::Index>(p.features));
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(t, j) = dist(rng);
  }
  return TimeSeriesFrame(std::move(x), feature_names(p.features));
}

}  // namespace tsflow
