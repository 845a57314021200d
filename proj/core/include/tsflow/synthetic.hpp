#pragma once

#include "tsflow/task.hpp"

#include <cstddef>
#include <cstdint>

namespace tsflow {

/// x_t = phi1 * x_{t-1} + phi2 * x_{t-2} + noise, independently per feature.
/// The first two rows are drawn from the noise distribution.
struct Ar2Params {
  std::size_t rows = 2000;
  std::size_t features = 3;
  double phi1 = 0.5;
  double phi2 = 0.3;
  double noise_std = 1.0;
  std::uint64_t seed = 42;
};

TimeSeriesFrame make_ar2(const Ar2Params& params);

/// i.i.d. rows from N(mean, diag(std^2)) per feature.
struct GaussianParams {
  std::size_t rows = 500;
  std::size_t features = 2;
  double mean = 0.0;
  double std = 1.0;
  std::uint64_t seed = 7;
};

TimeSeriesFrame make_gaussian(const GaussianParams& params);

}  // namespace tsflow
