#include "fixtures.hpp"

#include "tsflow/native_models.hpp"
#include "tsflow/synthetic.hpp"

#include <gtest/gtest.h>

using namespace tsflow;

TEST(Directives, LaterNormalizationWinsWithAWarning) {
  CandidateConfig c;
  c.directives = {{DirectiveKind::NormalizeZscore, {}}, {DirectiveKind::NormalizeMinmax, {}}};
  const auto s = apply_directives(c, NativeModel::GdLinear);
  EXPECT_EQ(s.normalization, Normalization::Minmax);
  EXPECT_EQ(s.warnings.size(), 1u);
}

TEST(Directives, UnhonoredOnesAreIgnored) {
  CandidateConfig c;
  c.directives = {{DirectiveKind::CovShrinkage, {{"lambda", 0.3}}}, {DirectiveKind::EarlyStopping, {{"patience", 4}}}};
  const auto gd = apply_directives(c, NativeModel::GdLinear);
  EXPECT_EQ(gd.cov_shrinkage, 0.0);
  EXPECT_EQ(gd.early_stopping, 4);
  const auto gauss = apply_directives(c, NativeModel::GaussianGen);
  EXPECT_EQ(gauss.cov_shrinkage, 0.3);
  EXPECT_FALSE(gauss.early_stopping.has_value());
}

TEST(Scaler, InverseUndoesTransform) {
  const Eigen::MatrixXd x = make_gaussian({50, 3, 4.0, 2.0, 1}).values();
  for (Normalization k : {Normalization::None, Normalization::Zscore, Normalization::Minmax}) {
    const Scaler s = Scaler::fit(x, k);
    EXPECT_TRUE(s.inverse(s.transform(x)).isApprox(x, 1e-12));
  }
  const Eigen::MatrixXd z = Scaler::fit(x, Normalization::Zscore).transform(x);
  EXPECT_NEAR(z.col(0).mean(), 0.0, 1e-12);
  const Eigen::MatrixXd m = Scaler::fit(x, Normalization::Minmax).transform(x);
  EXPECT_NEAR(m.minCoeff(), 0.0, 1e-12);
  EXPECT_NEAR(m.maxCoeff(), 1.0, 1e-12);
}

TEST(Forecasters, NaiveAndSmoothingClosedForms) {
  Eigen::MatrixXd in(3, 1);
  in << 1.0, 2.0, 4.0;
  EXPECT_EQ(predict_naive_last(in, 2), Eigen::MatrixXd::Constant(2, 1, 4.0));
  // alpha 0.5: level 1 -> 1.5 -> 2.75
  EXPECT_NEAR(predict_exp_smoothing(in, 1, 0.5)(0, 0), 2.75, 1e-15);
  EXPECT_NEAR(predict_exp_smoothing(in, 1, 1.0)(0, 0), 4.0, 1e-15);
}

TEST(GdLinear, LearnsANoiselessLinearMap) {
  // x_t = 0.8 x_{t-1}: one input step predicts the next exactly.
  Eigen::MatrixXd m(200, 1);
  m(0, 0) = 1.0;
  for (int i = 1; i < 200; ++i) m(i, 0) = 0.8 * m(i - 1, 0) + (i % 7 == 0 ? 1.0 : 0.0);
  const auto windows = make_windows(TimeSeriesFrame(m, {"x"}), {1, 1, 1});
  GdLinearOptions o;
  o.lr = 0.3;
  o.epochs = 3000;
  o.val_fraction = 0.1;
  const auto model = fit_gd_linear(windows, o);
  EXPECT_EQ(model.weights.rows(), 2);
  EXPECT_LT(model.train_loss.back(), model.train_loss.front());
}

TEST(GdLinear, EarlyStoppingStops) {
  const auto frame = make_ar2({400, 2, 0.5, 0.3, 1.0, 5});
  const auto windows = make_windows(frame, {4, 1, 1});
  GdLinearOptions o;
  o.epochs = 5000;
  o.lr = 0.01;
  o.settings.early_stopping = 3;
  const auto model = fit_gd_linear(windows, o);
  EXPECT_TRUE(model.stopped_early);
  EXPECT_LT(model.epochs_run, 5000);
}

TEST(Generators, ShapesAndDeterminism) {
  const auto frame = make_gaussian({400, 2, 0.0, 1.0, 3});
  const auto segs = make_segments(frame, 5, 5);
  const auto a = generate_gaussian(segs, 7, 0.0, 1);
  const auto b = generate_gaussian(segs, 7, 0.0, 1);
  ASSERT_EQ(a.size(), 7u);
  EXPECT_EQ(a[0].rows(), 5);
  EXPECT_EQ(a[3], b[3]);
  const auto boot = generate_block_bootstrap(frame.values(), 6, 4, 3, 2);
  ASSERT_EQ(boot.size(), 4u);
  EXPECT_EQ(boot[0].rows(), 6);
}

TEST(Synthetic, Ar2IsSeededAndStationary) {
  const auto a = make_ar2({3000, 1, 0.5, 0.3, 1.0, 9});
  EXPECT_EQ(a.values(), make_ar2({3000, 1, 0.5, 0.3, 1.0, 9}).values());
  // Stationary variance of AR(2): (1 - phi2) / ((1 + phi2) ((1 - phi2)^2 - phi1^2)).
  const double want = (1 - 0.3) / ((1 + 0.3) * ((1 - 0.3) * (1 - 0.3) - 0.25));
  const Eigen::VectorXd x = a.values().col(0);
  const double var = (x.array() - x.mean()).square().sum() / (x.size() - 1);
  EXPECT_NEAR(var, want, 0.25 * want);
}
