#include "fixtures.hpp"

#include "tsflow/error.hpp"
#include "tsflow/task.hpp"

#include <gtest/gtest.h>

using namespace tsflow;

namespace {

TimeSeriesFrame counting_frame(int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = i * 10.0 + j;
  std::vector<std::string> names;
  for (int j = 0; j < cols; ++j) names.push_back("f" + std::to_string(j));
  return TimeSeriesFrame(m, names);
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Windows, CountMatchesClosedForm) {
  for (std::size_t t = 0; t < 40; ++t) {
    for (std::size_t p = 1; p < 5; ++p) {
      for (std::size_t q = 1; q < 4; ++q) {
        for (std::size_t s = 1; s < 4; ++s) {
          const std::size_t want = t < p + q ? 0 : (t - p - q) / s + 1;
          EXPECT_EQ(window_count(t, {p, q, s}), want);
        }
      }
    }
  }
}

TEST(Windows, ContentsFollowTheIndexRule) {
  const auto frame = counting_frame(20, 2);
  const WindowSpec spec{4, 3, 2};
  const auto windows = make_windows(frame, spec);
  ASSERT_EQ(windows.size(), window_count(20, spec));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double first = static_cast<double>(i * 2) * 10.0;
    EXPECT_EQ(windows[i].input(0, 0), first);
    EXPECT_EQ(windows[i].input(3, 1), first + 30.0 + 1.0);
    EXPECT_EQ(windows[i].target(0, 0), first + 40.0);
    EXPECT_EQ(windows[i].target.rows(), 3);
  }
}

TEST(Windows, TooShortFrameThrows) {
  EXPECT_EQ(code_of([] { make_windows(counting_frame(4, 1), {3, 2, 1}); }), ErrorCode::FrameTooShort);
}

TEST(Segments, AreContiguousBlocks) {
  const auto segs = make_segments(counting_frame(17, 1), 5, 5);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(segs[2](0, 0), 100.0);
  EXPECT_EQ(segs[2](4, 0), 140.0);
}

TEST(Split, LastTwentyPercentIsTest) {
  const auto split = split_chronological(counting_frame(100, 2), {5, 1, 1});
  EXPECT_EQ(split.train.rows(), 80u);
  EXPECT_EQ(split.test.rows(), 20u);
  EXPECT_EQ(split.test.values()(0, 0), 800.0);
}

TEST(Frame, RejectsNaNAndNameMismatch) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 2);
  m(1, 1) = std::nan("");
  EXPECT_EQ(code_of([&] { TimeSeriesFrame(m, {"a", "b"}); }), ErrorCode::NaNDetected);
  EXPECT_THROW(TimeSeriesFrame(Eigen::MatrixXd::Zero(3, 2), {"a"}), Error);
}

TEST(Csv, RoundTripsExactly) {
  const auto frame = fixtures::ar2_task(3, 50, 2, 3, 1).dataset->train;
  const auto back = parse_csv_wide(to_csv_wide(frame));
  EXPECT_EQ(back.values(), frame.values());
  EXPECT_EQ(back.feature_names(), frame.feature_names());
}

TEST(Csv, ReportsBadCells) {
  EXPECT_EQ(code_of([] { parse_csv_wide("a,b\n1,x\n"); }), ErrorCode::NonNumericCell);
  EXPECT_EQ(code_of([] { parse_csv_wide("a,b\n1,2,3\n"); }), ErrorCode::MalformedRow);
}

TEST(JsonFrame, RoundTrips) {
  const auto frame = counting_frame(6, 3);
  const auto back = from_json_frame(to_json_frame(frame));
  EXPECT_EQ(back.values(), frame.values());
}

TEST(Task, LoadsTheDemoSidecar) {
  const TaskSpec task = load_task(fixtures::source_dir() / "data" / "ar2_demo.task.json");
  EXPECT_EQ(task.id, "ar2-demo");
  EXPECT_EQ(task.primary_criterion, "rmse");
  EXPECT_TRUE(validate_task(task, fixtures::starter_banks()).empty());
  EXPECT_EQ(code_of([] { load_task("/nonexistent/task.json"); }), ErrorCode::MissingFile);
}

TEST(Task, ValidationFlagsEachProblem) {
  TaskSpec task = fixtures::ar2_task(1, 200, 2, 4, 1);
  const auto& banks = fixtures::starter_banks();
  task.primary_criterion = "mae_typo";
  auto v = validate_task(task, banks);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, TaskViolation::Kind::PrimaryNotInCriteria);

  task = fixtures::ar2_task(1, 200, 2, 4, 1);
  task.criteria.push_back("covariance_score");
  v = validate_task(task, banks);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, TaskViolation::Kind::KindMismatch);

  task = fixtures::ar2_task(1, 200, 2, 4, 1);
  task.criteria.push_back("no_such_metric");
  v = validate_task(task, banks);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, TaskViolation::Kind::UnknownMetric);
}
