#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "extctl/dataset.hpp"
#include "extctl/error.hpp"
#include "support/fixtures.hpp"

using namespace extctl;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no extctl::Error thrown";
  return ErrorCode::IoError;
}

DatasetDraft parse(const std::string& text, const Schema& s = {}) {
  std::istringstream in(text);
  return parse_csv(in, s);
}

}  // namespace

TEST(Dataset, ParsesWithDefaultSchema) {
  const auto d = parse("d,t,y,age,bmi\n1,1,2.5,40,22\n0,0,1.0,50,30\n1,0,-1e-3,45,25\n");
  ASSERT_EQ(d.rows.size(), 3u);
  EXPECT_EQ(d.covariate_names, (std::vector<std::string>{"age", "bmi"}));
  EXPECT_EQ(d.rows[2].y, -1e-3);
  EXPECT_EQ(d.rows[1].d, 0);
}

TEST(Dataset, SchemaMapsColumnsInAnyOrder) {
  Schema s;
  s.y = "outcome";
  s.t = "arm";
  s.d = "source";
  s.x = {"bmi"};
  const auto d = parse("bmi,arm,age,outcome,source\n22,1,40,3.0,1\n", s);
  ASSERT_EQ(d.rows.size(), 1u);
  EXPECT_EQ(d.rows[0].x, std::vector<double>{22.0});
  EXPECT_EQ(d.rows[0].y, 3.0);
  EXPECT_EQ(d.rows[0].t, 1);
}

TEST(Dataset, ParseErrorsCarryLocation) {
  try {
    parse("d,t,y,x\n1,1,2,0\n1,2,2,0\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_EQ(e.row, 1u);
    EXPECT_EQ(e.column, "t");
  }
  EXPECT_EQ(code_of([] { parse("d,t,y,x\n1,1,abc,0\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse("d,t,y,x\n1,1,2\n"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse(""); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse("d,y,x\n1,2,0\n"); }), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of([] { parse("d,t,y\n1,1,2\n"); }), ErrorCode::MissingColumn);
  EXPECT_EQ(code_of([] { load_csv("/nonexistent/file.csv", {}); }), ErrorCode::IoError);
}

TEST(Dataset, ExternalTreatedRowIsRejected) {
  auto draft = parse("d,t,y,x\n1,1,2,0\n0,1,1,0\n");
  const auto rep = validate(draft);
  ASSERT_FALSE(rep.usable());
  EXPECT_EQ(rep.violations[0].kind, "source_treatment");
  EXPECT_EQ(rep.violations[0].row, 1u);
  try {
    CompositeDataset::build(draft);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
    EXPECT_EQ(e.row, 1u);
  }
}

TEST(Dataset, NonFiniteValuesAreCounted) {
  DatasetDraft d;
  d.covariate_names = {"a", "b"};
  d.rows = {{1.0, {0.0, NAN}, 1, 1}, {INFINITY, {NAN, 1.0}, 0, 1}};
  const auto rep = validate(d);
  EXPECT_EQ(rep.violations.size(), 3u);
  EXPECT_EQ(rep.columns[0].non_finite, 1u);
  EXPECT_EQ(rep.columns[1].non_finite, 1u);
  EXPECT_EQ(rep.columns[2].non_finite, 1u);
}

TEST(Dataset, OutcomeKindDetectionAndMismatch) {
  auto d = parse("d,t,y,x\n1,1,1,0\n1,0,0,1\n0,0,1,1\n");
  EXPECT_EQ(validate(d).detected_kind, OutcomeKind::binary);
  EXPECT_EQ(CompositeDataset::build(d).outcome_kind(), OutcomeKind::binary);
  d.rows[0].y = 0.5;
  EXPECT_EQ(validate(d).detected_kind, OutcomeKind::continuous);
  d.declared_kind = OutcomeKind::binary;
  const auto rep = validate(d);
  ASSERT_FALSE(rep.usable());
  EXPECT_EQ(rep.violations[0].kind, "kind_mismatch");
}

TEST(Dataset, TrialOnlyIsAllowedWithWarning) {
  const auto d = parse("d,t,y,x\n1,1,2,0\n1,0,1,0\n");
  const auto rep = validate(d);
  EXPECT_TRUE(rep.usable());
  ASSERT_EQ(rep.warnings.size(), 1u);
  const auto ds = CompositeDataset::build(d);
  EXPECT_EQ(ds.n2(), 0u);
  EXPECT_EQ(ds.q_hat(), 1.0);
}

TEST(Dataset, NoTrialRowsIsAViolation) {
  EXPECT_FALSE(validate(parse("d,t,y,x\n0,0,2,0\n")).usable());
}

TEST(Dataset, QHatTimesNEqualsN1) {
  const auto ds = load_csv(fx::data_path("synthetic.csv"), {});
  EXPECT_EQ(ds.n(), 400u);
  EXPECT_NEAR(ds.q_hat() * static_cast<double>(ds.n()), static_cast<double>(ds.n1()),
              static_cast<double>(ds.n()) * std::numeric_limits<double>::epsilon());
  for (std::size_t n : {3u, 7u, 1001u}) {
    std::vector<fx::Row> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({i % 3 == 0 ? 0 : 1, 0, 1.0 * i, {0.5}});
    const auto s = fx::make(rows);
    EXPECT_NEAR(s.q_hat() * static_cast<double>(n), static_cast<double>(s.n1()),
                static_cast<double>(n) * std::numeric_limits<double>::epsilon());
  }
}

TEST(Dataset, CsvRoundTripIsExact) {
  const auto ds = load_csv(fx::data_path("synthetic.csv"), {});
  std::ostringstream out;
  write_csv(out, ds);
  std::istringstream in(out.str());
  const auto back = CompositeDataset::build(parse_csv(in, {}));
  ASSERT_EQ(back.n(), ds.n());
  EXPECT_EQ(back.y(), ds.y());
  EXPECT_EQ(back.x(), ds.x());
  EXPECT_EQ(back.t(), ds.t());
  EXPECT_EQ(back.d(), ds.d());
  EXPECT_EQ(back.covariate_names(), ds.covariate_names());
}

TEST(Dataset, SubsetAndOutcomeReplacement) {
  const auto ds = fx::make({{1, 1, 3.0, {1.0}}, {1, 0, 2.0, {2.0}}, {0, 0, 1.0, {3.0}}});
  const std::vector<std::size_t> idx{2, 2, 0};
  const auto s = ds.subset(idx);
  EXPECT_EQ(s.n(), 3u);
  EXPECT_EQ(s.n1(), 1u);
  EXPECT_EQ(s.y()(0), 1.0);
  EXPECT_EQ(s.x()(2, 0), 1.0);
  Eigen::VectorXd y(3);
  y << 9, 8, 7;
  EXPECT_EQ(ds.with_outcomes(y).y()(1), 8.0);
  EXPECT_THROW(ds.with_outcomes(Eigen::VectorXd::Zero(2)), Error);
}

TEST(Dataset, SummarizeCells) {
  const auto ds = fx::make({{1, 1, 3.0, {1.0}},
                            {1, 1, 5.0, {3.0}},
                            {1, 0, 2.0, {2.0}},
                            {0, 0, 1.0, {3.0}},
                            {0, 0, 0.0, {5.0}}});
  const auto s = summarize(ds);
  EXPECT_EQ(s.n1, 3u);
  EXPECT_DOUBLE_EQ(*s.trial_treated_fraction, 2.0 / 3.0);
  ASSERT_EQ(s.cells.size(), 3u);
  EXPECT_EQ(s.cells[0].count, 2u);
  EXPECT_DOUBLE_EQ(*s.cells[0].outcome_mean, 4.0);
  EXPECT_DOUBLE_EQ(*s.cells[0].covariate_sds[0], std::sqrt(2.0));
  EXPECT_FALSE(s.cells[1].covariate_sds[0].has_value());
  EXPECT_DOUBLE_EQ(s.covariate_means[0], 14.0 / 5.0);
}
