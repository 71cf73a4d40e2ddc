#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "hfgvar/data_ingest.hpp"
#include "test_util.hpp"

using namespace hfgvar;
using testutil::max_abs_diff;
using testutil::random_matrix;

TEST(Months, ParseFormatAndRange) {
  EXPECT_EQ(format_month(parse_month("1999-01")), "1999-01");
  EXPECT_EQ(parse_month("2000-01") - parse_month("1999-12"), 1);
  EXPECT_EQ(parse_month("2016-12-31T14:00"), parse_month("2016-12"));
  const auto r = month_range("1999-11", 3);
  EXPECT_EQ(r, (std::vector<std::string>{"1999-11", "1999-12", "2000-01"}));
  EXPECT_EQ(testutil::error_kind_of([] { parse_month("1999/01"); }), ErrorKind::data);
  EXPECT_EQ(testutil::error_kind_of([] { parse_month("1999-13"); }), ErrorKind::data);
}

// ---------------------------------------------------------------------------

namespace {

RawEventRecord event(const std::string& ts, Region r, Instrument i, EventWindow w, double v) {
  return RawEventRecord{ts, r, i, w, v};
}

}  // namespace

TEST(Surprises, WindowsOfOneEventAreSummed) {
  const std::vector<RawEventRecord> ev{
      event("2001-03-20T14:15", Region::US, Instrument::rate_surprise, EventWindow::press_release, 0.02),
      event("2001-03-20T14:15", Region::US, Instrument::rate_surprise, EventWindow::conference, 0.01)};
  const MonthlySurprises m = aggregate_surprises_to_monthly(ev, "2001-03", 1, {Instrument::rate_surprise});
  EXPECT_NEAR(m.values(0, 0), 0.03, 1e-15);
  EXPECT_EQ(m.columns, (std::vector<std::string>{"US.rate_surprise", "EA.rate_surprise"}));
}

TEST(Surprises, MonthWithoutEventsIsZero) {
  const std::vector<RawEventRecord> ev{
      event("2001-01-31", Region::EA, Instrument::stock_surprise, EventWindow::conference, -0.4)};
  const MonthlySurprises m = aggregate_surprises_to_monthly(ev, "2001-01", 3);
  EXPECT_EQ(m.values.rows(), 3);
  EXPECT_EQ(m.values(0, 3), -0.4);
  EXPECT_EQ(m.values.bottomRows(2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Surprises, MatchesGroupByOracle) {
  Rng rng(31);
  const char* stamps[] = {"2005-06-01T12:00", "2005-06-20T18:30", "2005-07-07T13:45"};
  std::vector<RawEventRecord> ev;
  for (const char* ts : stamps) {
    for (Region r : {Region::US, Region::EA}) {
      for (Instrument i : {Instrument::rate_surprise, Instrument::stock_surprise}) {
        for (EventWindow w : {EventWindow::press_release, EventWindow::conference}) {
          ev.push_back(event(ts, r, i, w, rng.normal()));
        }
      }
    }
  }
  std::map<std::pair<std::string, std::string>, double> oracle;
  for (const auto& e : ev) {
    oracle[{e.timestamp.substr(0, 7), std::string(region_name(e.region)) + "." + instrument_name(e.instrument)}] +=
        e.value;
  }
  const MonthlySurprises m = aggregate_surprises_to_monthly(ev, "2005-06", 2);
  for (int t = 0; t < 2; ++t) {
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      const double expected = oracle[{m.periods[t], m.columns[c]}];
      EXPECT_NEAR(m.values(t, c), expected, 1e-14);
    }
  }
}

TEST(Surprises, AggregationIsAdditive) {
  Rng rng(32);
  std::vector<RawEventRecord> all, first, second;
  for (int d = 0; d < 20; ++d) {
    const std::string ts = format_month(parse_month("2010-01") + d % 5) + "-0" + std::to_string(1 + d % 9);
    auto e = event(ts + "T" + std::to_string(d), d % 2 ? Region::US : Region::EA, Instrument::rate_surprise,
                   EventWindow::press_release, rng.normal());
    all.push_back(e);
    (d < 9 ? first : second).push_back(e);
  }
  const auto whole = aggregate_surprises_to_monthly(all, "2010-01", 5);
  const auto a = aggregate_surprises_to_monthly(first, "2010-01", 5);
  const auto b = aggregate_surprises_to_monthly(second, "2010-01", 5);
  EXPECT_LT(max_abs_diff(whole.values, a.values + b.values), 1e-14);
}

TEST(Surprises, DuplicatesAreListed) {
  const std::vector<RawEventRecord> ev{
      event("2001-03-20", Region::US, Instrument::rate_surprise, EventWindow::conference, 0.1),
      event("2001-03-20", Region::US, Instrument::rate_surprise, EventWindow::conference, 0.2)};
  const std::string msg = testutil::error_message_of([&] { aggregate_surprises_to_monthly(ev, "2001-03", 1); });
  EXPECT_NE(msg.find("2001-03-20/US/rate_surprise/conference"), std::string::npos) << msg;
}

TEST(Surprises, LoadEventsCsv) {
  const auto dir = testutil::scratch_dir("events");
  {
    std::ofstream out(dir / "events.csv");
    out << "timestamp,region,instrument,window,value\n"
        << "2002-01-30T14:15,US,rate_surprise,press_release,0.05\n"
        << "2002-01-30T14:15,US,rate_surprise,conference,-0.01\n"
        << "2002-02-07T13:45,EA,stock_surprise,conference,0.3\n";
  }
  const auto ev = load_events_csv((dir / "events.csv").string());
  ASSERT_EQ(ev.size(), 3u);
  EXPECT_EQ(ev[2].region, Region::EA);
  const auto m = aggregate_surprises_to_monthly(ev, "2002-01", 2);
  EXPECT_NEAR(m.values(0, 0), 0.04, 1e-15);
  EXPECT_NEAR(m.values(1, 3), 0.3, 1e-15);
  {
    std::ofstream out(dir / "bad.csv");
    out << "timestamp,region,instrument,window,value\n2002-01-30,XX,rate_surprise,conference,1\n";
  }
  EXPECT_EQ(testutil::error_kind_of([&] { load_events_csv((dir / "bad.csv").string()); }), ErrorKind::data);
}

// ---------------------------------------------------------------------------

TEST(Transforms, LogOfOneAndE) {
  Eigen::MatrixXd raw(2, 1);
  raw << 1.0, std::numbers::e;
  const Eigen::MatrixXd out = apply_transforms(raw, {Transform::log100});
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_NEAR(out(1, 0), 100.0, 1e-12);
}

TEST(Transforms, ElementwiseOracle) {
  Rng rng(33);
  Eigen::MatrixXd raw(25, 2);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = 0.01 + 10.0 * rng.uniform();
  const Eigen::MatrixXd out = apply_transforms(raw, {Transform::log100, Transform::pct});
  for (int r = 0; r < 25; ++r) {
    EXPECT_NEAR(out(r, 0), 100.0 * std::log(raw(r, 0)), 1e-12);
    EXPECT_EQ(out(r, 1), raw(r, 1));
  }
}

TEST(Transforms, NonpositiveUnderLogReportsCoordinates) {
  Eigen::MatrixXd raw(3, 2);
  raw << 1, 1, 2, 2, 3, -1;
  const std::string msg = testutil::error_message_of(
      [&] { apply_transforms(raw, {Transform::pct, Transform::log100}, {"a.x", "b.y"}); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("b.y"), std::string::npos) << msg;
  EXPECT_EQ(testutil::error_kind_of([] { parse_transform("log"); }), ErrorKind::config);
}

// ---------------------------------------------------------------------------

namespace {

PanelDataset panel_of(const Eigen::MatrixXd& v) {
  PanelDataset p;
  p.values = v;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    p.columns.push_back("b.v" + std::to_string(c));
    p.transforms.push_back(Transform::pct);
  }
  p.ledger = identity_ledger(v.cols());
  return p;
}

}  // namespace

TEST(Standardize, SmallColumn) {
  Eigen::MatrixXd v(3, 1);
  v << 1, 2, 3;
  const PanelDataset out = standardize(panel_of(v));
  EXPECT_NEAR(out.values(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(out.values(1, 0), 0.0, 1e-15);
  EXPECT_NEAR(out.values(2, 0), 1.0, 1e-15);
  EXPECT_EQ(out.ledger.mean(0), 2.0);
  EXPECT_NEAR(out.ledger.sd(0), 1.0, 1e-15);
}

TEST(Standardize, MomentsAndRoundTrip) {
  Rng rng(34);
  Eigen::MatrixXd v = random_matrix(60, 4, rng, 3.0);
  v.col(2).array() += 50.0;
  const PanelDataset out = standardize(panel_of(v));
  for (int c = 0; c < 4; ++c) {
    EXPECT_NEAR(out.values.col(c).mean(), 0.0, 1e-10);
    EXPECT_NEAR(out.values.col(c).squaredNorm() / 59.0, 1.0, 1e-10);
  }
  EXPECT_LT(max_abs_diff(unstandardize(out.values, out.ledger), v), 1e-10);
  const PanelDataset twice = standardize(out);
  EXPECT_LT(max_abs_diff(twice.values, out.values), 1e-10);
  EXPECT_LT(max_abs_diff(twice.ledger.mean, out.ledger.mean), 1e-10);
  EXPECT_LT(max_abs_diff(twice.ledger.sd, out.ledger.sd), 1e-10);
}

TEST(Standardize, AlreadyStandardizedColumnIsUnchanged) {
  Eigen::MatrixXd v(4, 1);
  v << -1.5, -0.5, 0.5, 1.5;
  v /= std::sqrt(v.squaredNorm() / 3.0);
  const PanelDataset out = standardize(panel_of(v));
  EXPECT_LT(max_abs_diff(out.values, v), 1e-12);
  EXPECT_NEAR(out.ledger.mean(0), 0.0, 1e-12);
  EXPECT_NEAR(out.ledger.sd(0), 1.0, 1e-12);
}

TEST(Standardize, ConstantColumnIsNamed) {
  Eigen::MatrixXd v(3, 2);
  v << 1, 5, 2, 5, 3, 5;
  const std::string msg = testutil::error_message_of([&] { standardize(panel_of(v)); });
  EXPECT_NE(msg.find("b.v1"), std::string::npos) << msg;
}

// ---------------------------------------------------------------------------

TEST(Weights, EqualPartnersAndSinglePartner) {
  Eigen::MatrixXd flows(3, 3);
  flows << 9, 2, 2, 3, 0, 0, 1, 1, 7;
  const Eigen::MatrixXd w = build_weights(WeightKind::export_share, {flows});
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 2), 0.5);
  EXPECT_EQ(w(1, 0), 1.0);
  EXPECT_EQ(w(1, 1), 0.0);
  EXPECT_EQ(w(2, 2), 0.0);
}

TEST(Weights, MeanThenNormalizeOracle) {
  Rng rng(35);
  std::vector<Eigen::MatrixXd> flows;
  for (int t = 0; t < 3; ++t) flows.push_back(random_matrix(3, 3, rng).cwiseAbs());
  const Eigen::MatrixXd w = build_weights(WeightKind::export_share, flows);
  Eigen::MatrixXd oracle = (flows[0] + flows[1] + flows[2]) / 3.0;
  for (int i = 0; i < 3; ++i) {
    oracle(i, i) = 0.0;
    oracle.row(i) /= oracle.row(i).sum();
  }
  EXPECT_LT(max_abs_diff(w, oracle), 1e-12);

  std::vector<Eigen::MatrixXd> gdp;
  for (int t = 0; t < 3; ++t) gdp.push_back(random_matrix(1, 3, rng).cwiseAbs());
  const Eigen::MatrixXd agg = build_weights(WeightKind::gdp_share, gdp);
  const WeightMatrix full = combine_weights(agg, w);
  EXPECT_TRUE(WeightMatrix::violations(full.matrix()).empty());
}

TEST(Weights, AllZeroRowIsRejected) {
  Eigen::MatrixXd flows(2, 2);
  flows << 0, 1, 5, 0;
  flows(1, 0) = 0.0;
  EXPECT_EQ(testutil::error_kind_of([&] { build_weights(WeightKind::export_share, {flows}); }), ErrorKind::data);
}

TEST(Weights, FlowsCsvRoundTripKeepsRowStochasticity) {
  const auto dir = testutil::scratch_dir("flows");
  Rng rng(36);
  Eigen::MatrixXd raw = random_matrix(3, 3, rng).cwiseAbs();
  const Eigen::MatrixXd w = build_weights(WeightKind::export_share, {raw});
  write_flows_csv((dir / "w.csv").string(), w, {"a", "b", "c"}, {"a", "b", "c"}, "2000-01");
  const auto loaded = load_flows_csv((dir / "w.csv").string());
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded[0], w);
  const Eigen::MatrixXd again = build_weights(WeightKind::export_share, loaded);
  EXPECT_LT(max_abs_diff(again, w), 1e-15);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(again.row(i).sum(), 1.0, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Blocks, CsvRoundTripAndAssembly) {
  const auto dir = testutil::scratch_dir("blocks");
  Rng rng(37);
  const Eigen::MatrixXd a = random_matrix(6, 2, rng).cwiseAbs().array() + 1.0;
  const Eigen::MatrixXd b = random_matrix(5, 1, rng);
  write_block_csv((dir / "a.csv").string(), month_range("2000-01", 6), {"agg.x", "agg.y"}, a);
  write_block_csv((dir / "b.csv").string(), month_range("2000-02", 5), {"c01.z"}, b);
  const BlockTable ta = load_block_csv((dir / "a.csv").string());
  EXPECT_EQ(ta.values, a);
  const PanelDataset p = assemble_panel({ta, load_block_csv((dir / "b.csv").string())}, {{"agg.y", "100log"}}, 3);
  EXPECT_EQ(p.periods.front(), "2000-02");
  EXPECT_EQ(p.periods.size(), 5u);
  EXPECT_EQ(p.columns, (std::vector<std::string>{"agg.x", "agg.y", "c01.z"}));
  EXPECT_EQ(p.transforms[1], Transform::log100);
  EXPECT_NEAR(p.values(0, 1), 100.0 * std::log(a(1, 1)), 1e-12);
  EXPECT_EQ(p.values(4, 2), b(4, 0));
  EXPECT_EQ(testutil::error_kind_of([&] { assemble_panel({ta}, {}, 3); }), ErrorKind::data);
}

TEST(Blocks, MissingPeriodAndBadColumnId) {
  const auto dir = testutil::scratch_dir("gaps");
  {
    std::ofstream out(dir / "gap.csv");
    out << "period,agg.x\n2000-01,1\n2000-03,2\n";
  }
  const std::string msg = testutil::error_message_of([&] { load_block_csv((dir / "gap.csv").string()); });
  EXPECT_NE(msg.find("2000-03"), std::string::npos) << msg;
  {
    std::ofstream out(dir / "id.csv");
    out << "period,x\n2000-01,1\n";
  }
  EXPECT_EQ(testutil::error_kind_of([&] { load_block_csv((dir / "id.csv").string()); }), ErrorKind::data);
  {
    std::ofstream out(dir / "nan.csv");
    out << "period,agg.x\n2000-01,abc\n";
  }
  EXPECT_EQ(testutil::error_kind_of([&] { load_block_csv((dir / "nan.csv").string()); }), ErrorKind::data);
}
