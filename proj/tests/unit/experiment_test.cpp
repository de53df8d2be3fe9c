#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "mcast/experiment/experiment.hpp"

namespace mcast::exp {
namespace {

const std::string kFixtures = MCAST_FIXTURE_DIR;

GoodputRow row(uint64_t t_end_ms, std::string r, uint16_t tag, uint64_t bytes) {
  return {SimTime::from_ms(t_end_ms), std::move(r), RouteTag{tag}, bytes};
}

ScenarioConfig short_run(unsigned trees, SimTime duration = SimTime::from_seconds(2)) {
  ScenarioConfig cfg;
  cfg.max_trees = trees;
  cfg.block_bytes = 400'000'000;
  cfg.duration = duration;
  return cfg;
}

TEST(FoldRows, MeansDivideByEveryWindowOfTheRun) {
  const SimTime w = SimTime::from_ms(100);
  const std::vector<GoodputRow> rows{
      row(100, "r1", 1, 1000), row(100, "r1", 2, 500), row(100, "r2", 1, 0),
      row(200, "r1", 1, 0),    row(200, "r1", 2, 0),   row(200, "r2", 1, 2000),
  };
  const GoodputFold f = fold_rows(rows, w);
  EXPECT_EQ(f.windows, 2u);
  EXPECT_EQ(f.total_bytes, 3500u);
  EXPECT_EQ(f.receiver_bytes.at("r1"), 1500u);
  // 1500 B over two 0.1 s windows.
  EXPECT_DOUBLE_EQ(f.receiver_mean_bps.at("r1"), 1500 * 8 / 0.2);
  EXPECT_DOUBLE_EQ(f.receiver_mean_bps.at("r2"), 2000 * 8 / 0.2);
  EXPECT_DOUBLE_EQ(f.tree_mean_bps.at({"r1", 2}), 500 * 8 / 0.2);
  EXPECT_TRUE(f.pre_failure_bps.empty());
  EXPECT_DOUBLE_EQ(row_goodput_bps(rows[0], w), 80'000.0);
}

TEST(FoldRows, FailureSplitsAtWindowBoundaries) {
  const SimTime w = SimTime::from_ms(100);
  std::vector<GoodputRow> rows;
  for (uint64_t t = 100; t <= 500; t += 100) rows.push_back(row(t, "r", 1, t));
  // Failure at 250 ms: windows ending at 100, 200 are before; the one
  // ending at 300 straddles it; 400 and 500 are after.
  const GoodputFold f = fold_rows(rows, w, SimTime::from_ms(250));
  EXPECT_DOUBLE_EQ(f.pre_failure_bps.at("r"), (100 + 200) * 8 / 0.2);
  EXPECT_DOUBLE_EQ(f.post_failure_bps.at("r"), (400 + 500) * 8 / 0.2);
  const GoodputFold g = fold_rows(rows, w, SimTime::from_ms(200));
  EXPECT_DOUBLE_EQ(g.post_failure_bps.at("r"), (300 + 400 + 500) * 8 / 0.3);
}

TEST(Csv, RoundTripsRows) {
  const std::vector<GoodputRow> rows{row(100, "r1", 1, 18225), row(60000, "r3", 4095, 0)};
  std::stringstream ss;
  write_csv(ss, rows, SimTime::from_ms(100));
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "t_end_s,receiver,route_tag,bytes,goodput_bps");
  std::string first;
  std::getline(ss, first);
  EXPECT_EQ(first, "0.1,r1,1,18225,1458000");
  ss.seekg(0);
  const auto back = read_csv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].t_end, rows[i].t_end);
    EXPECT_EQ(back[i].receiver, rows[i].receiver);
    EXPECT_EQ(back[i].route, rows[i].route);
    EXPECT_EQ(back[i].bytes, rows[i].bytes);
  }
}

TEST(Csv, RejectsBadInput) {
  std::stringstream no_header("0.1,r1,1,2,3\n");
  EXPECT_THROW(read_csv(no_header), std::runtime_error);
  std::stringstream short_line("t_end_s,receiver,route_tag,bytes,goodput_bps\n0.1,r1,1\n");
  EXPECT_THROW(read_csv(short_line), std::runtime_error);
}

TEST(Validate, NamesTheBadField) {
  const topo::Topology paper = topo::paper_topology();
  auto expect_bad = [&](ScenarioConfig cfg, const std::string& field) {
    try {
      validate(cfg, paper);
      ADD_FAILURE() << "accepted config with bad " << field;
    } catch (const ConfigError& e) {
      EXPECT_EQ(std::string(e.what()).rfind(field, 0), 0u) << e.what();
    }
  };
  ScenarioConfig ok;
  EXPECT_NO_THROW(validate(ok, paper));
  ScenarioConfig c = ok;
  c.max_trees = 0;
  expect_bad(c, "trees");
  c = ok;
  c.block_bytes = 0;
  expect_bad(c, "bytes");
  c = ok;
  c.duration = SimTime::from_ms(150);
  expect_bad(c, "duration");
  c = ok;
  c.sender = "sw0";
  expect_bad(c, "sender");
  c = ok;
  c.receivers = {"r1", "r1"};
  expect_bad(c, "receiver");
  c = ok;
  c.receivers = {"s"};
  expect_bad(c, "receiver");
  c = ok;
  c.payload_bytes = 1459;
  expect_bad(c, "payload");
  c = ok;
  c.failure = LinkFailure{"r1", "r2", SimTime::from_seconds(1)};
  expect_bad(c, "link");
  EXPECT_THROW(load_topology("/nonexistent/x.topo"), ConfigError);
}

TEST(RunScenario, SingleTreeRunsAtTheBottleneckShare) {
  const RunResult r = run_scenario(short_run(1));
  ASSERT_TRUE(r.summary.ok) << r.summary.failure;
  EXPECT_EQ(r.summary.initial_share_bps, 5'000'000u);
  EXPECT_EQ(r.summary.route_tags.size(), 1u);
  EXPECT_EQ(r.summary.goodput.windows, 20u);
  EXPECT_EQ(r.rows.size(), 20u * 3);
  for (const auto& [recv, bps] : r.summary.goodput.receiver_mean_bps) {
    EXPECT_NEAR(bps, 5e6 * 1458 / 1500, 0.02 * 5e6) << recv;
    EXPECT_TRUE(r.summary.stream_intact.at(recv));
  }
  EXPECT_FALSE(r.summary.completed);
  EXPECT_TRUE(r.summary.tables_consistent);
  for (const auto& [sw, n] : r.summary.switch_drops) EXPECT_EQ(n, 0u) << sw;
}

TEST(RunScenario, SameSeedSameOutput) {
  ScenarioConfig cfg = short_run(3, SimTime::from_seconds(1));
  cfg.pacing = host::PacingMode::Unpaced;
  const RunResult a = run_scenario(cfg);
  const RunResult b = run_scenario(cfg);
  std::stringstream ca, cb, sa, sb;
  write_csv(ca, a.rows, cfg.sample_window);
  write_csv(cb, b.rows, cfg.sample_window);
  write_summary(sa, a.summary);
  write_summary(sb, b.summary);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(RunScenario, SmallBlockCompletesEarly) {
  ScenarioConfig cfg = short_run(3, SimTime::from_seconds(10));
  cfg.block_bytes = 3'000'000;
  const RunResult r = run_scenario(cfg);
  ASSERT_TRUE(r.summary.completed);
  ASSERT_TRUE(r.summary.completion_time.has_value());
  // 3 MB over 15 Mbps of trees, 1458 of every 1500 wire bytes useful.
  EXPECT_NEAR(r.summary.completion_time->seconds(), 3e6 * 8 / (15e6 * 1458 / 1500), 0.05);
  EXPECT_LT(r.summary.end_time, cfg.duration);
  for (const auto& [recv, bytes] : r.summary.goodput.receiver_bytes) EXPECT_EQ(bytes, 3'000'000u);
}

TEST(RunScenario, BottleneckTopologyGetsOneTreeWorth) {
  ScenarioConfig cfg = short_run(3);
  cfg.topology = kFixtures + "/bottleneck.topo";
  const RunResult r = run_scenario(cfg);
  ASSERT_TRUE(r.summary.ok) << r.summary.failure;
  EXPECT_EQ(r.summary.initial_share_bps, 5'000'000u);
}

TEST(RunScenario, SummaryIsAFoldOverTheCsv) {
  const ScenarioConfig cfg = short_run(3, SimTime::from_seconds(1));
  const RunResult r = run_scenario(cfg);
  std::stringstream csv;
  write_csv(csv, r.rows, cfg.sample_window);
  const GoodputFold again = fold_rows(read_csv(csv), cfg.sample_window);
  EXPECT_EQ(again.receiver_bytes, r.summary.goodput.receiver_bytes);
  EXPECT_EQ(again.receiver_mean_bps, r.summary.goodput.receiver_mean_bps);
  EXPECT_EQ(again.tree_mean_bps, r.summary.goodput.tree_mean_bps);
}

TEST(RunScenario, FailureIsRecordedAndHealed) {
  const RunResult r = link_failure_scenario(short_run(3, SimTime::from_seconds(12)),
                                            SimTime::from_seconds(1), "sw0", "sw11");
  ASSERT_TRUE(r.summary.failure_injected.has_value());
  EXPECT_TRUE(r.summary.tables_consistent);
  EXPECT_EQ(r.summary.route_tags.size(), 3u);
  for (const auto& [recv, bps] : r.summary.goodput.post_failure_bps) {
    EXPECT_NEAR(bps, 10e6 * 1458 / 1500, 0.02 * 10e6) << recv;
  }
}

TEST(Summary, WritesFlatKeyValuesThatReadBack) {
  const RunResult r = run_scenario(short_run(1, SimTime::from_ms(500)));
  std::stringstream ss;
  write_summary(ss, r.summary);
  const auto kv = read_summary(ss);
  EXPECT_EQ(kv.at("status"), "ok");
  EXPECT_EQ(kv.at("max_trees"), "1");
  EXPECT_EQ(kv.at("pacing"), "paced");
  EXPECT_EQ(kv.at("windows"), "5");
  EXPECT_EQ(kv.at("receivers"), "r1,r2,r3");
  EXPECT_TRUE(kv.contains("mean_goodput_bps.r2"));
  EXPECT_TRUE(kv.contains("topology_fingerprint"));
}

TEST(Compare, ReportsRatiosAndRefusesDifferentTopologies) {
  std::map<std::string, std::string> a{{"topology_fingerprint", "aa"},
                                       {"mean_goodput_bps.r1", "5"},
                                       {"total_bytes_delivered", "100"},
                                       {"completion_time_s", "30"}};
  auto b = a;
  b["mean_goodput_bps.r1"] = "15";
  b["total_bytes_delivered"] = "300";
  b["completion_time_s"] = "10";
  const auto rows = compare(a, b);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) EXPECT_DOUBLE_EQ(row.ratio, 3.0) << row.metric;
  b["topology_fingerprint"] = "bb";
  EXPECT_THROW(compare(a, b), CompareError);
  EXPECT_THROW(compare_dirs("/nonexistent/a", "/nonexistent/b"), CompareError);
}

TEST(Compare, WorksOnWrittenRunDirectories) {
  const auto base = std::filesystem::temp_directory_path() / "mcast_experiment_test";
  std::filesystem::remove_all(base);
  write_run((base / "k1").string(), run_scenario(short_run(1, SimTime::from_seconds(1))));
  write_run((base / "k3").string(), run_scenario(short_run(3, SimTime::from_seconds(1))));
  EXPECT_TRUE(std::filesystem::exists(base / "k1" / "goodput.csv"));
  const auto rows = compare_dirs((base / "k1").string(), (base / "k3").string());
  for (const auto& row : rows) {
    if (row.metric.starts_with("mean_goodput_bps.")) EXPECT_NEAR(row.ratio, 3.0, 0.05);
  }
  std::filesystem::remove_all(base);
}

}  // namespace
}  // namespace mcast::exp
