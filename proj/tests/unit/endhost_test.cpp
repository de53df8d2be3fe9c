#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mcast/controller/controller.hpp"
#include "mcast/endhost/host.hpp"

namespace mcast::host {
namespace {

using sim::SimTime;

dp::Packet seq_packet(uint64_t seq, uint32_t len = 10) {
  dp::Packet p = dp::make_packet(mgmt::group_address(1), 0x0A000000u, std::vector<std::byte>(len));
  p.global_seq = seq;
  p.session_id = 1;
  return p;
}

std::vector<uint64_t> seqs(const std::vector<dp::Packet>& pkts) {
  std::vector<uint64_t> out;
  for (const auto& p : pkts) out.push_back(p.global_seq);
  return out;
}

// ---- block and digest ----

TEST(Block, SliceMatchesBytewiseContentAndIsDeterministic) {
  const auto slice = block_slice(1000, 37);
  for (std::size_t i = 0; i < slice.size(); ++i) EXPECT_EQ(slice[i], block_byte(1000 + i));
  EXPECT_EQ(block_slice(0, 64), block_slice(0, 64));
  EXPECT_NE(block_slice(0, 64), block_slice(64, 64));
}

TEST(StreamDigest, KnownFnv1aValuesAndIncrementalUpdates) {
  StreamDigest empty;
  EXPECT_EQ(empty.value(), 0xcbf29ce484222325ull);
  StreamDigest a;
  const std::byte ch{'a'};
  a.update(std::span(&ch, 1));
  EXPECT_EQ(a.value(), 0xaf63dc4c8601ec8cull);

  const auto data = block_slice(0, 5000);
  StreamDigest whole, pieces;
  whole.update(data);
  for (std::size_t off = 0; off < data.size(); off += 1458) {
    pieces.update(std::span(data).subspan(off, std::min<std::size_t>(1458, data.size() - off)));
  }
  EXPECT_EQ(whole.value(), pieces.value());
  EXPECT_EQ(whole.length(), 5000u);
}

// ---- reassembly ----

TEST(Reassembly, DeliversInOrderAndHoldsGaps) {
  ReassemblyBuffer buf;
  EXPECT_EQ(seqs(buf.insert(seq_packet(0))), (std::vector<uint64_t>{0}));
  EXPECT_TRUE(buf.insert(seq_packet(2)).empty());
  EXPECT_TRUE(buf.insert(seq_packet(3)).empty());
  EXPECT_EQ(buf.buffered(), 2u);
  EXPECT_EQ(seqs(buf.insert(seq_packet(1))), (std::vector<uint64_t>{1, 2, 3}));
  EXPECT_EQ(buf.next_expected(), 4u);
  EXPECT_EQ(buf.max_buffered(), 2u);
}

TEST(Reassembly, DuplicatesAreCountedAndDiscarded) {
  ReassemblyBuffer buf;
  buf.insert(seq_packet(0));
  buf.insert(seq_packet(2));
  EXPECT_TRUE(buf.insert(seq_packet(0)).empty());
  EXPECT_TRUE(buf.insert(seq_packet(2)).empty());
  EXPECT_EQ(buf.duplicates(), 2u);
  EXPECT_EQ(buf.buffered(), 1u);
}

TEST(Reassembly, OverflowGivesUpTheLeadingGap) {
  ReassemblyBuffer buf(4);
  for (uint64_t s = 2; s <= 5; ++s) EXPECT_TRUE(buf.insert(seq_packet(s)).empty());
  // Fifth buffered packet: seqs 0 and 1 are declared lost.
  EXPECT_EQ(seqs(buf.insert(seq_packet(6))), (std::vector<uint64_t>{2, 3, 4, 5, 6}));
  EXPECT_EQ(buf.skipped(), 2u);
  EXPECT_EQ(buf.next_expected(), 7u);
  EXPECT_LE(buf.max_buffered(), 4u);
  EXPECT_TRUE(buf.insert(seq_packet(1)).empty());
  EXPECT_EQ(buf.duplicates(), 1u);
}

TEST(Reassembly, OverflowFlushesOnlyTheContiguousRun) {
  ReassemblyBuffer buf(3);
  for (uint64_t s : {1, 2, 5}) buf.insert(seq_packet(s));
  EXPECT_EQ(seqs(buf.insert(seq_packet(7))), (std::vector<uint64_t>{1, 2}));
  EXPECT_EQ(buf.next_expected(), 3u);
  EXPECT_EQ(buf.buffered(), 2u);
  EXPECT_EQ(seqs(buf.insert(seq_packet(3))), (std::vector<uint64_t>{3}));
}

TEST(Reassembly, StaleGapIsGivenUpAfterTheTimeout) {
  ReassemblyBuffer buf(4096, SimTime::from_ms(500));
  EXPECT_FALSE(buf.gap_deadline().has_value());
  buf.insert(seq_packet(1), SimTime::from_ms(100));
  buf.insert(seq_packet(2), SimTime::from_ms(300));
  EXPECT_EQ(buf.gap_deadline(), SimTime::from_ms(600));
  EXPECT_TRUE(buf.expire(SimTime::from_ms(599)).empty());
  EXPECT_EQ(seqs(buf.expire(SimTime::from_ms(600))), (std::vector<uint64_t>{1, 2}));
  EXPECT_EQ(buf.skipped(), 1u);
  EXPECT_FALSE(buf.gap_deadline().has_value());
}

TEST(Reassembly, EachNewGapGetsAFreshClock) {
  ReassemblyBuffer buf(4096, SimTime::from_ms(500));
  buf.insert(seq_packet(1), SimTime::from_ms(0));
  buf.insert(seq_packet(3), SimTime::from_ms(100));
  // Filling seq 0 releases 1 and leaves a new gap in front of 3.
  EXPECT_EQ(seqs(buf.insert(seq_packet(0), SimTime::from_ms(400))), (std::vector<uint64_t>{0, 1}));
  EXPECT_EQ(buf.gap_deadline(), SimTime::from_ms(900));
  // A late arrival past the deadline gives the gap up before inserting.
  EXPECT_EQ(seqs(buf.insert(seq_packet(5), SimTime::from_ms(950))), (std::vector<uint64_t>{3}));
  EXPECT_EQ(buf.skipped(), 1u);
  EXPECT_EQ(buf.gap_deadline(), SimTime::from_ms(1450));
}

TEST(ReassemblyProperty, RandomLossReorderAndDuplication) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 200; ++round) {
    const std::size_t limit = 1 + rng() % 16;
    const uint64_t n = 1 + rng() % 300;
    std::vector<uint64_t> arrivals;
    std::bernoulli_distribution lose(0.1), dup(0.05);
    for (uint64_t s = 0; s < n; ++s) {
      if (lose(rng)) continue;
      arrivals.push_back(s);
      if (dup(rng)) arrivals.push_back(s);
    }
    // Bounded reordering: shuffle within small blocks.
    for (std::size_t i = 0; i < arrivals.size(); i += 8) {
      std::shuffle(arrivals.begin() + i, arrivals.begin() + std::min(i + 8, arrivals.size()), rng);
    }
    ReassemblyBuffer buf(limit);
    std::vector<uint64_t> out;
    for (uint64_t s : arrivals) {
      for (const auto& p : buf.insert(seq_packet(s))) out.push_back(p.global_seq);
      ASSERT_LE(buf.buffered(), limit);
    }
    ASSERT_TRUE(std::is_sorted(out.begin(), out.end()));
    ASSERT_EQ(std::adjacent_find(out.begin(), out.end()), out.end());
    // Nothing delivered that was never sent, and nothing buffered is dropped.
    std::set<uint64_t> sent(arrivals.begin(), arrivals.end());
    for (uint64_t s : out) ASSERT_TRUE(sent.contains(s));
    ASSERT_EQ(out.size() + buf.buffered() + buf.duplicates(), arrivals.size());
  }
}

// ---- load splitter ----

struct Drive {
  std::map<RouteTag, uint64_t> packets;
  uint64_t bytes = 0;
};

// Asks for packets as soon as the splitter allows until `end`.
Drive drive(LoadSplitter& ls, SimTime start, SimTime end, uint32_t wire = 1500) {
  Drive d;
  SimTime now = start;
  while (now < end) {
    const SplitDecision dec = ls.next(now, wire);
    if (const auto* c = std::get_if<SplitChoice>(&dec)) {
      ++d.packets[c->route];
      d.bytes += wire;
    } else {
      const SimTime until = std::get<SplitBlocked>(dec).until;
      EXPECT_GT(until, now);
      now = until;
    }
  }
  return d;
}

TEST(LoadSplitter, NoTreesMeansPaused) {
  LoadSplitter ls;
  EXPECT_TRUE(ls.paused());
  EXPECT_EQ(std::get<SplitBlocked>(ls.next(SimTime{}, 100)).until, SimTime::max());
}

TEST(LoadSplitter, PacedRateNeverExceedsShare) {
  LoadSplitter ls(PacingMode::Paced);
  const std::vector<TreeShare> one{{RouteTag{1}, 5'000'000}};
  ls.set_trees(one, SimTime{});
  const Drive d = drive(ls, SimTime{}, SimTime::from_seconds(10));
  const uint64_t bucket_bits = LoadSplitter::kBucketPackets * 1500 * 8;
  EXPECT_LE(d.bytes * 8, 50'000'000u + bucket_bits);
  EXPECT_GE(d.bytes * 8, 50'000'000u - 1500 * 8);
}

TEST(LoadSplitter, BlockedUntilIsExact) {
  LoadSplitter ls(PacingMode::Paced);
  const std::vector<TreeShare> one{{RouteTag{1}, 5'000'000}};
  ls.set_trees(one, SimTime{});
  ASSERT_TRUE(std::holds_alternative<SplitChoice>(ls.next(SimTime{}, 1500)));
  ASSERT_TRUE(std::holds_alternative<SplitChoice>(ls.next(SimTime{}, 1500)));
  const auto blocked = std::get<SplitBlocked>(ls.next(SimTime{}, 1500));
  EXPECT_EQ(blocked.until, SimTime::from_us(2400));
  EXPECT_TRUE(std::holds_alternative<SplitBlocked>(ls.next(SimTime::from_ns(2'399'999), 1500)));
  EXPECT_TRUE(std::holds_alternative<SplitChoice>(ls.next(blocked.until, 1500)));
}

TEST(LoadSplitter, UnpacedRunsAtTwiceTheShare) {
  LoadSplitter ls(PacingMode::Unpaced);
  const std::vector<TreeShare> one{{RouteTag{1}, 5'000'000}};
  ls.set_trees(one, SimTime{});
  const Drive d = drive(ls, SimTime{}, SimTime::from_seconds(1));
  EXPECT_NEAR(static_cast<double>(d.bytes * 8), 10e6, 3 * 1500 * 8);
}

TEST(LoadSplitter, PacketsSplitInProportionToShares) {
  LoadSplitter ls(PacingMode::Paced);
  const std::vector<TreeShare> trees{{RouteTag{1}, 10'000'000}, {RouteTag{2}, 5'000'000},
                                     {RouteTag{3}, 5'000'000}};
  ls.set_trees(trees, SimTime{}, 1);
  const Drive d = drive(ls, SimTime{}, SimTime::from_seconds(4));
  const double total = static_cast<double>(d.bytes / 1500);
  EXPECT_NEAR(d.packets.at(RouteTag{1}) / total, 0.5, 0.002);
  EXPECT_NEAR(d.packets.at(RouteTag{2}) / total, 0.25, 0.002);
  EXPECT_NEAR(d.packets.at(RouteTag{3}) / total, 0.25, 0.002);
  EXPECT_EQ(ls.trees(), trees);
}

TEST(LoadSplitter, EqualSharesAlternate) {
  LoadSplitter ls(PacingMode::Paced);
  const std::vector<TreeShare> trees{{RouteTag{4}, 5'000'000}, {RouteTag{9}, 5'000'000}};
  ls.set_trees(trees, SimTime{}, 1);
  std::vector<uint16_t> order;
  for (int i = 0; i < 4; ++i) order.push_back(std::get<SplitChoice>(ls.next(SimTime{}, 1500)).route.value);
  EXPECT_EQ(order, (std::vector<uint16_t>{9, 4, 9, 4}));
}

TEST(LoadSplitter, SurvivingTreesKeepTheirBucketLevel) {
  LoadSplitter ls(PacingMode::Paced);
  const std::vector<TreeShare> a{{RouteTag{1}, 5'000'000}};
  ls.set_trees(a, SimTime{});
  ls.next(SimTime{}, 1500);
  ls.next(SimTime{}, 1500);
  ls.set_trees(a, SimTime{});
  EXPECT_TRUE(std::holds_alternative<SplitBlocked>(ls.next(SimTime{}, 1500)));
  // A different share is a new tree and starts full.
  const std::vector<TreeShare> b{{RouteTag{1}, 4'000'000}};
  ls.set_trees(b, SimTime{});
  EXPECT_TRUE(std::holds_alternative<SplitChoice>(ls.next(SimTime{}, 1500)));
}

TEST(LoadSplitterProperty, LongRunRateMatchesTotalShare) {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 30; ++round) {
    std::vector<TreeShare> trees;
    uint64_t total = 0;
    const int k = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < k; ++i) {
      const uint64_t share = (1 + rng() % 20) * 1'000'000;
      trees.push_back({RouteTag{static_cast<uint16_t>(i + 1)}, share});
      total += share;
    }
    LoadSplitter ls(PacingMode::Paced);
    ls.set_trees(trees, SimTime{}, rng());
    Drive d = drive(ls, SimTime{}, SimTime::from_seconds(2));
    const double bits = static_cast<double>(d.bytes * 8);
    EXPECT_LE(bits, 2.0 * total + k * LoadSplitter::kBucketPackets * 1500.0 * 8);
    EXPECT_GE(bits, 2.0 * total * 0.99);
    for (const auto& t : trees) {
      const double tree_bits = d.packets[t.route] * 1500.0 * 8;
      EXPECT_LE(tree_bits, 2.0 * t.share_bps + LoadSplitter::kBucketPackets * 1500.0 * 8);
    }
  }
}

// ---- sender and receiver over the built-in topology ----

constexpr NodeId kS{0}, kR1{1}, kR2{2}, kR3{3}, kSw0{4}, kSw11{5};

class HostsTest : public ::testing::Test {
 protected:
  HostsTest()
      : topo_(topo::paper_topology()),
        net_(sim_, topo_),
        ctl_(net_, topo_),
        sender_(net_, kS),
        r1_(net_, kR1),
        r2_(net_, kR2),
        r3_(net_, kR3) {
    ctl_.start();
  }

  void join_all(uint32_t group = 1) {
    for (Receiver* r : receivers()) r->join(group);
    sim_.run_until(sim_.now() + SimTime::from_ms(5));
    for (Receiver* r : receivers()) ASSERT_TRUE(r->confirmed(group));
  }
  std::vector<Receiver*> receivers() { return {&r1_, &r2_, &r3_}; }

  sim::Simulator sim_{7};
  topo::Topology topo_;
  dp::Network net_;
  ctl::Controller ctl_;
  Sender sender_;
  Receiver r1_, r2_, r3_;
};

TEST_F(HostsTest, WholeBlockArrivesIntact) {
  join_all();
  const uint64_t len = 2'000'000 + 123;
  sender_.start_session(1, len);
  sim_.run_until(SimTime::from_seconds(5));
  EXPECT_EQ(sender_.phase(), SenderPhase::Finished);
  EXPECT_EQ(sender_.remaining_bytes(), 0u);
  EXPECT_EQ(sender_.trees().size(), 3u);

  StreamDigest expected;
  expected.update(block_slice(0, len));
  for (Receiver* r : receivers()) {
    const SessionRx* rx = r->session(sender_.session_id());
    ASSERT_NE(rx, nullptr);
    EXPECT_EQ(rx->delivered_bytes, len);
    EXPECT_EQ(rx->digest.value(), expected.value());
    EXPECT_EQ(rx->buffer.skipped(), 0u);
    EXPECT_EQ(rx->bytes_per_tree, sender_.bytes_per_tree());
  }
  // SessionEnd reached the controller and removed the trees.
  EXPECT_EQ(ctl_.session(sender_.session_id())->state, ctl::SessionState::Ended);
  EXPECT_TRUE(ctl_.tables_consistent());
  // Per-tree sequence numbers are dense.
  for (const auto& [tag, n] : sender_.packets_per_tree()) {
    EXPECT_EQ(sender_.next_subflow_seq().at(tag), n);
  }
  uint64_t packets = 0;
  for (const auto& [tag, n] : sender_.packets_per_tree()) packets += n;
  EXPECT_EQ(sender_.next_global_seq(), packets);
}

TEST_F(HostsTest, TransmissionStartsOnlyAfterTheReply) {
  join_all();
  sender_.start_session(1, 1'000'000);
  EXPECT_EQ(sender_.phase(), SenderPhase::Initiating);
  EXPECT_EQ(sender_.next_global_seq(), 0u);
  sim_.run_until(sim_.now() + SimTime::from_ms(2));
  EXPECT_EQ(sender_.phase(), SenderPhase::Sending);
  ASSERT_TRUE(sender_.started_at().has_value());
  // Every flow-table write for the session precedes the sender's start.
  for (const auto& w : ctl_.table_writes()) EXPECT_LE(w.at, *sender_.started_at());
}

TEST_F(HostsTest, InitWithoutMembersIsRefused) {
  sender_.start_session(1, 1000);
  sim_.run_until(SimTime::from_ms(50));
  EXPECT_EQ(sender_.phase(), SenderPhase::Failed);
  ASSERT_EQ(sender_.errors().size(), 1u);
}

TEST_F(HostsTest, LostInitsAreRetriedThenAbandoned) {
  join_all();
  sender_.set_mgmt_filter([](const mgmt::ManagementMessage&) { return true; });
  sender_.start_session(1, 1000);
  sim_.run_until(sim_.now() + SimTime::from_seconds(1));
  EXPECT_EQ(sender_.phase(), SenderPhase::Failed);
  EXPECT_EQ(sender_.mgmt_sent().size(), 3u);
  EXPECT_TRUE(ctl_.sessions().empty());
}

TEST_F(HostsTest, OneLostInitStillStartsOneSession) {
  join_all();
  int drops = 1;
  sender_.set_mgmt_filter([&](const mgmt::ManagementMessage&) { return drops-- > 0; });
  sender_.start_session(1, 10'000);
  sim_.run_until(sim_.now() + SimTime::from_seconds(1));
  EXPECT_EQ(sender_.phase(), SenderPhase::Finished);
  EXPECT_EQ(ctl_.sessions().size(), 1u);
}

TEST_F(HostsTest, JoinRetriesAndGivesUp) {
  int drops = 2;
  r1_.set_mgmt_filter([&](const mgmt::ManagementMessage&) { return drops-- > 0; });
  r1_.join(5);
  EXPECT_TRUE(r1_.joined(5));
  sim_.run_until(SimTime::from_ms(250));
  EXPECT_TRUE(r1_.confirmed(5));

  r2_.set_mgmt_filter([](const mgmt::ManagementMessage&) { return true; });
  r2_.join(5);
  sim_.run_until(SimTime::from_seconds(1));
  EXPECT_FALSE(r2_.joined(5));
  EXPECT_EQ(r2_.errors().size(), 1u);
}

TEST_F(HostsTest, OutOfRangeGroupJoinIsRefused) {
  r1_.join(mgmt::kMaxGroupId + 1);
  sim_.run_until(SimTime::from_ms(10));
  EXPECT_FALSE(r1_.joined(mgmt::kMaxGroupId + 1));
  EXPECT_EQ(r1_.errors().size(), 1u);
}

TEST_F(HostsTest, LostPacketStallsDeliveryOnlyUntilTheGapTimeout) {
  join_all();
  auto pkt = [](uint64_t seq) {
    dp::Packet p = dp::make_packet(mgmt::group_address(1), mgmt::host_address(kS),
                                   std::vector<std::byte>(100));
    p.session_id = 1;
    p.global_seq = seq;
    return p;
  };
  const SimTime t0 = sim_.now();
  r1_.receive_packet(pkt(1), t0);
  r1_.receive_packet(pkt(2), t0);
  EXPECT_EQ(r1_.delivered_bytes(), 0u);
  sim_.run_until(t0 + ReassemblyBuffer::kDefaultGapTimeout);
  EXPECT_EQ(r1_.delivered_bytes(), 200u);
  EXPECT_EQ(r1_.session(1)->buffer.skipped(), 1u);
}

TEST_F(HostsTest, PacketsForUnjoinedGroupsAreStrays) {
  dp::Packet p = dp::make_packet(mgmt::group_address(9), mgmt::host_address(kS),
                                 std::vector<std::byte>(10));
  EXPECT_EQ(r1_.receive_packet(p, SimTime{}), 0u);
  EXPECT_EQ(r1_.strays(), 1u);
}

TEST_F(HostsTest, IdleReceiversReportSessionZero) {
  const auto reports = r1_.report_stats(SimTime{});
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].session_id, 0u);
  EXPECT_EQ(reports[0].receiver, kR1);
}

TEST_F(HostsTest, ReportsCarryBytesSinceThePreviousReport) {
  join_all();
  sender_.start_session(1, 500'000);
  sim_.run_until(SimTime::from_seconds(2));
  const auto reports = r1_.report_stats(sim_.now());
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].session_id, sender_.session_id());
  uint64_t reported = 0;
  for (const auto& m : r1_.mgmt_sent()) {
    if (const auto* s = std::get_if<mgmt::StatsReport>(&m.body)) reported += s->bytes_received;
  }
  EXPECT_EQ(reported, 500'000u);
}

TEST_F(HostsTest, NetworkUpdateKeepsSurvivingSubflowCounters) {
  join_all();
  sender_.start_session(1, 50'000'000);
  sim_.run_until(SimTime::from_seconds(1));
  const auto before = sender_.next_subflow_seq();
  const auto trees_before = sender_.trees();
  net_.set_link_down(kSw0, kSw11);
  ctl_.handle_link_failure(kSw0, kSw11);
  sim_.run_until(SimTime::from_ms(1010));
  const auto after_trees = sender_.trees();
  ASSERT_EQ(after_trees.size(), 2u);
  for (const TreeShare& t : after_trees) {
    const bool survived = std::find(trees_before.begin(), trees_before.end(), t) != trees_before.end();
    if (survived) EXPECT_GE(sender_.next_subflow_seq().at(t.route), before.at(t.route));
  }
  EXPECT_EQ(sender_.next_subflow_seq().size(), 2u);
  // The sender now emits at the two remaining shares.
  sim_.run_until(SimTime::from_seconds(3));
  const uint64_t left_at_3 = sender_.remaining_bytes();
  sim_.run_until(SimTime::from_seconds(5));
  const double bps = (left_at_3 - sender_.remaining_bytes()) * 8 / 2.0;
  EXPECT_NEAR(bps, 10e6 * 1458 / 1500, 0.01 * 10e6);
}

TEST_F(HostsTest, ZeroTreeUpdatePausesAndResumes) {
  join_all();
  sender_.start_session(1, 50'000'000);
  sim_.run_until(SimTime::from_ms(500));
  const uint32_t id = sender_.session_id();
  sender_.on_network_update({id, {}});
  EXPECT_EQ(sender_.phase(), SenderPhase::Paused);
  const uint64_t seq = sender_.next_global_seq();
  sim_.run_until(SimTime::from_ms(800));
  EXPECT_EQ(sender_.next_global_seq(), seq);
  sender_.on_network_update({id, {{RouteTag{7}, 5'000'000}}});
  EXPECT_EQ(sender_.phase(), SenderPhase::Sending);
  EXPECT_GT(sender_.next_global_seq(), seq);
  EXPECT_EQ(sender_.next_subflow_seq().at(RouteTag{7}), sender_.packets_per_tree().at(RouteTag{7}));
  sender_.on_network_update({id + 1, {}});  // someone else's session
  EXPECT_EQ(sender_.phase(), SenderPhase::Sending);
}

}  // namespace
}  // namespace mcast::host
