#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mcast/dataplane/network.hpp"
#include "mcast/endhost/block.hpp"
#include "mcast/endhost/load_splitter.hpp"
#include "mcast/endhost/reassembly.hpp"
#include "mcast/mgmt/message.hpp"

namespace mcast::host {

using topo::NodeId;

struct RetryPolicy {
  SimTime interval = SimTime::from_ms(100);
  unsigned max_attempts = 3;
};

// Management plumbing shared by senders and receivers: requests go to the
// management address through the host's uplink, replies come back
// addressed to the host.
class HostBase : public dp::HostAgent {
 public:
  HostBase(dp::Network& net, NodeId self);

  NodeId self() const { return self_; }
  uint32_t address() const { return mgmt::host_address(self_); }
  // Host-level failures (refusals, request timeouts), oldest first.
  const std::vector<std::string>& errors() const { return errors_; }
  // Every management message handed to the network, in order.
  const std::vector<mgmt::ManagementMessage>& mgmt_sent() const { return mgmt_sent_; }
  uint64_t malformed() const { return malformed_; }

  // Loss injection: outgoing messages for which the filter returns true are
  // discarded before reaching the wire (they still appear in mgmt_sent).
  void set_mgmt_filter(std::function<bool(const mgmt::ManagementMessage&)> filter) {
    filter_ = std::move(filter);
  }

  void on_packet(const dp::Packet& pkt) final;

 protected:
  void send_mgmt(mgmt::ManagementMessage msg);
  void fail(std::string message) { errors_.push_back(std::move(message)); }
  virtual void on_mgmt(const mgmt::ManagementMessage& msg) = 0;
  virtual void on_data(const dp::Packet& pkt) = 0;

  dp::Network& net_;
  sim::Simulator& sim_;
  NodeId self_;

 private:
  std::vector<std::string> errors_;
  std::vector<mgmt::ManagementMessage> mgmt_sent_;
  std::function<bool(const mgmt::ManagementMessage&)> filter_;
  uint64_t malformed_ = 0;
};

struct SenderConfig {
  uint32_t payload_bytes = dp::kMaxPayload;
  PacingMode pacing = PacingMode::Paced;
  RetryPolicy retry;
  // SessionEnd waits this long after the last packet leaves, so the tail of
  // the block is not cut off by the controller removing its entries.
  SimTime end_linger = SimTime::from_seconds(1);
};

enum class SenderPhase : uint8_t { Idle, Initiating, Sending, Paused, Finished, Failed };

struct SplitDone {};
using Emission = std::variant<dp::Packet, SplitBlocked, SplitDone>;

class Sender : public HostBase {
 public:
  Sender(dp::Network& net, NodeId self, SenderConfig config = {});

  // Sends SessionInit (retried); transmission starts when the reply lands.
  void start_session(uint32_t group_id, uint64_t block_len);
  // Builds the next data packet and debits the splitter and remaining bytes.
  Emission split_next(SimTime now);
  // Requires remaining_bytes() == 0. SessionEnd (fire-and-forget) follows
  // after the configured linger.
  void end_session();
  void on_network_update(const mgmt::NetworkUpdate& msg);

  SenderPhase phase() const { return phase_; }
  uint32_t session_id() const { return session_id_; }
  uint32_t group_id() const { return group_id_; }
  uint64_t block_len() const { return block_len_; }
  uint64_t remaining_bytes() const { return remaining_; }
  std::vector<TreeShare> trees() const { return splitter_.trees(); }
  std::optional<SimTime> started_at() const { return started_at_; }

  // Per tag: payload bytes and packets emitted, and the next subflow_seq.
  const std::map<RouteTag, uint64_t>& bytes_per_tree() const { return bytes_per_tree_; }
  const std::map<RouteTag, uint64_t>& packets_per_tree() const { return packets_per_tree_; }
  const std::map<RouteTag, uint64_t>& next_subflow_seq() const { return next_subflow_seq_; }
  uint64_t next_global_seq() const { return next_global_seq_; }

 private:
  void on_mgmt(const mgmt::ManagementMessage& msg) override;
  void on_data(const dp::Packet&) override {}
  void send_init();
  void install_trees(std::span<const TreeShare> trees);
  void pump();

  SenderConfig config_;
  LoadSplitter splitter_;
  SenderPhase phase_ = SenderPhase::Idle;
  uint32_t group_id_ = 0;
  uint32_t session_id_ = 0;
  uint64_t block_len_ = 0;
  uint64_t remaining_ = 0;
  uint64_t next_global_seq_ = 0;
  unsigned init_attempts_ = 0;
  uint64_t pump_generation_ = 0;
  std::optional<SimTime> started_at_;
  std::map<RouteTag, uint64_t> next_subflow_seq_;
  std::map<RouteTag, uint64_t> bytes_per_tree_;
  std::map<RouteTag, uint64_t> packets_per_tree_;
};

struct ReceiverConfig {
  std::size_t buffer_limit = ReassemblyBuffer::kDefaultLimit;
  SimTime gap_timeout = ReassemblyBuffer::kDefaultGapTimeout;
  bool reporting = true;
  SimTime report_interval = SimTime::from_seconds(1);
  SimTime sample_window = SimTime::from_ms(100);
  RetryPolicy retry;
};

struct SessionRx {
  ReassemblyBuffer buffer;
  uint64_t delivered_bytes = 0;
  StreamDigest digest;
  std::map<RouteTag, uint64_t> bytes_per_tree;  // attributed at delivery
  std::optional<SimTime> last_delivery;
  uint64_t report_bytes = 0;  // since the previous StatsReport
};

class Receiver : public HostBase {
 public:
  Receiver(dp::Network& net, NodeId self, ReceiverConfig config = {});

  // GroupJoin is retried until a reply arrives; a Rejected reply or a
  // timeout undoes the local membership and records an error.
  void join(uint32_t group_id);
  // Fire-and-forget GroupLeave.
  void leave(uint32_t group_id);

  // Returns application bytes delivered by this packet.
  uint64_t receive_packet(const dp::Packet& pkt, SimTime now);
  // One report per known session, or a single session-0 report when idle.
  std::vector<mgmt::StatsReport> report_stats(SimTime now);

  bool joined(uint32_t group_id) const { return joined_.contains(group_id); }
  bool confirmed(uint32_t group_id) const { return confirmed_.contains(group_id); }
  const std::map<uint32_t, SessionRx>& sessions() const { return sessions_; }
  const SessionRx* session(uint32_t session_id) const;
  uint64_t delivered_bytes() const;
  uint64_t strays() const { return strays_; }

  // Delivered bytes per sample window (index = floor(t / window)) per tag.
  const std::vector<std::map<RouteTag, uint64_t>>& samples() const { return samples_; }
  SimTime sample_window() const { return config_.sample_window; }

 private:
  void on_mgmt(const mgmt::ManagementMessage& msg) override;
  void on_data(const dp::Packet& pkt) override { receive_packet(pkt, sim_.now()); }
  void send_join(uint32_t group_id, uint64_t generation);
  void schedule_report();
  uint64_t deliver(SessionRx& rx, std::vector<dp::Packet> packets, SimTime now);
  void arm_gap_timer(uint32_t session_id, std::optional<SimTime> previous);

  ReceiverConfig config_;
  std::set<uint32_t> joined_;
  std::set<uint32_t> confirmed_;
  std::map<uint32_t, uint64_t> join_generation_;
  std::map<uint32_t, unsigned> join_attempts_;
  std::map<uint32_t, SessionRx> sessions_;
  std::vector<std::map<RouteTag, uint64_t>> samples_;
  uint64_t strays_ = 0;
  uint64_t next_join_generation_ = 0;
  bool reporting_started_ = false;
};

}  // namespace mcast::host
