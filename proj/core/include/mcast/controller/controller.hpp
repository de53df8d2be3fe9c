#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcast/dataplane/network.hpp"
#include "mcast/mgmt/message.hpp"
#include "mcast/routing/tree.hpp"

namespace mcast::ctl {

using dp::FlowEntry;
using routing::RouteTag;
using routing::TreeSet;
using sim::SimTime;
using topo::NodeId;

struct ControllerConfig {
  unsigned max_trees = 3;
  bool member_check = false;
  SimTime member_expiry = SimTime::from_seconds(5);
  SimTime check_interval = SimTime::from_seconds(1);
};

struct GroupRecord {
  uint32_t group_id = 0;
  std::set<NodeId> members;
  std::map<NodeId, SimTime> last_seen;
};

enum class SessionState : uint8_t { Active, Paused, Ended };

struct InstalledEntry {
  NodeId sw;
  FlowEntry entry;
  friend bool operator==(const InstalledEntry&, const InstalledEntry&) = default;
};

struct SessionRecord {
  uint32_t session_id = 0;
  NodeId sender;
  uint32_t group_id = 0;
  uint64_t block_len = 0;
  TreeSet trees;
  routing::ReceiverSet receivers;  // members the current trees serve
  std::vector<InstalledEntry> installed_entries;
  SessionState state = SessionState::Active;
};

class InstallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every controller-originated message, with the time it was handed to the
// southbound channel.
struct SentMessage {
  SimTime at;
  NodeId to;
  mgmt::ManagementMessage msg;
};

// One flow-table modification.
struct TableWrite {
  SimTime at;
  uint32_t session_id = 0;
  NodeId sw;
  bool install = true;
};

// Processes one management event at a time to completion. Flow tables are
// written synchronously through the network, so every installation for a
// session lands before its reply starts its trip to the sender.
class Controller : public dp::ControlPlane {
 public:
  Controller(dp::Network& net, topo::Topology view, ControllerConfig config = {});

  // Attaches to the network and, when enabled, starts the member check timer.
  void start();

  void on_packet_in(NodeId sw, NodeId in_port, const dp::Packet& pkt) override;

  mgmt::GroupJoinReply handle_group_join(const mgmt::GroupJoin& msg);
  void handle_group_leave(const mgmt::GroupLeave& msg);
  mgmt::SessionInitReply handle_session_init(const mgmt::SessionInit& msg);
  void handle_session_end(const mgmt::SessionEnd& msg);
  void handle_stats_report(const mgmt::StatsReport& msg);
  void handle_link_failure(NodeId a, NodeId b);

  // Installs entries for every tree of the session and records them. On an
  // unknown switch, undoes what it wrote and throws InstallError.
  void install_flow_entries(SessionRecord& session);
  std::set<NodeId> periodic_member_check(SimTime now);

  const GroupRecord* group(uint32_t group_id) const;
  const SessionRecord* session(uint32_t session_id) const;
  const std::map<uint32_t, SessionRecord>& sessions() const { return sessions_; }
  const topo::Topology& view() const { return view_; }
  const ControllerConfig& config() const { return config_; }

  // Union of installed_entries over Active sessions equals exactly the
  // non-management entries in the switch tables.
  bool tables_consistent() const;

  const std::vector<SentMessage>& outbox() const { return outbox_; }
  const std::vector<TableWrite>& table_writes() const { return table_writes_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  uint64_t malformed() const { return malformed_; }

 private:
  void send_to_host(NodeId host, mgmt::ManagementMessage msg);
  void uninstall(SessionRecord& session);
  // Recomputes trees for the reachable members, reinstalls and notifies
  // the sender when the advertised tree set changed.
  void recompute(SessionRecord& session);
  void assign_tags(SessionRecord& session, TreeSet& fresh);
  routing::ReceiverSet receivers_of(const SessionRecord& session, bool reachable_only) const;
  void schedule_member_check();

  dp::Network& net_;
  sim::Simulator& sim_;
  topo::Topology view_;
  ControllerConfig config_;
  std::map<uint32_t, GroupRecord> groups_;
  std::map<uint32_t, SessionRecord> sessions_;
  std::map<uint32_t, uint16_t> next_tag_;  // per group
  uint32_t next_session_id_ = 1;
  std::vector<SentMessage> outbox_;
  std::vector<TableWrite> table_writes_;
  std::vector<std::string> warnings_;
  uint64_t malformed_ = 0;
};

std::vector<mgmt::TreeShare> advertised(const TreeSet& trees);

}  // namespace mcast::ctl
