#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "mcast/routing/tree.hpp"
#include "mcast/sim/sim_time.hpp"

namespace mcast::mgmt {

using routing::RouteTag;
using topo::NodeId;

// Reserved destination that every switch punts to the controller. Never
// assigned to a node.
inline constexpr uint32_t kMgmtAddress = 0xF0F0'0001u;

// Host addresses live in 10.0.0.0/16, group addresses in 224.0.0.0/4.
constexpr uint32_t host_address(NodeId node) { return 0x0A00'0000u | node.value; }
constexpr bool is_host_address(uint32_t addr) { return (addr & 0xFFFF'0000u) == 0x0A00'0000u; }
constexpr NodeId node_of_address(uint32_t addr) { return NodeId{static_cast<uint16_t>(addr & 0xFFFFu)}; }

inline constexpr uint32_t kMaxGroupId = 0x0FFF'FFFFu;
constexpr uint32_t group_address(uint32_t group_id) { return 0xE000'0000u | (group_id & kMaxGroupId); }
constexpr bool is_group_address(uint32_t addr) { return (addr & 0xF000'0000u) == 0xE000'0000u; }
constexpr uint32_t group_of_address(uint32_t addr) { return addr & kMaxGroupId; }

enum class Status : uint8_t { Ok = 0, Rejected = 1 };

struct TreeShare {
  RouteTag route;
  uint64_t share_bps = 0;
  friend bool operator==(const TreeShare&, const TreeShare&) = default;
};

struct GroupJoin {
  uint32_t group_id = 0;
  NodeId receiver;
  friend bool operator==(const GroupJoin&, const GroupJoin&) = default;
};

struct GroupJoinReply {
  uint32_t group_id = 0;
  Status status = Status::Ok;
  friend bool operator==(const GroupJoinReply&, const GroupJoinReply&) = default;
};

struct GroupLeave {
  uint32_t group_id = 0;
  NodeId receiver;
  friend bool operator==(const GroupLeave&, const GroupLeave&) = default;
};

struct SessionInit {
  uint32_t group_id = 0;
  NodeId sender;
  uint64_t block_len_bytes = 0;
  friend bool operator==(const SessionInit&, const SessionInit&) = default;
};

// A refused init carries status Rejected, session id 0 and no trees.
struct SessionInitReply {
  uint32_t session_id = 0;
  Status status = Status::Ok;
  std::vector<TreeShare> trees;
  friend bool operator==(const SessionInitReply&, const SessionInitReply&) = default;
};

struct SessionEnd {
  uint32_t session_id = 0;
  friend bool operator==(const SessionEnd&, const SessionEnd&) = default;
};

// Zero trees pauses the sender.
struct NetworkUpdate {
  uint32_t session_id = 0;
  std::vector<TreeShare> trees;
  friend bool operator==(const NetworkUpdate&, const NetworkUpdate&) = default;
};

struct StatsReport {
  uint32_t session_id = 0;
  NodeId receiver;
  uint64_t bytes_received = 0;
  sim::SimTime window;
  friend bool operator==(const StatsReport&, const StatsReport&) = default;
};

using Body = std::variant<GroupJoin, GroupJoinReply, GroupLeave, SessionInit, SessionInitReply,
                          SessionEnd, NetworkUpdate, StatsReport>;

enum class Variant : uint8_t {
  GroupJoin = 1,
  GroupJoinReply = 2,
  GroupLeave = 3,
  SessionInit = 4,
  SessionInitReply = 5,
  SessionEnd = 6,
  NetworkUpdate = 7,
  StatsReport = 8,
};

// requester_addr names the end-host the exchange belongs to: the source of
// a request, the destination of a reply or controller-initiated update.
struct ManagementMessage {
  uint32_t requester_addr = 0;
  Body body;
  friend bool operator==(const ManagementMessage&, const ManagementMessage&) = default;
};

Variant variant_of(const Body& body);

// The reply a request expects; nullopt for fire-and-forget messages and for
// messages that are themselves replies or updates.
std::optional<Variant> expected_reply(Variant request);

}  // namespace mcast::mgmt
