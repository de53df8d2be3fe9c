#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcast/sim/sim_time.hpp"

namespace mcast::topo {

struct NodeId {
  uint16_t value = 0;
  constexpr auto operator<=>(const NodeId&) const = default;
};

enum class NodeKind : uint8_t { Host, Switch };

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Switch;
  std::string label;
};

using LinkId = uint32_t;

inline constexpr sim::SimTime kDefaultPropDelay = sim::SimTime::from_us(50);
inline constexpr uint32_t kDefaultQueueLimit = 64;

// Bidirectional link; each direction has its own queue and full capacity.
struct Link {
  NodeId a;
  NodeId b;
  uint64_t capacity_bps = 0;
  sim::SimTime prop_delay = kDefaultPropDelay;
  uint32_t queue_limit = kDefaultQueueLimit;

  NodeId other(NodeId end) const { return end == a ? b : a; }
};

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public TopologyError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class Topology {
 public:
  NodeId add_node(std::string label, NodeKind kind);
  LinkId add_link(const Link& link);

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Link> links() const { return links_; }
  const Node& node(NodeId id) const;
  const Link& link(LinkId id) const { return links_.at(id); }
  bool contains(NodeId id) const { return id.value < nodes_.size(); }
  bool is_host(NodeId id) const;
  bool is_switch(NodeId id) const;

  std::optional<NodeId> find(std::string_view label) const;
  NodeId at(std::string_view label) const;
  std::optional<LinkId> find_link(NodeId a, NodeId b) const;

  // Incident link ids, ordered by the neighbor's NodeId.
  std::span<const LinkId> incident(NodeId id) const;
  // Neighbors in ascending NodeId order.
  std::vector<NodeId> neighbors(NodeId id) const;

  bool is_connected() const;

  friend bool operator==(const Topology& a, const Topology& b);

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<LinkId>> adjacency_;
};

// Line format: `node <label> <host|switch>` and
// `link <a> <b> <capacity_mbps> [delay_us] [queue_pkts]`; `#` comments.
Topology parse_topology(std::string_view source);
// Canonical text: nodes by id, links by (min id, max id).
std::string serialize(const Topology& topo);

// The eleven-node case-study network: s -> sw0 -> {sw11,sw12,sw13} ->
// {sw21,sw22,sw23} (full bipartite) -> r1,r2,r3. Host links 100 Mbps,
// core links 5 Mbps.
Topology paper_topology();
inline constexpr uint64_t kEdgeCapacityBps = 100'000'000;
inline constexpr uint64_t kCoreCapacityBps = 5'000'000;

// Returns a copy without the a-b link. Throws TopologyError if absent.
Topology remove_link(const Topology& topo, NodeId a, NodeId b);

// Directed arc for the flow solver.
struct Arc {
  uint32_t from = 0;
  uint32_t to = 0;
  uint64_t capacity = 0;
};

// Exact max flow (Dinic) over an explicit directed arc list.
uint64_t max_flow(std::size_t node_count, std::span<const Arc> arcs,
                  uint32_t src, uint32_t dst);

// Max flow treating each link as two arcs of full capacity. 0 when
// disconnected; src == dst is a contract violation.
uint64_t max_flow(const Topology& topo, NodeId src, NodeId dst);

}  // namespace mcast::topo
