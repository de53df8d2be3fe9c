#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mcast/topology/topology.hpp"

namespace mcast::routing {

using topo::NodeId;
using ReceiverSet = std::set<NodeId>;

// 12-bit route identifier carried in the packet header; 0 means untagged.
struct RouteTag {
  uint16_t value = 0;
  static constexpr uint16_t kMax = 0x0FFF;
  constexpr auto operator<=>(const RouteTag&) const = default;
};

struct MulticastTree {
  RouteTag route;
  NodeId root;
  std::map<NodeId, NodeId> parent_of;  // every member except the root
  uint64_t share_bps = 0;

  std::set<NodeId> members() const;
  // Children of `node`, ascending.
  std::vector<NodeId> children(NodeId node) const;
  // (parent, child) pairs, i.e. the directed links the tree occupies.
  std::vector<std::pair<NodeId, NodeId>> edges() const;
  bool uses_link(NodeId a, NodeId b) const;

  bool same_shape(const MulticastTree& other) const {
    return root == other.root && parent_of == other.parent_of;
  }
  friend bool operator==(const MulticastTree&, const MulticastTree&) = default;
};

struct TreeSet {
  std::vector<MulticastTree> trees;
  uint64_t total_share_bps = 0;
  friend bool operator==(const TreeSet&, const TreeSet&) = default;
};

class UnreachableReceiver : public std::runtime_error {
 public:
  explicit UnreachableReceiver(NodeId receiver);
  NodeId receiver() const { return receiver_; }

 private:
  NodeId receiver_;
};

// Residual threshold below which a directed link is no longer offered to
// the packing loop, and the share granularity of the brute-force oracle.
inline constexpr uint64_t kShareQuantumBps = 1'000'000;

// Union of BFS shortest paths from sender to each receiver. Neighbors are
// expanded in ascending NodeId order and hosts other than the sender do
// not forward. Share is the minimum link capacity on the tree; tag 1.
MulticastTree compute_single_tree(const topo::Topology& topo, NodeId sender,
                                  const ReceiverSet& receivers);

// Greedy residual packing: up to max_trees BFS trees, each taking the
// minimum residual capacity on its links. Tags 1, 2, 3, ... in order.
TreeSet compute_tree_set(const topo::Topology& topo, NodeId sender,
                         const ReceiverSet& receivers, unsigned max_trees);

inline constexpr std::size_t kBruteForceNodeLimit = 11;

class OracleRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive optimum of the tree packing problem at 1 Mbps granularity.
// Refuses topologies with more than kBruteForceNodeLimit nodes.
uint64_t brute_force_pack(const topo::Topology& topo, NodeId sender,
                          const ReceiverSet& receivers);

enum class TreeClause {
  Rootedness,
  Acyclicity,
  ReceiverCoverage,
  LeafIsReceiver,
  LinkExistence,
  ShareFeasibility,
};

std::string_view to_string(TreeClause clause);

struct TreeViolation {
  TreeClause clause;
  std::string detail;
};

struct ValidityReport {
  std::vector<TreeViolation> violations;
  bool ok() const { return violations.empty(); }
  bool violates(TreeClause clause) const;
};

ValidityReport validate_tree(const MulticastTree& tree, const topo::Topology& topo,
                             const ReceiverSet& receivers);

// Sum of shares per directed link never exceeds its capacity.
bool link_feasible(const TreeSet& set, const topo::Topology& topo);

}  // namespace mcast::routing
