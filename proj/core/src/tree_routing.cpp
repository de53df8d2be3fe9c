#include "mcast/routing/tree.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>

#include <fmt/format.h>

#include "mcast/error.hpp"

namespace mcast::routing {

using topo::Link;
using topo::LinkId;
using topo::Topology;

UnreachableReceiver::UnreachableReceiver(NodeId receiver)
    : std::runtime_error(fmt::format("receiver {} is unreachable", receiver.value)),
      receiver_(receiver) {}

std::set<NodeId> MulticastTree::members() const {
  std::set<NodeId> out{root};
  for (const auto& [child, parent] : parent_of) {
    out.insert(child);
    out.insert(parent);
  }
  return out;
}

std::vector<NodeId> MulticastTree::children(NodeId node) const {
  std::vector<NodeId> out;
  for (const auto& [child, parent] : parent_of) {
    if (parent == node) out.push_back(child);
  }
  return out;  // map iteration order is already ascending
}

std::vector<std::pair<NodeId, NodeId>> MulticastTree::edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(parent_of.size());
  for (const auto& [child, parent] : parent_of) out.emplace_back(parent, child);
  return out;
}

bool MulticastTree::uses_link(NodeId a, NodeId b) const {
  auto it = parent_of.find(b);
  if (it != parent_of.end() && it->second == a) return true;
  it = parent_of.find(a);
  return it != parent_of.end() && it->second == b;
}

namespace {

// Index of the directed arc from -> to over link l.
std::size_t arc_index(const Topology& t, LinkId l, NodeId from) {
  return static_cast<std::size_t>(l) * 2 + (t.link(l).a == from ? 0 : 1);
}

void check_session_args(const Topology& topo, NodeId sender, const ReceiverSet& receivers) {
  expects(!receivers.empty(), "receiver set is empty");
  expects(topo.contains(sender), "sender is not in the topology");
  expects(!receivers.contains(sender), "sender is also a receiver");
  for (NodeId r : receivers) expects(topo.contains(r), "receiver is not in the topology");
}

// BFS over arcs accepted by `usable`. Returns the pruned tree (share unset)
// or throws UnreachableReceiver for the first receiver not reached.
using ArcFilter = std::function<bool(std::size_t arc)>;

MulticastTree bfs_tree(const Topology& topo, NodeId sender, const ReceiverSet& receivers,
                       const ArcFilter& usable) {
  const std::size_t n = topo.nodes().size();
  std::vector<int> parent(n, -1);
  std::vector<bool> seen(n, false);
  std::deque<NodeId> frontier{sender};
  seen[sender.value] = true;
  while (!frontier.empty()) {
    NodeId u = frontier.front();
    frontier.pop_front();
    if (u != sender && topo.is_host(u)) continue;  // hosts do not forward
    for (LinkId l : topo.incident(u)) {
      NodeId v = topo.link(l).other(u);
      if (seen[v.value] || !usable(arc_index(topo, l, u))) continue;
      seen[v.value] = true;
      parent[v.value] = u.value;
      frontier.push_back(v);
    }
  }

  MulticastTree tree;
  tree.root = sender;
  tree.route = RouteTag{1};
  for (NodeId r : receivers) {
    if (!seen[r.value]) throw UnreachableReceiver(r);
    NodeId cur = r;
    while (cur != sender && !tree.parent_of.contains(cur)) {
      NodeId p{static_cast<uint16_t>(parent[cur.value])};
      tree.parent_of.emplace(cur, p);
      cur = p;
    }
  }
  return tree;
}

template <typename CapacityOf>
uint64_t min_over_edges(const Topology& topo, const MulticastTree& tree, CapacityOf cap) {
  uint64_t share = std::numeric_limits<uint64_t>::max();
  for (const auto& [parent, child] : tree.edges()) {
    const LinkId l = *topo.find_link(parent, child);
    share = std::min(share, cap(arc_index(topo, l, parent)));
  }
  return share;
}

}  // namespace

MulticastTree compute_single_tree(const Topology& topo, NodeId sender,
                                  const ReceiverSet& receivers) {
  check_session_args(topo, sender, receivers);
  MulticastTree tree = bfs_tree(topo, sender, receivers, [](std::size_t) { return true; });
  tree.share_bps = min_over_edges(topo, tree, [&topo](std::size_t arc) {
    return topo.link(static_cast<LinkId>(arc / 2)).capacity_bps;
  });
  return tree;
}

TreeSet compute_tree_set(const Topology& topo, NodeId sender, const ReceiverSet& receivers,
                         unsigned max_trees) {
  check_session_args(topo, sender, receivers);
  expects(max_trees >= 1, "max_trees must be at least 1");

  std::vector<uint64_t> residual(topo.links().size() * 2);
  for (std::size_t i = 0; i < residual.size(); ++i) {
    residual[i] = topo.link(static_cast<LinkId>(i / 2)).capacity_bps;
  }

  TreeSet set;
  std::optional<NodeId> first_unreachable;
  for (unsigned k = 0; k < max_trees; ++k) {
    MulticastTree tree;
    try {
      tree = bfs_tree(topo, sender, receivers, [&residual](std::size_t arc) {
        return residual[arc] >= kShareQuantumBps;
      });
    } catch (const UnreachableReceiver& e) {
      if (k == 0) first_unreachable = e.receiver();
      break;
    }
    tree.route = RouteTag{static_cast<uint16_t>(k + 1)};
    tree.share_bps =
        min_over_edges(topo, tree, [&residual](std::size_t arc) { return residual[arc]; });
    for (const auto& [parent, child] : tree.edges()) {
      residual[arc_index(topo, *topo.find_link(parent, child), parent)] -= tree.share_bps;
    }
    set.total_share_bps += tree.share_bps;
    set.trees.push_back(std::move(tree));
  }
  if (set.trees.empty()) {
    throw UnreachableReceiver(first_unreachable.value_or(*receivers.begin()));
  }
  return set;
}

namespace {

struct CandidateTree {
  std::vector<std::size_t> arcs;
};

// Enumerates every subtree rooted at the sender whose leaves are exactly
// receivers. Each subtree is produced once: the recursion branches on
// including or excluding the first frontier arc.
class SubtreeEnumerator {
 public:
  SubtreeEnumerator(const Topology& topo, NodeId sender, const ReceiverSet& receivers)
      : topo_(topo), sender_(sender), receivers_(receivers),
        in_tree_(topo.nodes().size(), false), child_count_(topo.nodes().size(), 0) {}

  std::vector<CandidateTree> run() {
    in_tree_[sender_.value] = true;
    recurse(outgoing(sender_));
    return std::move(out_);
  }

 private:
  struct Frontier {
    NodeId from;
    NodeId to;
    std::size_t arc;
  };

  std::vector<Frontier> outgoing(NodeId u) const {
    std::vector<Frontier> f;
    if (u != sender_ && topo_.is_host(u)) return f;
    for (LinkId l : topo_.incident(u)) {
      NodeId v = topo_.link(l).other(u);
      if (topo_.is_host(v) && !receivers_.contains(v)) continue;
      if (v == sender_) continue;
      f.push_back({u, v, arc_index(topo_, l, u)});
    }
    return f;
  }

  void recurse(std::vector<Frontier> frontier) {
    while (!frontier.empty() && in_tree_[frontier.front().to.value]) {
      frontier.erase(frontier.begin());
    }
    if (frontier.empty()) {
      emit();
      return;
    }
    const Frontier e = frontier.front();
    std::vector<Frontier> rest(frontier.begin() + 1, frontier.end());

    // Include e.
    in_tree_[e.to.value] = true;
    ++child_count_[e.from.value];
    path_.push_back(e);
    auto extended = rest;
    for (const Frontier& f : outgoing(e.to)) extended.push_back(f);
    recurse(std::move(extended));
    path_.pop_back();
    --child_count_[e.from.value];
    in_tree_[e.to.value] = false;

    // Exclude e.
    recurse(std::move(rest));
  }

  void emit() {
    for (NodeId r : receivers_) {
      if (!in_tree_[r.value]) return;
    }
    for (const Frontier& e : path_) {
      if (child_count_[e.to.value] == 0 && !receivers_.contains(e.to)) return;
    }
    CandidateTree t;
    for (const Frontier& e : path_) t.arcs.push_back(e.arc);
    out_.push_back(std::move(t));
  }

  const Topology& topo_;
  NodeId sender_;
  const ReceiverSet& receivers_;
  std::vector<bool> in_tree_;
  std::vector<int> child_count_;
  std::vector<Frontier> path_;
  std::vector<CandidateTree> out_;
};

class PackingSearch {
 public:
  PackingSearch(const Topology& topo, NodeId sender, const ReceiverSet& receivers,
                std::vector<CandidateTree> trees, std::vector<uint64_t> capacity_units)
      : topo_(topo), sender_(sender), receivers_(receivers), trees_(std::move(trees)),
        residual_(std::move(capacity_units)) {}

  uint64_t run() {
    search(0, 0);
    return best_;
  }

 private:
  // Per-receiver max flow over the residual arcs bounds any completion.
  uint64_t upper_bound() const {
    std::vector<topo::Arc> arcs;
    for (std::size_t i = 0; i < residual_.size(); ++i) {
      if (residual_[i] == 0) continue;
      const Link& l = topo_.link(static_cast<LinkId>(i / 2));
      const NodeId from = (i % 2 == 0) ? l.a : l.b;
      const NodeId to = l.other(from);
      if (from != sender_ && topo_.is_host(from)) continue;
      arcs.push_back({from.value, to.value, residual_[i]});
    }
    uint64_t bound = std::numeric_limits<uint64_t>::max();
    for (NodeId r : receivers_) {
      bound = std::min(bound, topo::max_flow(topo_.nodes().size(), arcs, sender_.value, r.value));
    }
    return bound;
  }

  void search(std::size_t index, uint64_t current) {
    best_ = std::max(best_, current);
    if (index == trees_.size()) return;
    if (current + upper_bound() <= best_) return;
    uint64_t max_units = std::numeric_limits<uint64_t>::max();
    for (std::size_t arc : trees_[index].arcs) max_units = std::min(max_units, residual_[arc]);
    for (uint64_t x = max_units + 1; x-- > 0;) {
      for (std::size_t arc : trees_[index].arcs) residual_[arc] -= x;
      search(index + 1, current + x);
      for (std::size_t arc : trees_[index].arcs) residual_[arc] += x;
      if (current + upper_bound() <= best_) return;
    }
  }

  const Topology& topo_;
  NodeId sender_;
  const ReceiverSet& receivers_;
  std::vector<CandidateTree> trees_;
  std::vector<uint64_t> residual_;
  uint64_t best_ = 0;
};

}  // namespace

uint64_t brute_force_pack(const Topology& topo, NodeId sender, const ReceiverSet& receivers) {
  if (topo.nodes().size() > kBruteForceNodeLimit) {
    throw OracleRefused(fmt::format("brute_force_pack: {} nodes exceeds the limit of {}",
                                    topo.nodes().size(), kBruteForceNodeLimit));
  }
  check_session_args(topo, sender, receivers);

  std::vector<uint64_t> units(topo.links().size() * 2);
  for (std::size_t i = 0; i < units.size(); ++i) {
    units[i] = topo.link(static_cast<LinkId>(i / 2)).capacity_bps / kShareQuantumBps;
  }
  auto trees = SubtreeEnumerator(topo, sender, receivers).run();
  std::erase_if(trees, [&units](const CandidateTree& t) {
    return std::any_of(t.arcs.begin(), t.arcs.end(), [&units](std::size_t a) { return units[a] == 0; });
  });
  // Small trees first so good incumbents appear early.
  std::stable_sort(trees.begin(), trees.end(), [](const CandidateTree& a, const CandidateTree& b) {
    return a.arcs.size() < b.arcs.size();
  });
  return PackingSearch(topo, sender, receivers, std::move(trees), std::move(units)).run() *
         kShareQuantumBps;
}

std::string_view to_string(TreeClause clause) {
  switch (clause) {
    case TreeClause::Rootedness: return "rootedness";
    case TreeClause::Acyclicity: return "acyclicity";
    case TreeClause::ReceiverCoverage: return "receiver coverage";
    case TreeClause::LeafIsReceiver: return "leaf is receiver";
    case TreeClause::LinkExistence: return "link existence";
    case TreeClause::ShareFeasibility: return "share feasibility";
  }
  return "?";
}

bool ValidityReport::violates(TreeClause clause) const {
  return std::any_of(violations.begin(), violations.end(),
                     [clause](const TreeViolation& v) { return v.clause == clause; });
}

ValidityReport validate_tree(const MulticastTree& tree, const Topology& topo,
                             const ReceiverSet& receivers) {
  ValidityReport report;
  auto fail = [&report](TreeClause c, std::string detail) {
    report.violations.push_back({c, std::move(detail)});
  };

  if (!topo.contains(tree.root)) fail(TreeClause::Rootedness, "root is not a topology node");
  if (tree.parent_of.contains(tree.root)) fail(TreeClause::Rootedness, "root has a parent");

  const std::size_t limit = tree.parent_of.size() + 1;
  bool cyclic = false;
  for (const auto& [child, parent] : tree.parent_of) {
    NodeId cur = child;
    std::size_t steps = 0;
    while (cur != tree.root && steps <= limit) {
      auto it = tree.parent_of.find(cur);
      if (it == tree.parent_of.end()) {
        fail(TreeClause::Rootedness, fmt::format("node {} does not reach the root", child.value));
        break;
      }
      cur = it->second;
      ++steps;
    }
    if (steps > limit && !cyclic) {
      cyclic = true;
      fail(TreeClause::Acyclicity, fmt::format("cycle through node {}", child.value));
    }
  }

  const auto members = tree.members();
  for (NodeId r : receivers) {
    if (!members.contains(r)) fail(TreeClause::ReceiverCoverage, fmt::format("receiver {} missing", r.value));
  }
  for (NodeId m : members) {
    if (m == tree.root) continue;
    if (tree.children(m).empty() && !receivers.contains(m)) {
      fail(TreeClause::LeafIsReceiver, fmt::format("leaf {} is not a receiver", m.value));
    }
  }

  uint64_t min_capacity = std::numeric_limits<uint64_t>::max();
  for (const auto& [parent, child] : tree.edges()) {
    auto l = topo.find_link(parent, child);
    if (!l) {
      fail(TreeClause::LinkExistence, fmt::format("no link {}-{}", parent.value, child.value));
      continue;
    }
    min_capacity = std::min(min_capacity, topo.link(*l).capacity_bps);
  }
  if (tree.share_bps == 0 || tree.share_bps > min_capacity) {
    fail(TreeClause::ShareFeasibility, fmt::format("share {} bps exceeds bottleneck or is zero",
                                                   tree.share_bps));
  }
  return report;
}

bool link_feasible(const TreeSet& set, const Topology& topo) {
  std::vector<uint64_t> load(topo.links().size() * 2, 0);
  for (const MulticastTree& t : set.trees) {
    for (const auto& [parent, child] : t.edges()) {
      auto l = topo.find_link(parent, child);
      if (!l) return false;
      load[arc_index(topo, *l, parent)] += t.share_bps;
    }
  }
  for (std::size_t i = 0; i < load.size(); ++i) {
    if (load[i] > topo.link(static_cast<LinkId>(i / 2)).capacity_bps) return false;
  }
  return true;
}

}  // namespace mcast::routing
