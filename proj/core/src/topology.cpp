#include "mcast/topology/topology.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <queue>
#include <sstream>

#include <fmt/format.h>

#include "mcast/error.hpp"

namespace mcast::topo {

ParseError::ParseError(std::size_t line, const std::string& what)
    : TopologyError(fmt::format("line {}: {}", line, what)), line_(line) {}

NodeId Topology::add_node(std::string label, NodeKind kind) {
  if (label.empty()) throw TopologyError("empty node label");
  if (find(label)) throw TopologyError("duplicate node label '" + label + "'");
  if (nodes_.size() >= std::numeric_limits<uint16_t>::max()) {
    throw TopologyError("too many nodes");
  }
  NodeId id{static_cast<uint16_t>(nodes_.size())};
  nodes_.push_back(Node{id, kind, std::move(label)});
  adjacency_.emplace_back();
  return id;
}

LinkId Topology::add_link(const Link& link) {
  if (!contains(link.a) || !contains(link.b)) {
    throw TopologyError("link endpoint is not a node");
  }
  if (link.a == link.b) throw TopologyError("self-loop link");
  if (link.capacity_bps == 0) throw TopologyError("link capacity must be positive");
  if (link.queue_limit == 0) throw TopologyError("queue limit must be at least 1");
  if (find_link(link.a, link.b)) {
    throw TopologyError(fmt::format("duplicate link {}-{}", node(link.a).label,
                                    node(link.b).label));
  }
  const auto id = static_cast<LinkId>(links_.size());
  links_.push_back(link);
  for (NodeId end : {link.a, link.b}) {
    auto& adj = adjacency_[end.value];
    const NodeId other = link.other(end);
    auto pos = std::lower_bound(adj.begin(), adj.end(), other,
                                [this, end](LinkId l, NodeId n) {
                                  return links_[l].other(end) < n;
                                });
    adj.insert(pos, id);
  }
  return id;
}

const Node& Topology::node(NodeId id) const {
  if (!contains(id)) throw TopologyError("unknown node id");
  return nodes_[id.value];
}

bool Topology::is_host(NodeId id) const {
  return contains(id) && nodes_[id.value].kind == NodeKind::Host;
}

bool Topology::is_switch(NodeId id) const {
  return contains(id) && nodes_[id.value].kind == NodeKind::Switch;
}

std::optional<NodeId> Topology::find(std::string_view label) const {
  for (const Node& n : nodes_) {
    if (n.label == label) return n.id;
  }
  return std::nullopt;
}

NodeId Topology::at(std::string_view label) const {
  if (auto id = find(label)) return *id;
  throw TopologyError("unknown node '" + std::string(label) + "'");
}

std::optional<LinkId> Topology::find_link(NodeId a, NodeId b) const {
  if (!contains(a) || !contains(b)) return std::nullopt;
  for (LinkId l : adjacency_[a.value]) {
    if (links_[l].other(a) == b) return l;
  }
  return std::nullopt;
}

std::span<const LinkId> Topology::incident(NodeId id) const {
  if (!contains(id)) throw TopologyError("unknown node id");
  return adjacency_[id.value];
}

std::vector<NodeId> Topology::neighbors(NodeId id) const {
  std::vector<NodeId> out;
  for (LinkId l : incident(id)) out.push_back(links_[l].other(id));
  return out;
}

bool Topology::is_connected() const {
  if (nodes_.empty()) return true;
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<NodeId> stack{NodeId{0}};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    NodeId n = stack.back();
    stack.pop_back();
    for (NodeId m : neighbors(n)) {
      if (!seen[m.value]) {
        seen[m.value] = true;
        ++count;
        stack.push_back(m);
      }
    }
  }
  return count == nodes_.size();
}

bool operator==(const Topology& a, const Topology& b) {
  return serialize(a) == serialize(b);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(line, fmt::format("bad {} '{}'", what, text));
  }
  return value;
}

}  // namespace

Topology parse_topology(std::string_view source) {
  Topology topo;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    std::size_t end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    std::string_view line = source.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto f = split_fields(line);
    if (f.empty()) continue;

    try {
      if (f[0] == "node") {
        if (f.size() != 3) throw ParseError(line_no, "expected: node <label> <host|switch>");
        NodeKind kind;
        if (f[2] == "host") {
          kind = NodeKind::Host;
        } else if (f[2] == "switch") {
          kind = NodeKind::Switch;
        } else {
          throw ParseError(line_no, fmt::format("unknown node kind '{}'", f[2]));
        }
        if (topo.find(f[1])) {
          throw ParseError(line_no, fmt::format("duplicate label '{}'", f[1]));
        }
        topo.add_node(std::string(f[1]), kind);
      } else if (f[0] == "link") {
        if (f.size() < 4 || f.size() > 6) {
          throw ParseError(line_no,
                           "expected: link <a> <b> <capacity_mbps> [delay_us] [queue_pkts]");
        }
        Link link;
        auto a = topo.find(f[1]);
        auto b = topo.find(f[2]);
        if (!a) throw ParseError(line_no, fmt::format("unknown node '{}'", f[1]));
        if (!b) throw ParseError(line_no, fmt::format("unknown node '{}'", f[2]));
        link.a = *a;
        link.b = *b;
        const auto mbps = parse_number<double>(f[3], line_no, "capacity");
        if (!(mbps > 0)) throw ParseError(line_no, "capacity must be positive");
        link.capacity_bps = static_cast<uint64_t>(mbps * 1e6 + 0.5);
        if (link.capacity_bps == 0) throw ParseError(line_no, "capacity must be positive");
        if (f.size() >= 5) {
          link.prop_delay = sim::SimTime::from_us(parse_number<uint64_t>(f[4], line_no, "delay"));
        }
        if (f.size() == 6) {
          link.queue_limit = parse_number<uint32_t>(f[5], line_no, "queue limit");
        }
        topo.add_link(link);
      } else {
        throw ParseError(line_no, fmt::format("unknown directive '{}'", f[0]));
      }
    } catch (const ParseError&) {
      throw;
    } catch (const TopologyError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return topo;
}

std::string serialize(const Topology& topo) {
  std::string out;
  for (const Node& n : topo.nodes()) {
    out += fmt::format("node {} {}\n", n.label,
                       n.kind == NodeKind::Host ? "host" : "switch");
  }
  std::vector<Link> links(topo.links().begin(), topo.links().end());
  for (Link& l : links) {
    if (l.b < l.a) std::swap(l.a, l.b);
  }
  std::sort(links.begin(), links.end(), [](const Link& x, const Link& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  for (const Link& l : links) {
    // Capacities are printed in Mbps with enough digits to be exact in bps.
    std::string mbps = fmt::format("{:.6f}", static_cast<double>(l.capacity_bps) / 1e6);
    while (mbps.back() == '0') mbps.pop_back();
    if (mbps.back() == '.') mbps.pop_back();
    out += fmt::format("link {} {} {} {} {}\n", topo.node(l.a).label,
                       topo.node(l.b).label, mbps, l.prop_delay.ns() / 1000,
                       l.queue_limit);
  }
  return out;
}

Topology paper_topology() {
  Topology t;
  const NodeId s = t.add_node("s", NodeKind::Host);
  const NodeId r[3] = {t.add_node("r1", NodeKind::Host), t.add_node("r2", NodeKind::Host),
                       t.add_node("r3", NodeKind::Host)};
  const NodeId sw0 = t.add_node("sw0", NodeKind::Switch);
  NodeId tier1[3];
  NodeId tier2[3];
  for (int i = 0; i < 3; ++i) tier1[i] = t.add_node(fmt::format("sw1{}", i + 1), NodeKind::Switch);
  for (int i = 0; i < 3; ++i) tier2[i] = t.add_node(fmt::format("sw2{}", i + 1), NodeKind::Switch);

  auto link = [&t](NodeId a, NodeId b, uint64_t bps) {
    Link l;
    l.a = a;
    l.b = b;
    l.capacity_bps = bps;
    t.add_link(l);
  };
  link(s, sw0, kEdgeCapacityBps);
  for (NodeId m : tier1) link(sw0, m, kCoreCapacityBps);
  for (NodeId m : tier1) {
    for (NodeId n : tier2) link(m, n, kCoreCapacityBps);
  }
  for (int i = 0; i < 3; ++i) link(tier2[i], r[i], kEdgeCapacityBps);
  return t;
}

Topology remove_link(const Topology& topo, NodeId a, NodeId b) {
  if (!topo.find_link(a, b)) {
    throw TopologyError(fmt::format("no link between node {} and node {}", a.value, b.value));
  }
  Topology out;
  for (const Node& n : topo.nodes()) out.add_node(n.label, n.kind);
  for (const Link& l : topo.links()) {
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) continue;
    out.add_link(l);
  }
  return out;
}

uint64_t max_flow(std::size_t node_count, std::span<const Arc> arcs, uint32_t src,
                  uint32_t dst) {
  expects(src < node_count && dst < node_count, "max_flow: node out of range");
  expects(src != dst, "max_flow: src == dst");

  struct Edge {
    uint32_t to;
    uint64_t cap;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<uint32_t>> adj(node_count);
  for (const Arc& arc : arcs) {
    adj[arc.from].push_back(static_cast<uint32_t>(edges.size()));
    edges.push_back({arc.to, arc.capacity});
    adj[arc.to].push_back(static_cast<uint32_t>(edges.size()));
    edges.push_back({arc.from, 0});
  }

  std::vector<int> level(node_count);
  std::vector<std::size_t> next(node_count);
  auto bfs = [&] {
    std::fill(level.begin(), level.end(), -1);
    std::queue<uint32_t> q;
    level[src] = 0;
    q.push(src);
    while (!q.empty()) {
      uint32_t u = q.front();
      q.pop();
      for (uint32_t e : adj[u]) {
        if (edges[e].cap > 0 && level[edges[e].to] < 0) {
          level[edges[e].to] = level[u] + 1;
          q.push(edges[e].to);
        }
      }
    }
    return level[dst] >= 0;
  };
  // Iterative blocking-flow search.
  auto augment = [&]() -> uint64_t {
    std::vector<uint32_t> path;  // edge ids
    uint32_t u = src;
    while (true) {
      if (u == dst) {
        uint64_t push = std::numeric_limits<uint64_t>::max();
        for (uint32_t e : path) push = std::min(push, edges[e].cap);
        for (uint32_t e : path) {
          edges[e].cap -= push;
          edges[e ^ 1u].cap += push;
        }
        return push;
      }
      bool advanced = false;
      for (; next[u] < adj[u].size(); ++next[u]) {
        uint32_t e = adj[u][next[u]];
        if (edges[e].cap > 0 && level[edges[e].to] == level[u] + 1) {
          path.push_back(e);
          u = edges[e].to;
          advanced = true;
          break;
        }
      }
      if (!advanced) {
        if (path.empty()) return 0;
        level[u] = -1;  // dead end
        uint32_t back = path.back();
        path.pop_back();
        u = edges[back ^ 1u].to;
        ++next[u];
      }
    }
  };

  uint64_t total = 0;
  while (bfs()) {
    std::fill(next.begin(), next.end(), 0);
    while (uint64_t f = augment()) total += f;
  }
  return total;
}

uint64_t max_flow(const Topology& topo, NodeId src, NodeId dst) {
  expects(topo.contains(src) && topo.contains(dst), "max_flow: unknown node");
  expects(src != dst, "max_flow: src == dst");
  std::vector<Arc> arcs;
  for (const Link& l : topo.links()) {
    arcs.push_back({l.a.value, l.b.value, l.capacity_bps});
    arcs.push_back({l.b.value, l.a.value, l.capacity_bps});
  }
  return max_flow(topo.nodes().size(), arcs, src.value, dst.value);
}

}  // namespace mcast::topo
