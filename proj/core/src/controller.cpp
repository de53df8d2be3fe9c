#include "mcast/controller/controller.hpp"

#include <algorithm>
#include <deque>

#include <fmt/format.h>

#include "mcast/mgmt/codec.hpp"

namespace mcast::ctl {

using mgmt::ManagementMessage;
using mgmt::Status;

std::vector<mgmt::TreeShare> advertised(const TreeSet& trees) {
  std::vector<mgmt::TreeShare> out;
  for (const routing::MulticastTree& t : trees.trees) out.push_back({t.route, t.share_bps});
  return out;
}

Controller::Controller(dp::Network& net, topo::Topology view, ControllerConfig config)
    : net_(net), sim_(net.simulator()), view_(std::move(view)), config_(config) {}

void Controller::start() {
  net_.attach_controller(this);
  if (config_.member_check) schedule_member_check();
}

void Controller::schedule_member_check() {
  sim_.schedule_in(config_.check_interval, sim::EventKind::TimerFire, sim::kControllerTarget,
                   [this] {
                     periodic_member_check(sim_.now());
                     schedule_member_check();
                   });
}

void Controller::on_packet_in(NodeId, NodeId, const dp::Packet& pkt) {
  ManagementMessage msg;
  try {
    if (!pkt.payload) throw mgmt::DecodeError(mgmt::DecodeErrorKind::ShortFrame, 0, "no payload");
    msg = mgmt::decode(*pkt.payload);
  } catch (const mgmt::DecodeError& e) {
    ++malformed_;
    warnings_.push_back(fmt::format("dropped malformed management frame: {}", e.what()));
    return;
  }
  const NodeId requester = mgmt::node_of_address(msg.requester_addr);
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, mgmt::GroupJoin>) {
          send_to_host(requester, {msg.requester_addr, handle_group_join(body)});
        } else if constexpr (std::is_same_v<T, mgmt::GroupLeave>) {
          handle_group_leave(body);
        } else if constexpr (std::is_same_v<T, mgmt::SessionInit>) {
          send_to_host(requester, {msg.requester_addr, handle_session_init(body)});
        } else if constexpr (std::is_same_v<T, mgmt::SessionEnd>) {
          handle_session_end(body);
        } else if constexpr (std::is_same_v<T, mgmt::StatsReport>) {
          handle_stats_report(body);
        } else {
          warnings_.push_back(fmt::format("ignored {} from a host",
                                          static_cast<int>(mgmt::variant_of(msg.body))));
        }
      },
      msg.body);
}

void Controller::send_to_host(NodeId host, ManagementMessage msg) {
  outbox_.push_back({sim_.now(), host, msg});
  if (!view_.contains(host) || !view_.is_host(host) || view_.incident(host).empty()) {
    warnings_.push_back(fmt::format("no path to host {} for a management reply", host.value));
    return;
  }
  const NodeId sw = view_.link(view_.incident(host).front()).other(host);
  if (!net_.is_switch(sw)) {
    warnings_.push_back(fmt::format("host {} is not attached to a switch", host.value));
    return;
  }
  net_.packet_out(sw, host, dp::make_packet(mgmt::host_address(host), mgmt::kMgmtAddress,
                                            mgmt::encode(msg)));
}

mgmt::GroupJoinReply Controller::handle_group_join(const mgmt::GroupJoin& msg) {
  if (msg.group_id > mgmt::kMaxGroupId || !view_.contains(msg.receiver) ||
      !view_.is_host(msg.receiver)) {
    return {msg.group_id, Status::Rejected};
  }
  GroupRecord& g = groups_[msg.group_id];
  g.group_id = msg.group_id;
  const bool added = g.members.insert(msg.receiver).second;
  g.last_seen[msg.receiver] = sim_.now();
  if (added) {
    for (auto& [id, s] : sessions_) {
      if (s.group_id == msg.group_id && s.state != SessionState::Ended) recompute(s);
    }
  }
  return {msg.group_id, Status::Ok};
}

void Controller::handle_group_leave(const mgmt::GroupLeave& msg) {
  auto it = groups_.find(msg.group_id);
  if (it == groups_.end() || it->second.members.erase(msg.receiver) == 0) return;
  it->second.last_seen.erase(msg.receiver);
  for (auto& [id, s] : sessions_) {
    if (s.group_id == msg.group_id && s.state != SessionState::Ended) recompute(s);
  }
}

routing::ReceiverSet Controller::receivers_of(const SessionRecord& session,
                                              bool reachable_only) const {
  routing::ReceiverSet out;
  auto g = groups_.find(session.group_id);
  if (g == groups_.end()) return out;
  for (NodeId m : g->second.members) {
    if (m != session.sender) out.insert(m);
  }
  if (!reachable_only || out.empty()) return out;
  // Hosts other than the sender do not forward.
  std::vector<bool> seen(view_.nodes().size(), false);
  std::deque<NodeId> frontier{session.sender};
  seen[session.sender.value] = true;
  while (!frontier.empty()) {
    const NodeId n = frontier.front();
    frontier.pop_front();
    if (n != session.sender && view_.is_host(n)) continue;
    for (NodeId next : view_.neighbors(n)) {
      if (!seen[next.value]) {
        seen[next.value] = true;
        frontier.push_back(next);
      }
    }
  }
  std::erase_if(out, [&](NodeId m) { return !seen[m.value]; });
  return out;
}

void Controller::assign_tags(SessionRecord& session, TreeSet& fresh) {
  std::set<RouteTag> in_use;
  for (const auto& [id, s] : sessions_) {
    if (s.group_id != session.group_id || s.state == SessionState::Ended) continue;
    for (const auto& t : s.trees.trees) in_use.insert(t.route);
  }
  std::vector<bool> reused(session.trees.trees.size(), false);
  std::vector<bool> assigned(fresh.trees.size(), false);
  // A tree that keeps its exact shape keeps its tag, so switch entries for
  // it stay valid and in-flight packets are not misrouted.
  for (std::size_t i = 0; i < fresh.trees.size(); ++i) {
    for (std::size_t j = 0; j < session.trees.trees.size(); ++j) {
      if (!reused[j] && fresh.trees[i].same_shape(session.trees.trees[j])) {
        fresh.trees[i].route = session.trees.trees[j].route;
        reused[j] = assigned[i] = true;
        break;
      }
    }
  }
  uint16_t& next = next_tag_[session.group_id];
  for (std::size_t i = 0; i < fresh.trees.size(); ++i) {
    if (assigned[i]) continue;
    for (unsigned tries = 0; tries < RouteTag::kMax; ++tries) {
      if (next == 0 || next > RouteTag::kMax) next = 1;
      const RouteTag candidate{next++};
      if (in_use.insert(candidate).second) {
        fresh.trees[i].route = candidate;
        assigned[i] = true;
        break;
      }
    }
    if (!assigned[i]) throw InstallError("route tag space exhausted for group");
  }
}

void Controller::install_flow_entries(SessionRecord& session) {
  struct Undo {
    NodeId sw;
    dp::FlowMatch match;
    std::optional<FlowEntry> previous;
  };
  std::vector<Undo> undo;
  std::vector<InstalledEntry> written;
  const uint32_t addr = mgmt::group_address(session.group_id);
  const topo::Topology& physical = net_.topology();
  try {
    for (const routing::MulticastTree& tree : session.trees.trees) {
      for (NodeId node : tree.members()) {
        if (physical.contains(node) && physical.is_host(node)) continue;
        if (!net_.is_switch(node)) {
          throw InstallError(fmt::format("session {}: tree {} names unknown switch {}",
                                         session.session_id, tree.route.value, node.value));
        }
        FlowEntry entry{dp::FlowMatch{addr, tree.route}, {}, dp::kDataPriority};
        for (NodeId child : tree.children(node)) entry.actions.push_back(dp::Output{child});
        const FlowEntry* prev = net_.table(node).find(entry.match);
        undo.push_back({node, entry.match, prev ? std::optional(*prev) : std::nullopt});
        net_.apply_table_update(node, std::span(&entry, 1), {});
        table_writes_.push_back({sim_.now(), session.session_id, node, true});
        written.push_back({node, std::move(entry)});
      }
    }
  } catch (const InstallError&) {
    for (auto it = undo.rbegin(); it != undo.rend(); ++it) {
      if (it->previous) {
        net_.apply_table_update(it->sw, std::span(&*it->previous, 1), {});
      } else {
        net_.apply_table_update(it->sw, {}, std::span(&it->match, 1));
      }
      table_writes_.push_back({sim_.now(), session.session_id, it->sw, false});
    }
    throw;
  }
  session.installed_entries.insert(session.installed_entries.end(), written.begin(),
                                   written.end());
}

void Controller::uninstall(SessionRecord& session) {
  for (const InstalledEntry& e : session.installed_entries) {
    net_.apply_table_update(e.sw, {}, std::span(&e.entry.match, 1));
    table_writes_.push_back({sim_.now(), session.session_id, e.sw, false});
  }
  session.installed_entries.clear();
}

mgmt::SessionInitReply Controller::handle_session_init(const mgmt::SessionInit& msg) {
  const mgmt::SessionInitReply refused{0, Status::Rejected, {}};
  if (!view_.contains(msg.sender) || !view_.is_host(msg.sender)) return refused;
  // A retransmitted init from a sender whose session is already running
  // gets the same answer instead of a second session.
  for (const auto& [id, s] : sessions_) {
    if (s.sender == msg.sender && s.group_id == msg.group_id && s.state == SessionState::Active) {
      return {id, Status::Ok, advertised(s.trees)};
    }
  }
  SessionRecord session;
  session.sender = msg.sender;
  session.group_id = msg.group_id;
  session.block_len = msg.block_len_bytes;
  session.receivers = receivers_of(session, false);
  if (session.receivers.empty()) return refused;
  try {
    session.trees =
        routing::compute_tree_set(view_, msg.sender, session.receivers, config_.max_trees);
  } catch (const routing::UnreachableReceiver&) {
    return refused;
  }
  session.session_id = next_session_id_;
  TreeSet fresh = std::move(session.trees);
  session.trees = {};
  try {
    assign_tags(session, fresh);
    session.trees = std::move(fresh);
    install_flow_entries(session);
  } catch (const InstallError& e) {
    warnings_.push_back(e.what());
    return refused;
  }
  ++next_session_id_;
  session.state = SessionState::Active;
  const uint32_t id = session.session_id;
  auto& stored = sessions_[id] = std::move(session);
  return {id, Status::Ok, advertised(stored.trees)};
}

void Controller::handle_session_end(const mgmt::SessionEnd& msg) {
  auto it = sessions_.find(msg.session_id);
  if (it == sessions_.end() || it->second.state == SessionState::Ended) return;
  uninstall(it->second);
  it->second.state = SessionState::Ended;
}

void Controller::handle_stats_report(const mgmt::StatsReport& msg) {
  for (auto& [id, g] : groups_) {
    if (g.members.contains(msg.receiver)) g.last_seen[msg.receiver] = sim_.now();
  }
}

void Controller::handle_link_failure(NodeId a, NodeId b) {
  if (!view_.contains(a) || !view_.contains(b) || !view_.find_link(a, b)) {
    warnings_.push_back(fmt::format("link failure for unknown link {}-{} ignored", a.value, b.value));
    return;
  }
  view_ = topo::remove_link(view_, a, b);
  for (auto& [id, s] : sessions_) {
    if (s.state != SessionState::Active) continue;
    const bool affected = std::any_of(s.trees.trees.begin(), s.trees.trees.end(),
                                      [&](const auto& t) { return t.uses_link(a, b); });
    if (affected) recompute(s);
  }
}

void Controller::recompute(SessionRecord& session) {
  const routing::ReceiverSet receivers = receivers_of(session, true);
  const std::size_t unreachable = receivers_of(session, false).size() - receivers.size();
  if (unreachable > 0) {
    warnings_.push_back(fmt::format("session {}: {} member(s) unreachable, serving the rest",
                                    session.session_id, unreachable));
  }
  TreeSet fresh;
  if (!receivers.empty()) {
    try {
      fresh = routing::compute_tree_set(view_, session.sender, receivers, config_.max_trees);
    } catch (const routing::UnreachableReceiver& e) {
      warnings_.push_back(fmt::format("session {}: {}", session.session_id, e.what()));
    }
  }
  const auto before = advertised(session.trees);
  uninstall(session);
  try {
    assign_tags(session, fresh);
    session.trees = std::move(fresh);
    install_flow_entries(session);
  } catch (const InstallError& e) {
    warnings_.push_back(e.what());
    session.trees = {};
  }
  session.receivers = receivers;
  session.state = session.trees.trees.empty() ? SessionState::Paused : SessionState::Active;
  const auto after = advertised(session.trees);
  if (after != before) {
    send_to_host(session.sender, {mgmt::host_address(session.sender),
                                  mgmt::NetworkUpdate{session.session_id, after}});
  }
}

std::set<NodeId> Controller::periodic_member_check(SimTime now) {
  std::set<NodeId> expired;
  if (!config_.member_check) return expired;
  std::vector<mgmt::GroupLeave> leaves;
  for (const auto& [id, g] : groups_) {
    for (const auto& [member, seen] : g.last_seen) {
      if (now > seen && now - seen > config_.member_expiry) {
        leaves.push_back({id, member});
        expired.insert(member);
      }
    }
  }
  for (const auto& leave : leaves) handle_group_leave(leave);
  return expired;
}

const GroupRecord* Controller::group(uint32_t group_id) const {
  auto it = groups_.find(group_id);
  return it == groups_.end() ? nullptr : &it->second;
}

const SessionRecord* Controller::session(uint32_t session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

bool Controller::tables_consistent() const {
  std::vector<InstalledEntry> expected;
  for (const auto& [id, s] : sessions_) {
    if (s.state == SessionState::Ended) {
      if (!s.installed_entries.empty()) return false;
      continue;
    }
    expected.insert(expected.end(), s.installed_entries.begin(), s.installed_entries.end());
  }
  const FlowEntry mgmt_entry = dp::management_entry();
  for (const topo::Node& node : net_.topology().nodes()) {
    if (node.kind != topo::NodeKind::Switch) continue;
    for (const FlowEntry& e : net_.table(node.id).entries()) {
      if (e == mgmt_entry) continue;
      auto it = std::find(expected.begin(), expected.end(), InstalledEntry{node.id, e});
      if (it == expected.end()) return false;
      expected.erase(it);
    }
  }
  return expected.empty();
}

}  // namespace mcast::ctl
