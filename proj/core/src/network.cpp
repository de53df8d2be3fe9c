#include "mcast/dataplane/network.hpp"

#include <algorithm>

#include "mcast/error.hpp"

namespace mcast::dp {

using sim::EventKind;
using sim::SimTime;

Network::Network(sim::Simulator& sim, const topo::Topology& topo, NetworkConfig config)
    : sim_(sim), topo_(topo), config_(config) {
  const std::size_t n = topo_.nodes().size();
  tables_.resize(n);
  counters_.resize(n);
  hosts_.assign(n, nullptr);
  queues_.resize(topo_.links().size() * 2);
  for (topo::LinkId l = 0; l < topo_.links().size(); ++l) {
    const topo::Link& link = topo_.link(l);
    for (int dir = 0; dir < 2; ++dir) {
      Queue& q = queues_[l * 2 + dir];
      q.from = dir == 0 ? link.a : link.b;
      q.to = dir == 0 ? link.b : link.a;
      q.capacity_bps = link.capacity_bps;
      q.prop_delay = link.prop_delay;
      q.limit = link.queue_limit;
    }
  }
  // The controller configures the management entry before any traffic.
  for (const topo::Node& node : topo_.nodes()) {
    if (node.kind == topo::NodeKind::Switch) tables_[node.id.value].add(management_entry());
  }
}

void Network::attach_host(NodeId host, HostAgent* agent) {
  expects(topo_.is_host(host), "attach_host: not a host");
  hosts_[host.value] = agent;
}

std::size_t Network::queue_index(NodeId from, NodeId to) const {
  auto l = topo_.find_link(from, to);
  expects(l.has_value(), "no link between the given nodes");
  return static_cast<std::size_t>(*l) * 2 + (topo_.link(*l).a == from ? 0 : 1);
}

void Network::notify(QueueEventType type, const Queue& q, const Packet& pkt) {
  if (observer_) observer_(QueueEvent{type, q.from, q.to, sim_.now(), &pkt});
}

bool Network::enqueue(std::size_t index, Packet pkt) {
  Queue& q = queues_[index];
  if (!q.up || q.backlog.size() >= q.limit) {
    ++q.stats.dropped;
    notify(QueueEventType::Drop, q, pkt);
    return false;
  }
  ++q.stats.enqueued;
  q.backlog.push_back(std::move(pkt));
  q.stats.max_backlog = std::max(q.stats.max_backlog, q.backlog.size());
  notify(QueueEventType::Enqueue, q, q.backlog.back());
  if (!q.busy) start_service(index);
  return true;
}

void Network::start_service(std::size_t index) {
  Queue& q = queues_[index];
  q.busy = true;
  const SimTime tx = sim::serialization_time(q.backlog.front().wire_size(), q.capacity_bps);
  const uint64_t gen = q.generation;
  sim_.schedule_in(tx, EventKind::QueueService, q.from.value,
                   [this, index, gen] { finish_service(index, gen); });
}

void Network::finish_service(std::size_t index, uint64_t generation) {
  Queue& q = queues_[index];
  if (generation != q.generation) return;
  Packet pkt = std::move(q.backlog.front());
  q.backlog.pop_front();
  q.busy = false;
  ++q.stats.departed;
  q.stats.bytes_departed += pkt.wire_size();
  notify(QueueEventType::Depart, q, pkt);
  const NodeId to = q.to;
  const NodeId from = q.from;
  sim_.schedule_in(q.prop_delay, EventKind::PacketArrival, to.value,
                   [this, to, from, index, generation, p = std::move(pkt)] {
                     arrive(to, from, p, index, generation);
                   });
  if (!q.backlog.empty()) start_service(index);
}

void Network::arrive(NodeId node, NodeId from, const Packet& pkt, std::size_t index,
                     uint64_t generation) {
  Queue& q = queues_[index];
  if (generation != q.generation) {
    ++q.stats.lost_link_down;
    return;
  }
  if (topo_.is_switch(node)) {
    forward(node, from, pkt);
  } else if (HostAgent* agent = hosts_[node.value]) {
    agent->on_packet(pkt);
  }
}

void Network::forward(NodeId sw, NodeId in_port, const Packet& pkt) {
  SwitchCounters& c = counters_.at(sw.value);
  ++c.packets_in;
  const std::vector<Action>* actions = tables_[sw.value].match_packet(pkt);
  if (actions == nullptr) {
    ++c.misses;
    return;
  }
  ++c.matched;
  for (const Action& action : *actions) {
    if (const auto* out = std::get_if<Output>(&action)) {
      ++c.copies_expected;
      // Action resolution happens here; later table updates do not touch
      // copies that are already queued.
      if (enqueue(queue_index(sw, out->port), pkt)) {
        ++c.copies_enqueued;
      } else {
        ++c.copies_dropped;
      }
    } else {
      ++c.punted;
      if (controller_ != nullptr) {
        sim_.schedule_in(config_.control_latency, EventKind::PacketArrival, sim::kControllerTarget,
                         [this, sw, in_port, pkt] { controller_->on_packet_in(sw, in_port, pkt); });
      }
    }
  }
}

void Network::send_from_host(NodeId host, Packet pkt) {
  expects(topo_.is_host(host), "send_from_host: not a host");
  const auto incident = topo_.incident(host);
  if (incident.empty()) {
    ++host_uplink_missing_;
    return;
  }
  const topo::LinkId l = incident.front();
  enqueue(queue_index(host, topo_.link(l).other(host)), std::move(pkt));
}

void Network::packet_out(NodeId sw, NodeId port, Packet pkt) {
  expects(topo_.is_switch(sw), "packet_out: not a switch");
  const std::size_t index = queue_index(sw, port);
  sim_.schedule_in(config_.control_latency, EventKind::HostAction, sw.value,
                   [this, index, p = std::move(pkt)]() mutable { enqueue(index, std::move(p)); });
}

void Network::apply_table_update(NodeId sw, std::span<const FlowEntry> add,
                                 std::span<const FlowMatch> remove) {
  expects(topo_.is_switch(sw), "apply_table_update: not a switch");
  tables_[sw.value].apply_update(add, remove);
}

const FlowTable& Network::table(NodeId sw) const {
  expects(topo_.is_switch(sw), "table: not a switch");
  return tables_[sw.value];
}

void Network::set_link_down(NodeId a, NodeId b) {
  for (std::size_t index : {queue_index(a, b), queue_index(b, a)}) {
    Queue& q = queues_[index];
    if (!q.up) continue;
    q.up = false;
    ++q.generation;
    q.stats.lost_link_down += q.backlog.size();
    q.backlog.clear();
    q.busy = false;
  }
}

bool Network::link_up(NodeId a, NodeId b) const {
  return queues_[queue_index(a, b)].up;
}

const SwitchCounters& Network::counters(NodeId sw) const { return counters_.at(sw.value); }

const QueueStats& Network::queue_stats(NodeId from, NodeId to) const {
  return queues_[queue_index(from, to)].stats;
}

std::size_t Network::backlog(NodeId from, NodeId to) const {
  return queues_[queue_index(from, to)].backlog.size();
}

}  // namespace mcast::dp
