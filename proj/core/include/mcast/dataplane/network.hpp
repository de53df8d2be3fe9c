#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "mcast/dataplane/flow_table.hpp"
#include "mcast/dataplane/packet.hpp"
#include "mcast/sim/simulator.hpp"
#include "mcast/topology/topology.hpp"

namespace mcast::dp {

class HostAgent {
 public:
  virtual ~HostAgent() = default;
  virtual void on_packet(const Packet& pkt) = 0;
};

class ControlPlane {
 public:
  virtual ~ControlPlane() = default;
  // A packet punted by switch `sw` that arrived there via `in_port`.
  virtual void on_packet_in(NodeId sw, NodeId in_port, const Packet& pkt) = 0;
};

struct NetworkConfig {
  // One-way delay of the switch <-> controller channel.
  sim::SimTime control_latency = sim::SimTime::from_us(100);
};

// Per-switch forwarding decisions. Every packet that enters a switch is
// either matched or missed; matched packets yield one copy per Output
// action (each enqueued or tail-dropped) and one punt per ToController.
struct SwitchCounters {
  uint64_t packets_in = 0;
  uint64_t matched = 0;
  uint64_t misses = 0;
  uint64_t punted = 0;
  uint64_t copies_expected = 0;
  uint64_t copies_enqueued = 0;
  uint64_t copies_dropped = 0;
};

struct QueueStats {
  uint64_t enqueued = 0;
  uint64_t dropped = 0;        // tail drops and enqueues onto a down link
  uint64_t departed = 0;
  uint64_t bytes_departed = 0;
  uint64_t lost_link_down = 0; // flushed or in flight when the link failed
  std::size_t max_backlog = 0;
};

enum class QueueEventType : uint8_t { Enqueue, Drop, Depart };

struct QueueEvent {
  QueueEventType type;
  NodeId from;
  NodeId to;
  sim::SimTime at;
  const Packet* packet;
};

// Switches, hosts and store-and-forward links. Each directed link has a
// drop-tail FIFO (the in-service packet counts toward the limit) drained
// at exactly the link capacity, followed by the propagation delay.
class Network {
 public:
  Network(sim::Simulator& sim, const topo::Topology& topo, NetworkConfig config = {});
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void attach_host(NodeId host, HostAgent* agent);
  void attach_controller(ControlPlane* controller) { controller_ = controller; }

  // Host transmission onto its first (lowest-neighbor) link.
  void send_from_host(NodeId host, Packet pkt);
  // Controller-originated packet leaving `sw` through `port`, after the
  // control channel latency.
  void packet_out(NodeId sw, NodeId port, Packet pkt);

  // Packet arriving at switch `sw` through `in_port`.
  void forward(NodeId sw, NodeId in_port, const Packet& pkt);

  void apply_table_update(NodeId sw, std::span<const FlowEntry> add,
                          std::span<const FlowMatch> remove);
  bool is_switch(NodeId id) const { return topo_.is_switch(id); }
  const FlowTable& table(NodeId sw) const;

  // Fails a link in both directions: queued and in-flight packets are lost.
  void set_link_down(NodeId a, NodeId b);
  bool link_up(NodeId a, NodeId b) const;

  const SwitchCounters& counters(NodeId sw) const;
  const QueueStats& queue_stats(NodeId from, NodeId to) const;
  std::size_t backlog(NodeId from, NodeId to) const;
  uint64_t host_uplink_missing() const { return host_uplink_missing_; }

  const topo::Topology& topology() const { return topo_; }
  sim::Simulator& simulator() { return sim_; }

  void set_queue_observer(std::function<void(const QueueEvent&)> observer) {
    observer_ = std::move(observer);
  }

 private:
  struct Queue {
    NodeId from;
    NodeId to;
    uint64_t capacity_bps = 0;
    sim::SimTime prop_delay;
    uint32_t limit = 0;
    std::deque<Packet> backlog;
    bool busy = false;
    bool up = true;
    uint64_t generation = 0;  // bumped on failure to void pending events
    QueueStats stats;
  };

  std::size_t queue_index(NodeId from, NodeId to) const;
  // Returns false when the packet was dropped.
  bool enqueue(std::size_t q, Packet pkt);
  void start_service(std::size_t q);
  void finish_service(std::size_t q, uint64_t generation);
  void arrive(NodeId node, NodeId from, const Packet& pkt, std::size_t q, uint64_t generation);
  void notify(QueueEventType type, const Queue& q, const Packet& pkt);

  sim::Simulator& sim_;
  topo::Topology topo_;
  NetworkConfig config_;
  std::vector<Queue> queues_;
  std::vector<FlowTable> tables_;
  std::vector<SwitchCounters> counters_;
  std::vector<HostAgent*> hosts_;
  ControlPlane* controller_ = nullptr;
  uint64_t host_uplink_missing_ = 0;
  std::function<void(const QueueEvent&)> observer_;
};

}  // namespace mcast::dp
