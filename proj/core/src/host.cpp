#include "mcast/endhost/host.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mcast/error.hpp"
#include "mcast/mgmt/codec.hpp"

namespace mcast::host {

using mgmt::ManagementMessage;
using sim::EventKind;

HostBase::HostBase(dp::Network& net, NodeId self)
    : net_(net), sim_(net.simulator()), self_(self) {
  expects(net.topology().is_host(self), "host agent on a non-host node");
  net_.attach_host(self, this);
}

void HostBase::send_mgmt(ManagementMessage msg) {
  mgmt_sent_.push_back(msg);
  if (filter_ && filter_(msg)) return;
  net_.send_from_host(self_, dp::make_packet(mgmt::kMgmtAddress, address(), mgmt::encode(msg)));
}

void HostBase::on_packet(const dp::Packet& pkt) {
  if (pkt.dst_addr == address()) {
    if (!pkt.payload) {
      ++malformed_;
      return;
    }
    try {
      on_mgmt(mgmt::decode(*pkt.payload));
    } catch (const mgmt::DecodeError&) {
      ++malformed_;
    }
    return;
  }
  on_data(pkt);
}

// ---- Sender ----

Sender::Sender(dp::Network& net, NodeId self, SenderConfig config)
    : HostBase(net, self), config_(config), splitter_(config.pacing) {
  expects(config.payload_bytes > 0 && config.payload_bytes <= dp::kMaxPayload,
          "Sender: payload size out of range");
}

void Sender::start_session(uint32_t group_id, uint64_t block_len) {
  expects(phase_ == SenderPhase::Idle, "start_session: sender already used");
  expects(block_len > 0, "start_session: empty block");
  expects(!net_.topology().incident(self_).empty(), "start_session: sender not attached");
  group_id_ = group_id;
  block_len_ = block_len;
  remaining_ = block_len;
  phase_ = SenderPhase::Initiating;
  send_init();
}

void Sender::send_init() {
  ++init_attempts_;
  send_mgmt(ManagementMessage{address(), mgmt::SessionInit{group_id_, self_, block_len_}});
  const unsigned attempt = init_attempts_;
  sim_.schedule_in(config_.retry.interval, EventKind::TimerFire, self_.value, [this, attempt] {
    if (phase_ != SenderPhase::Initiating || attempt != init_attempts_) return;
    if (init_attempts_ < config_.retry.max_attempts) {
      send_init();
    } else {
      phase_ = SenderPhase::Failed;
      fail(fmt::format("SessionInit for group {} unanswered after {} attempts", group_id_,
                       init_attempts_));
    }
  });
}

void Sender::on_mgmt(const ManagementMessage& msg) {
  if (const auto* reply = std::get_if<mgmt::SessionInitReply>(&msg.body)) {
    if (phase_ != SenderPhase::Initiating) return;  // late reply to a retry
    if (reply->status != mgmt::Status::Ok) {
      phase_ = SenderPhase::Failed;
      fail(fmt::format("SessionInit for group {} refused", group_id_));
      return;
    }
    session_id_ = reply->session_id;
    started_at_ = sim_.now();
    install_trees(reply->trees);
    pump();
  } else if (const auto* update = std::get_if<mgmt::NetworkUpdate>(&msg.body)) {
    on_network_update(*update);
  }
}

void Sender::install_trees(std::span<const TreeShare> trees) {
  const uint64_t start = trees.empty() ? 0 : sim_.next_random(trees.size());
  splitter_.set_trees(trees, sim_.now(), start);
  for (const TreeShare& t : trees) next_subflow_seq_.try_emplace(t.route, 0);
  phase_ = trees.empty() ? SenderPhase::Paused : SenderPhase::Sending;
}

void Sender::on_network_update(const mgmt::NetworkUpdate& msg) {
  if (msg.session_id != session_id_ || session_id_ == 0) return;
  if (phase_ != SenderPhase::Sending && phase_ != SenderPhase::Paused) return;
  if (msg.trees == splitter_.trees()) return;
  // Tags that leave the set forget their counters, so a tag that comes
  // back later starts again from subflow_seq 0.
  std::map<RouteTag, uint64_t> kept;
  for (const TreeShare& t : msg.trees) {
    auto it = next_subflow_seq_.find(t.route);
    kept[t.route] = it == next_subflow_seq_.end() ? 0 : it->second;
  }
  next_subflow_seq_ = std::move(kept);
  install_trees(msg.trees);
  pump();
}

Emission Sender::split_next(SimTime now) {
  expects(phase_ == SenderPhase::Sending || phase_ == SenderPhase::Paused,
          "split_next: no active session");
  if (remaining_ == 0) return SplitDone{};
  const uint32_t len = static_cast<uint32_t>(std::min<uint64_t>(remaining_, config_.payload_bytes));
  const SplitDecision decision = splitter_.next(now, dp::kHeaderLen + len);
  if (const auto* blocked = std::get_if<SplitBlocked>(&decision)) return *blocked;

  const RouteTag route = std::get<SplitChoice>(decision).route;
  const uint64_t offset = block_len_ - remaining_;
  dp::Packet pkt = dp::make_packet(mgmt::group_address(group_id_), address(),
                                   block_slice(offset, len));
  pkt.route_tag = route;
  pkt.session_id = session_id_;
  pkt.subflow_seq = next_subflow_seq_[route]++;
  pkt.global_seq = next_global_seq_++;
  remaining_ -= len;
  bytes_per_tree_[route] += len;
  ++packets_per_tree_[route];
  return pkt;
}

void Sender::pump() {
  const uint64_t generation = ++pump_generation_;
  while (phase_ == SenderPhase::Sending) {
    Emission e = split_next(sim_.now());
    if (auto* pkt = std::get_if<dp::Packet>(&e)) {
      net_.send_from_host(self_, std::move(*pkt));
    } else if (const auto* blocked = std::get_if<SplitBlocked>(&e)) {
      if (blocked->until != SimTime::max()) {
        sim_.schedule(blocked->until, EventKind::TimerFire, self_.value, [this, generation] {
          if (generation == pump_generation_) pump();
        });
      }
      return;
    } else {
      end_session();
      return;
    }
  }
}

void Sender::end_session() {
  expects(phase_ == SenderPhase::Sending || phase_ == SenderPhase::Paused,
          "end_session: no active session");
  expects(remaining_ == 0, "end_session: block not fully sent");
  phase_ = SenderPhase::Finished;
  ++pump_generation_;
  const ManagementMessage end{address(), mgmt::SessionEnd{session_id_}};
  if (config_.end_linger == SimTime{}) {
    send_mgmt(end);
    return;
  }
  sim_.schedule_in(config_.end_linger, EventKind::TimerFire, self_.value, [this, end] { send_mgmt(end); });
}

// ---- Receiver ----

Receiver::Receiver(dp::Network& net, NodeId self, ReceiverConfig config)
    : HostBase(net, self), config_(config) {
  expects(config.sample_window > SimTime{}, "Receiver: sample window must be positive");
  expects(!config.reporting || config.report_interval > SimTime{},
          "Receiver: report interval must be positive");
}

void Receiver::join(uint32_t group_id) {
  joined_.insert(group_id);
  join_attempts_[group_id] = 0;
  const uint64_t generation = ++next_join_generation_;
  join_generation_[group_id] = generation;
  send_join(group_id, generation);
  if (config_.reporting && !reporting_started_) {
    reporting_started_ = true;
    schedule_report();
  }
}

void Receiver::send_join(uint32_t group_id, uint64_t generation) {
  const unsigned attempt = ++join_attempts_[group_id];
  send_mgmt(ManagementMessage{address(), mgmt::GroupJoin{group_id, self_}});
  sim_.schedule_in(config_.retry.interval, EventKind::TimerFire, self_.value,
                   [this, group_id, generation, attempt] {
                     auto it = join_generation_.find(group_id);
                     if (it == join_generation_.end() || it->second != generation) return;
                     if (confirmed_.contains(group_id) || join_attempts_[group_id] != attempt) return;
                     if (attempt < config_.retry.max_attempts) {
                       send_join(group_id, generation);
                     } else {
                       joined_.erase(group_id);
                       join_generation_.erase(group_id);
                       fail(fmt::format("GroupJoin for group {} unanswered after {} attempts",
                                        group_id, attempt));
                     }
                   });
}

void Receiver::leave(uint32_t group_id) {
  joined_.erase(group_id);
  confirmed_.erase(group_id);
  join_generation_.erase(group_id);
  send_mgmt(ManagementMessage{address(), mgmt::GroupLeave{group_id, self_}});
}

void Receiver::on_mgmt(const ManagementMessage& msg) {
  const auto* reply = std::get_if<mgmt::GroupJoinReply>(&msg.body);
  if (reply == nullptr || !join_generation_.contains(reply->group_id)) return;
  if (reply->status == mgmt::Status::Ok) {
    confirmed_.insert(reply->group_id);
  } else {
    joined_.erase(reply->group_id);
    join_generation_.erase(reply->group_id);
    fail(fmt::format("GroupJoin for group {} refused", reply->group_id));
  }
}

uint64_t Receiver::receive_packet(const dp::Packet& pkt, SimTime now) {
  if (!mgmt::is_group_address(pkt.dst_addr) ||
      !joined_.contains(mgmt::group_of_address(pkt.dst_addr))) {
    ++strays_;
    return 0;
  }
  auto [it, inserted] = sessions_.try_emplace(
      pkt.session_id, SessionRx{ReassemblyBuffer(config_.buffer_limit, config_.gap_timeout)});
  SessionRx& rx = it->second;
  const std::optional<SimTime> deadline = rx.buffer.gap_deadline();
  const uint64_t delivered = deliver(rx, rx.buffer.insert(pkt, now), now);
  arm_gap_timer(pkt.session_id, deadline);
  return delivered;
}

uint64_t Receiver::deliver(SessionRx& rx, std::vector<dp::Packet> packets, SimTime now) {
  uint64_t delivered = 0;
  const std::size_t window = static_cast<std::size_t>(now.ns() / config_.sample_window.ns());
  for (const dp::Packet& p : packets) {
    if (p.payload) rx.digest.update(std::span(*p.payload).first(p.payload_len));
    delivered += p.payload_len;
    rx.bytes_per_tree[p.route_tag] += p.payload_len;
    if (samples_.size() <= window) samples_.resize(window + 1);
    samples_[window][p.route_tag] += p.payload_len;
  }
  if (delivered > 0) {
    rx.delivered_bytes += delivered;
    rx.report_bytes += delivered;
    rx.last_delivery = now;
  }
  return delivered;
}

// One timer per gap: armed when the buffer starts holding packets back.
void Receiver::arm_gap_timer(uint32_t session_id, std::optional<SimTime> previous) {
  const std::optional<SimTime> deadline = sessions_.at(session_id).buffer.gap_deadline();
  if (!deadline || deadline == previous) return;
  sim_.schedule(*deadline, EventKind::TimerFire, self_.value, [this, session_id] {
    SessionRx& rx = sessions_.at(session_id);
    const std::optional<SimTime> before = rx.buffer.gap_deadline();
    deliver(rx, rx.buffer.expire(sim_.now()), sim_.now());
    arm_gap_timer(session_id, before);
  });
}

std::vector<mgmt::StatsReport> Receiver::report_stats(SimTime) {
  std::vector<mgmt::StatsReport> reports;
  for (auto& [id, rx] : sessions_) {
    reports.push_back(mgmt::StatsReport{id, self_, rx.report_bytes, config_.report_interval});
    rx.report_bytes = 0;
  }
  if (reports.empty()) reports.push_back(mgmt::StatsReport{0, self_, 0, config_.report_interval});
  for (const auto& r : reports) send_mgmt(ManagementMessage{address(), r});
  return reports;
}

void Receiver::schedule_report() {
  sim_.schedule_in(config_.report_interval, EventKind::TimerFire, self_.value, [this] {
    report_stats(sim_.now());
    schedule_report();
  });
}

const SessionRx* Receiver::session(uint32_t session_id) const {
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : &it->second;
}

uint64_t Receiver::delivered_bytes() const {
  uint64_t total = 0;
  for (const auto& [id, rx] : sessions_) total += rx.delivered_bytes;
  return total;
}

}  // namespace mcast::host
