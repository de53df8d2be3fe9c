#include "mcast/experiment/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mcast/controller/controller.hpp"
#include "mcast/dataplane/network.hpp"
#include "mcast/endhost/host.hpp"

namespace mcast::exp {

namespace {

constexpr SimTime kJoinPoll = SimTime::from_ms(1);
constexpr SimTime kJoinDeadline = SimTime::from_seconds(1);

std::string pacing_name(host::PacingMode mode) {
  return mode == host::PacingMode::Paced ? "paced" : "unpaced";
}

std::string seconds_text(SimTime t) { return fmt::format("{}", static_cast<double>(t.ns()) / 1e9); }

SimTime parse_seconds(const std::string& text) {
  const double s = std::stod(text);
  if (!(s >= 0)) throw std::invalid_argument("negative time: " + text);
  return SimTime::from_ns(static_cast<uint64_t>(std::llround(s * 1e9)));
}

std::string fingerprint(const topo::Topology& topo) {
  const std::string text = topo::serialize(topo);
  host::StreamDigest digest;
  digest.update(std::as_bytes(std::span(text.data(), text.size())));
  return fmt::format("{:016x}", digest.value());
}

uint64_t block_prefix_digest(uint64_t len) {
  constexpr uint64_t kChunk = 1 << 20;
  host::StreamDigest digest;
  for (uint64_t off = 0; off < len; off += kChunk) {
    const auto chunk = host::block_slice(off, static_cast<std::size_t>(std::min(kChunk, len - off)));
    digest.update(chunk);
  }
  return digest.value();
}

double mean_bps(uint64_t bytes, uint64_t windows, SimTime window) {
  if (windows == 0) return 0.0;
  return static_cast<double>(bytes) * 8.0 / (static_cast<double>(windows) * window.seconds());
}

}  // namespace

topo::Topology load_topology(const std::string& source) {
  if (source == "paper") return topo::paper_topology();
  std::ifstream in(source);
  if (!in) throw ConfigError(fmt::format("topology: cannot open '{}'", source));
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return topo::parse_topology(buffer.str());
  } catch (const topo::ParseError& e) {
    throw ConfigError(fmt::format("topology '{}': {}", source, e.what()));
  }
}

void validate(const ScenarioConfig& cfg, const topo::Topology& topo) {
  if (cfg.max_trees < 1) throw ConfigError("trees: must be at least 1");
  if (cfg.block_bytes == 0) throw ConfigError("bytes: must be positive");
  if (cfg.sample_window == SimTime{}) throw ConfigError("window: must be positive");
  if (cfg.duration == SimTime{}) throw ConfigError("duration: must be positive");
  if (cfg.duration.ns() % cfg.sample_window.ns() != 0) {
    throw ConfigError("duration: must be a whole number of sample windows");
  }
  if (cfg.payload_bytes == 0 || cfg.payload_bytes > dp::kMaxPayload) {
    throw ConfigError(fmt::format("payload: must be 1..{}", dp::kMaxPayload));
  }
  if (cfg.reassembly_limit == 0) throw ConfigError("reassembly limit: must be positive");
  if (cfg.group_id > mgmt::kMaxGroupId) throw ConfigError("group: id out of range");
  const auto sender = topo.find(cfg.sender);
  if (!sender || !topo.is_host(*sender)) {
    throw ConfigError(fmt::format("sender: '{}' is not a host", cfg.sender));
  }
  std::set<std::string> seen;
  for (const std::string& r : cfg.receivers) {
    const auto id = topo.find(r);
    if (!id || !topo.is_host(*id)) throw ConfigError(fmt::format("receiver: '{}' is not a host", r));
    if (r == cfg.sender) throw ConfigError("receiver: the sender cannot receive");
    if (!seen.insert(r).second) throw ConfigError(fmt::format("receiver: '{}' listed twice", r));
  }
  if (cfg.failure) {
    const auto a = topo.find(cfg.failure->a);
    const auto b = topo.find(cfg.failure->b);
    if (!a || !b || !topo.find_link(*a, *b)) {
      throw ConfigError(fmt::format("link: no link {}-{}", cfg.failure->a, cfg.failure->b));
    }
  }
}

double row_goodput_bps(const GoodputRow& row, SimTime window) {
  return static_cast<double>(row.bytes) * 8.0 / window.seconds();
}

GoodputFold fold_rows(const std::vector<GoodputRow>& rows, SimTime window,
                      std::optional<SimTime> fail_at) {
  GoodputFold fold;
  std::set<uint64_t> ends;
  std::set<uint64_t> pre_ends;
  std::set<uint64_t> post_ends;
  std::map<std::pair<std::string, uint16_t>, uint64_t> tree_bytes;
  std::map<std::string, uint64_t> pre_bytes;
  std::map<std::string, uint64_t> post_bytes;
  for (const GoodputRow& row : rows) {
    ends.insert(row.t_end.ns());
    fold.receiver_bytes[row.receiver] += row.bytes;
    tree_bytes[{row.receiver, row.route.value}] += row.bytes;
    fold.total_bytes += row.bytes;
    if (fail_at) {
      if (row.t_end <= *fail_at) {
        pre_ends.insert(row.t_end.ns());
        pre_bytes[row.receiver] += row.bytes;
      } else if (row.t_end.ns() >= window.ns() && row.t_end - window >= *fail_at) {
        post_ends.insert(row.t_end.ns());
        post_bytes[row.receiver] += row.bytes;
      }
    }
  }
  fold.windows = ends.size();
  for (const auto& [r, bytes] : fold.receiver_bytes) {
    fold.receiver_mean_bps[r] = mean_bps(bytes, fold.windows, window);
    if (fail_at) {
      fold.pre_failure_bps[r] = mean_bps(pre_bytes[r], pre_ends.size(), window);
      fold.post_failure_bps[r] = mean_bps(post_bytes[r], post_ends.size(), window);
    }
  }
  for (const auto& [key, bytes] : tree_bytes) {
    fold.tree_mean_bps[key] = mean_bps(bytes, fold.windows, window);
  }
  return fold;
}

RunResult run_scenario(const ScenarioConfig& cfg) {
  const topo::Topology topo = load_topology(cfg.topology);
  validate(cfg, topo);

  RunResult result;
  RunSummary& summary = result.summary;
  summary.topology = cfg.topology;
  summary.topology_fingerprint = fingerprint(topo);
  summary.max_trees = cfg.max_trees;
  summary.seed = cfg.seed;
  summary.pacing = cfg.pacing;
  summary.block_bytes = cfg.block_bytes;
  summary.duration = cfg.duration;
  summary.window = cfg.sample_window;

  sim::Simulator sim(cfg.seed);
  dp::Network net(sim, topo);
  ctl::ControllerConfig ctl_config;
  ctl_config.max_trees = cfg.max_trees;
  ctl_config.member_check = cfg.member_check;
  ctl::Controller controller(net, topo, ctl_config);
  controller.start();

  const NodeId sender_id = topo.at(cfg.sender);
  host::SenderConfig sender_config;
  sender_config.payload_bytes = cfg.payload_bytes;
  sender_config.pacing = cfg.pacing;
  host::Sender sender(net, sender_id, sender_config);

  std::vector<NodeId> receiver_ids;
  if (cfg.receivers.empty()) {
    for (const topo::Node& n : topo.nodes()) {
      if (n.kind == topo::NodeKind::Host && n.id != sender_id) receiver_ids.push_back(n.id);
    }
  } else {
    for (const std::string& r : cfg.receivers) receiver_ids.push_back(topo.at(r));
  }
  host::ReceiverConfig receiver_config;
  receiver_config.buffer_limit = cfg.reassembly_limit;
  receiver_config.sample_window = cfg.sample_window;
  std::vector<std::unique_ptr<host::Receiver>> receivers;
  for (NodeId id : receiver_ids) {
    summary.receivers.push_back(topo.node(id).label);
    receivers.push_back(std::make_unique<host::Receiver>(net, id, receiver_config));
    receivers.back()->join(cfg.group_id);
  }

  if (cfg.failure && cfg.failure->at < cfg.duration) {
    const NodeId a = topo.at(cfg.failure->a);
    const NodeId b = topo.at(cfg.failure->b);
    summary.failure_injected = cfg.failure;
    sim.schedule(cfg.failure->at, sim::EventKind::HostAction, a.value, [&net, &controller, &sim, a, b] {
      net.set_link_down(a, b);
      // The adjacent switch reports the port change to the controller.
      sim.schedule_in(dp::NetworkConfig{}.control_latency, sim::EventKind::HostAction,
                      sim::kControllerTarget, [&controller, a, b] { controller.handle_link_failure(a, b); });
    });
  }

  auto all_joined = [&] {
    return std::all_of(receivers.begin(), receivers.end(),
                       [&](const auto& r) { return r->confirmed(cfg.group_id); });
  };
  auto any_errors = [&] {
    return std::any_of(receivers.begin(), receivers.end(),
                       [](const auto& r) { return !r->errors().empty(); });
  };
  while (!all_joined() && !any_errors() && sim.now() < kJoinDeadline) {
    sim.run_until(sim.now() + kJoinPoll);
  }
  if (all_joined()) sender.start_session(cfg.group_id, cfg.block_bytes);

  auto completed = [&] {
    if (sender.phase() != host::SenderPhase::Finished) return false;
    return std::all_of(receivers.begin(), receivers.end(), [&](const auto& r) {
      const host::SessionRx* rx = r->session(sender.session_id());
      return rx != nullptr && rx->buffer.buffered() == 0 &&
             rx->buffer.next_expected() == sender.next_global_seq();
    });
  };

  SimTime end = cfg.sample_window;
  while (end <= sim.now()) end += cfg.sample_window;
  for (; end <= cfg.duration; end += cfg.sample_window) {
    sim.run_until(end);
    if (sender.phase() == host::SenderPhase::Failed || sender.phase() == host::SenderPhase::Idle) break;
    if (completed()) break;
  }
  if (end > cfg.duration) end = cfg.duration;
  summary.end_time = end;

  for (const auto& r : receivers) {
    for (const std::string& e : r->errors()) summary.errors.push_back(e);
  }
  for (const std::string& e : sender.errors()) summary.errors.push_back(e);
  if (sender.phase() == host::SenderPhase::Idle || sender.phase() == host::SenderPhase::Failed) {
    summary.ok = false;
    summary.failure = summary.errors.empty() ? "session never started" : summary.errors.front();
  }

  for (const auto& sent : controller.outbox()) {
    const auto* reply = std::get_if<mgmt::SessionInitReply>(&sent.msg.body);
    if (reply != nullptr && reply->status == mgmt::Status::Ok) {
      for (const auto& t : reply->trees) summary.initial_share_bps += t.share_bps;
      break;
    }
  }
  for (const auto& [tag, bytes] : sender.bytes_per_tree()) summary.route_tags.push_back(tag.value);

  const uint64_t windows = end.ns() / cfg.sample_window.ns();
  for (uint64_t w = 0; w < windows; ++w) {
    const SimTime t_end = SimTime::from_ns((w + 1) * cfg.sample_window.ns());
    for (std::size_t i = 0; i < receivers.size(); ++i) {
      const auto& samples = receivers[i]->samples();
      for (uint16_t tag : summary.route_tags) {
        uint64_t bytes = 0;
        if (w < samples.size()) {
          auto it = samples[w].find(RouteTag{tag});
          if (it != samples[w].end()) bytes = it->second;
        }
        result.rows.push_back({t_end, summary.receivers[i], RouteTag{tag}, bytes});
      }
    }
  }
  std::optional<SimTime> fail_at;
  if (summary.failure_injected) fail_at = summary.failure_injected->at;
  summary.goodput = fold_rows(result.rows, cfg.sample_window, fail_at);

  summary.completed = summary.ok && completed();
  if (summary.completed && sender.started_at()) {
    SimTime last;
    for (const auto& r : receivers) {
      const host::SessionRx* rx = r->session(sender.session_id());
      if (rx->last_delivery) last = std::max(last, *rx->last_delivery);
    }
    summary.completion_time = last - *sender.started_at();
  }

  std::map<uint64_t, uint64_t> digest_of_len;
  for (std::size_t i = 0; i < receivers.size(); ++i) {
    const std::string& label = summary.receivers[i];
    const host::SessionRx* rx = receivers[i]->session(sender.session_id());
    if (rx == nullptr || sender.session_id() == 0) {
      summary.skipped[label] = 0;
      summary.duplicates[label] = 0;
      summary.stream_intact[label] = false;
      continue;
    }
    summary.skipped[label] = rx->buffer.skipped();
    summary.duplicates[label] = rx->buffer.duplicates();
    const uint64_t len = rx->delivered_bytes;
    auto it = digest_of_len.find(len);
    if (it == digest_of_len.end()) it = digest_of_len.emplace(len, block_prefix_digest(len)).first;
    summary.stream_intact[label] = rx->buffer.skipped() == 0 && rx->digest.value() == it->second;
  }

  for (const topo::Node& n : topo.nodes()) {
    if (n.kind != topo::NodeKind::Switch) continue;
    uint64_t drops = 0;
    for (NodeId nbr : topo.neighbors(n.id)) drops += net.queue_stats(n.id, nbr).dropped;
    summary.switch_drops[n.label] = drops;
    summary.switch_misses[n.label] = net.counters(n.id).misses;
  }
  for (const topo::Link& l : topo.links()) {
    summary.lost_link_down += net.queue_stats(l.a, l.b).lost_link_down;
    summary.lost_link_down += net.queue_stats(l.b, l.a).lost_link_down;
  }
  summary.tables_consistent = controller.tables_consistent();
  return result;
}

RunResult link_failure_scenario(ScenarioConfig cfg, SimTime fail_at, const std::string& a,
                                const std::string& b) {
  cfg.failure = LinkFailure{a, b, fail_at};
  return run_scenario(cfg);
}

void write_csv(std::ostream& out, const std::vector<GoodputRow>& rows, SimTime window) {
  out << "t_end_s,receiver,route_tag,bytes,goodput_bps\n";
  for (const GoodputRow& row : rows) {
    fmt::print(out, "{},{},{},{},{}\n", seconds_text(row.t_end), row.receiver, row.route.value,
               row.bytes, row_goodput_bps(row, window));
  }
}

std::vector<GoodputRow> read_csv(std::istream& in) {
  std::vector<GoodputRow> rows;
  std::string line;
  if (!std::getline(in, line) || line != "t_end_s,receiver,route_tag,bytes,goodput_bps") {
    throw std::runtime_error("goodput CSV: missing or unexpected header");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw std::runtime_error(fmt::format("goodput CSV line {}: expected 5 fields", line_no));
    }
    GoodputRow row;
    row.t_end = parse_seconds(fields[0]);
    row.receiver = fields[1];
    row.route = RouteTag{static_cast<uint16_t>(std::stoul(fields[2]))};
    row.bytes = std::stoull(fields[3]);
    rows.push_back(row);
  }
  return rows;
}

void write_summary(std::ostream& out, const RunSummary& s) {
  auto kv = [&out](std::string_view key, const auto& value) { fmt::print(out, "{}={}\n", key, value); };
  auto join = [](const auto& items) { return fmt::format("{}", fmt::join(items, ",")); };
  kv("status", s.ok ? "ok" : "failed");
  if (!s.ok) kv("failure", s.failure);
  kv("topology", s.topology);
  kv("topology_fingerprint", s.topology_fingerprint);
  kv("max_trees", s.max_trees);
  kv("seed", s.seed);
  kv("pacing", pacing_name(s.pacing));
  kv("block_bytes", s.block_bytes);
  kv("duration_s", seconds_text(s.duration));
  kv("window_s", seconds_text(s.window));
  kv("end_s", seconds_text(s.end_time));
  kv("windows", s.goodput.windows);
  kv("receivers", join(s.receivers));
  kv("route_tags", join(s.route_tags));
  kv("initial_share_bps", s.initial_share_bps);
  kv("completed", s.completed);
  if (s.completion_time) kv("completion_time_s", seconds_text(*s.completion_time));
  kv("total_bytes_delivered", s.goodput.total_bytes);
  for (const auto& [r, bps] : s.goodput.receiver_mean_bps) kv("mean_goodput_bps." + r, bps);
  for (const auto& [r, bytes] : s.goodput.receiver_bytes) kv("bytes_delivered." + r, bytes);
  for (const auto& [key, bps] : s.goodput.tree_mean_bps) {
    kv(fmt::format("tree_goodput_bps.{}.{}", key.first, key.second), bps);
  }
  if (s.failure_injected) {
    kv("fail_link", s.failure_injected->a + "-" + s.failure_injected->b);
    kv("fail_at_s", seconds_text(s.failure_injected->at));
    for (const auto& [r, bps] : s.goodput.pre_failure_bps) kv("pre_failure_goodput_bps." + r, bps);
    for (const auto& [r, bps] : s.goodput.post_failure_bps) kv("post_failure_goodput_bps." + r, bps);
  }
  for (const auto& [r, n] : s.skipped) kv("skipped_packets." + r, n);
  for (const auto& [r, n] : s.duplicates) kv("duplicate_packets." + r, n);
  for (const auto& [r, ok] : s.stream_intact) kv("stream_intact." + r, ok);
  for (const auto& [sw, n] : s.switch_drops) kv("drops." + sw, n);
  for (const auto& [sw, n] : s.switch_misses) kv("misses." + sw, n);
  kv("lost_link_down", s.lost_link_down);
  kv("tables_consistent", s.tables_consistent);
  for (std::size_t i = 0; i < s.errors.size(); ++i) kv(fmt::format("error.{}", i), s.errors[i]);
}

std::map<std::string, std::string> read_summary(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("summary: line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

void write_run(const std::string& dir, const RunResult& result) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::ofstream csv(base / "goodput.csv");
  write_csv(csv, result.rows, result.summary.window);
  std::ofstream summary(base / "summary.txt");
  write_summary(summary, result.summary);
  if (!csv || !summary) throw std::runtime_error("cannot write run output to " + dir);
}

std::vector<ComparisonRow> compare(const std::map<std::string, std::string>& a,
                                   const std::map<std::string, std::string>& b) {
  auto get = [](const std::map<std::string, std::string>& m, const std::string& key) {
    auto it = m.find(key);
    return it == m.end() ? std::optional<std::string>() : std::optional(it->second);
  };
  const auto fa = get(a, "topology_fingerprint");
  const auto fb = get(b, "topology_fingerprint");
  if (!fa || !fb) throw CompareError("summary lacks a topology fingerprint");
  if (*fa != *fb) throw CompareError("runs use different topologies; refusing to compare");

  std::vector<ComparisonRow> rows;
  auto ratio = [](double num, double den) { return den == 0 ? 0.0 : num / den; };
  for (const auto& [key, value] : a) {
    if (!key.starts_with("mean_goodput_bps.") && key != "total_bytes_delivered") continue;
    const auto other = get(b, key);
    if (!other) continue;
    const double va = std::stod(value);
    const double vb = std::stod(*other);
    rows.push_back({key, va, vb, ratio(vb, va)});
  }
  const auto ta = get(a, "completion_time_s");
  const auto tb = get(b, "completion_time_s");
  if (ta && tb) {
    const double va = std::stod(*ta);
    const double vb = std::stod(*tb);
    rows.push_back({"completion_time_s", va, vb, ratio(va, vb)});
  }
  return rows;
}

std::vector<ComparisonRow> compare_dirs(const std::string& dir_a, const std::string& dir_b) {
  auto load = [](const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "summary.txt");
    if (!in) throw CompareError("no summary.txt in " + dir);
    return read_summary(in);
  };
  return compare(load(dir_a), load(dir_b));
}

}  // namespace mcast::exp
