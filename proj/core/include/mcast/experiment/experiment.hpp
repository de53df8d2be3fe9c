#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcast/endhost/load_splitter.hpp"
#include "mcast/routing/tree.hpp"
#include "mcast/sim/sim_time.hpp"
#include "mcast/topology/topology.hpp"

namespace mcast::exp {

using routing::RouteTag;
using sim::SimTime;
using topo::NodeId;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LinkFailure {
  std::string a;  // node labels
  std::string b;
  SimTime at;
};

struct ScenarioConfig {
  std::string topology = "paper";  // "paper" or a topology file path
  unsigned max_trees = 3;
  uint64_t block_bytes = 100'000'000;
  SimTime duration = SimTime::from_seconds(60);
  uint64_t seed = 1;
  host::PacingMode pacing = host::PacingMode::Paced;
  SimTime sample_window = SimTime::from_ms(100);
  std::string sender = "s";
  std::vector<std::string> receivers;  // empty: every other host
  uint32_t group_id = 1;
  uint32_t payload_bytes = 1458;
  std::size_t reassembly_limit = 4096;
  bool member_check = false;
  std::optional<LinkFailure> failure;
};

// "paper" or a path to a topology file.
topo::Topology load_topology(const std::string& source);

// Throws ConfigError naming the first bad field.
void validate(const ScenarioConfig& cfg, const topo::Topology& topo);

struct GoodputRow {
  SimTime t_end;
  std::string receiver;
  RouteTag route;
  uint64_t bytes = 0;
};

double row_goodput_bps(const GoodputRow& row, SimTime window);

// The part of a run summary that is a pure fold over the CSV rows.
struct GoodputFold {
  uint64_t windows = 0;
  std::map<std::string, uint64_t> receiver_bytes;
  std::map<std::string, double> receiver_mean_bps;
  std::map<std::pair<std::string, uint16_t>, double> tree_mean_bps;
  uint64_t total_bytes = 0;
  // Only when a failure time is given: windows ending at or before it, and
  // windows starting at or after it.
  std::map<std::string, double> pre_failure_bps;
  std::map<std::string, double> post_failure_bps;
};

GoodputFold fold_rows(const std::vector<GoodputRow>& rows, SimTime window,
                      std::optional<SimTime> fail_at = std::nullopt);

struct RunSummary {
  bool ok = true;
  std::string failure;  // why the session never ran
  std::string topology;
  std::string topology_fingerprint;
  unsigned max_trees = 0;
  uint64_t seed = 0;
  host::PacingMode pacing = host::PacingMode::Paced;
  uint64_t block_bytes = 0;
  SimTime duration;
  SimTime window;
  SimTime end_time;  // when the run stopped
  std::vector<std::string> receivers;
  std::vector<uint16_t> route_tags;  // every tag the sender used
  uint64_t initial_share_bps = 0;
  GoodputFold goodput;
  bool completed = false;
  std::optional<SimTime> completion_time;  // sender start to last delivery
  std::map<std::string, uint64_t> switch_drops;
  std::map<std::string, uint64_t> switch_misses;
  uint64_t lost_link_down = 0;
  std::map<std::string, uint64_t> skipped;
  std::map<std::string, uint64_t> duplicates;
  std::map<std::string, bool> stream_intact;  // delivered bytes match the block
  std::optional<LinkFailure> failure_injected;
  bool tables_consistent = true;
  std::vector<std::string> errors;
};

struct RunResult {
  RunSummary summary;
  std::vector<GoodputRow> rows;
};

RunResult run_scenario(const ScenarioConfig& cfg);
// run_scenario with a link failure; the link must exist.
RunResult link_failure_scenario(ScenarioConfig cfg, SimTime fail_at, const std::string& a,
                                const std::string& b);

void write_csv(std::ostream& out, const std::vector<GoodputRow>& rows, SimTime window);
std::vector<GoodputRow> read_csv(std::istream& in);
void write_summary(std::ostream& out, const RunSummary& summary);
std::map<std::string, std::string> read_summary(std::istream& in);

// Writes goodput.csv and summary.txt into `dir`, creating it if needed.
void write_run(const std::string& dir, const RunResult& result);

struct ComparisonRow {
  std::string metric;
  double a = 0;
  double b = 0;
  double ratio = 0;  // b / a for goodput, a / b for completion time
};

class CompareError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Refuses runs on different topologies.
std::vector<ComparisonRow> compare(const std::map<std::string, std::string>& a,
                                   const std::map<std::string, std::string>& b);
std::vector<ComparisonRow> compare_dirs(const std::string& dir_a, const std::string& dir_b);

}  // namespace mcast::exp
