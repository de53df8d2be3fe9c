// mcastsim: runs multi-tree multicast scenarios and compares their results.

#include <cmath>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mcast/experiment/experiment.hpp"

namespace {

using mcast::exp::ScenarioConfig;
using mcast::sim::SimTime;

struct RunOptions {
  std::string topology = "paper";
  unsigned trees = 3;
  uint64_t bytes = 100'000'000;
  double duration_s = 60;
  uint64_t seed = 1;
  std::string pacing = "paced";
  double window_ms = 100;
  std::string out = "run";
  std::string sender = "s";
  std::vector<std::string> receivers;
  uint32_t payload = 1458;
};

SimTime from_seconds(double s) {
  return SimTime::from_ns(static_cast<uint64_t>(std::llround(s * 1e9)));
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--topology", o.topology, "topology file, or 'paper'")->capture_default_str();
  cmd->add_option("--trees", o.trees, "maximum trees per session")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--bytes", o.bytes, "data block size in bytes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--duration", o.duration_s, "virtual seconds to simulate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--pacing", o.pacing, "sender pacing")
      ->check(CLI::IsMember({"paced", "unpaced"}))
      ->capture_default_str();
  cmd->add_option("--window", o.window_ms, "goodput sample window in ms")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--sender", o.sender, "sender host label")->capture_default_str();
  cmd->add_option("--receivers", o.receivers, "receiver host labels (default: all other hosts)")
      ->delimiter(',');
  cmd->add_option("--payload", o.payload, "payload bytes per packet")->capture_default_str();
}

ScenarioConfig to_config(const RunOptions& o) {
  ScenarioConfig cfg;
  cfg.topology = o.topology;
  cfg.max_trees = o.trees;
  cfg.block_bytes = o.bytes;
  cfg.duration = from_seconds(o.duration_s);
  cfg.seed = o.seed;
  cfg.pacing = o.pacing == "paced" ? mcast::host::PacingMode::Paced
                                   : mcast::host::PacingMode::Unpaced;
  cfg.sample_window = from_seconds(o.window_ms / 1000.0);
  cfg.sender = o.sender;
  cfg.receivers = o.receivers;
  cfg.payload_bytes = o.payload;
  return cfg;
}

int report(const mcast::exp::RunResult& result, const std::string& out) {
  mcast::exp::write_run(out, result);
  const auto& s = result.summary;
  if (!s.ok) {
    fmt::print(std::cerr, "session failed: {}\n", s.failure);
    return 1;
  }
  for (const auto& [r, bps] : s.goodput.receiver_mean_bps) {
    fmt::print("{:>8} mean goodput {:.3f} Mbps\n", r, bps / 1e6);
  }
  if (s.completion_time) {
    fmt::print("completed in {:.6f} s\n", s.completion_time->seconds());
  } else {
    fmt::print("not completed by {:.3f} s\n", s.end_time.seconds());
  }
  fmt::print("wrote {}/goodput.csv and {}/summary.txt\n", out, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-tree multicast simulator"};
  app.require_subcommand(1);

  RunOptions run_opts;
  CLI::App* run = app.add_subcommand("run", "run one scenario");
  add_run_options(run, run_opts);

  RunOptions fail_opts;
  double fail_at_s = 10;
  std::string link;
  CLI::App* fail = app.add_subcommand("fail-link", "run a scenario with a link failure");
  add_run_options(fail, fail_opts);
  fail->add_option("--at", fail_at_s, "failure time in virtual seconds")->required();
  fail->add_option("--link", link, "link to fail, as A-B")->required();

  std::string dir_a;
  std::string dir_b;
  CLI::App* cmp = app.add_subcommand("compare", "compare two run directories");
  cmp->add_option("dir_a", dir_a, "baseline run")->required();
  cmp->add_option("dir_b", dir_b, "other run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      return report(mcast::exp::run_scenario(to_config(run_opts)), run_opts.out);
    }
    if (fail->parsed()) {
      const auto dash = link.find('-');
      if (dash == std::string::npos || dash == 0 || dash + 1 == link.size()) {
        fmt::print(std::cerr, "--link: expected A-B, got '{}'\n", link);
        return 2;
      }
      const auto result = mcast::exp::link_failure_scenario(
          to_config(fail_opts), from_seconds(fail_at_s), link.substr(0, dash), link.substr(dash + 1));
      const int rc = report(result, fail_opts.out);
      for (const auto& [r, bps] : result.summary.goodput.post_failure_bps) {
        fmt::print("{:>8} after failure {:.3f} Mbps\n", r, bps / 1e6);
      }
      return rc;
    }
    const auto rows = mcast::exp::compare_dirs(dir_a, dir_b);
    fmt::print("{:<32} {:>16} {:>16} {:>10}\n", "metric", "A", "B", "ratio");
    for (const auto& row : rows) {
      fmt::print("{:<32} {:>16.6g} {:>16.6g} {:>10.4f}\n", row.metric, row.a, row.b, row.ratio);
    }
    return 0;
  } catch (const mcast::exp::ConfigError& e) {
    fmt::print(std::cerr, "invalid configuration: {}\n", e.what());
    return 2;
  } catch (const mcast::exp::CompareError& e) {
    fmt::print(std::cerr, "compare: {}\n", e.what());
    return 3;
  }
}
