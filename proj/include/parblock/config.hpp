#pragma once

// TOML configuration files.
//
// Run configuration (all keys optional):
//
//   orderers = [1, 2, 3]            # explicit orderer ids (socket deployments)
//   consensus = "leader_sequencer"  # or "replicated_log"
//   multicast = "all_orderers"      # or "leader_only"
//   [block]    max_txns, xov_max_txns, max_bytes, max_interval_ms
//   [quorum]   newblock, tau, endorsement
//   [topology] orderers, executors, non_executors
//   [net]      latency_min_ms, latency_mean_ms, loss_rate, seed, clock = "virtual" | "wall"
//   [[net.inject]] group = "clients" | "orderers" | "executors" | "non_executors", add_ms
//   [run]      warmup_ms, measure_ms, drain_ms, ramp = [...], ramp_start, ramp_max, ramp_factor,
//              saturation_gain, ramp_patience, workers, xov_workers, scheme, key_seed, result_timeout_ms,
//              endorse_timeout_ms, verify_graph, transitive_reduction
//   [costs]    any CostModel field, in microseconds
//   [workload] any WorkloadSpec field (scope = "intra_app" | "cross_app")
//   [acl]      "<client id>" = [app ids]
//   [nodes.<id>] addr = "host:port"

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "parblock/bench.hpp"

namespace parblock {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct FileConfig {
    RunConfig run;
    std::map<NodeId, std::string> addrs;           // nodes.<id>.addr
    std::vector<NodeId> orderer_ids;               // top-level `orderers`
    std::map<ClientId, std::set<AppId>> acl;       // [acl]; empty means everyone may use every app
    bool has_workload = false;
};

// Throws ConfigError with the offending key.
FileConfig parse_config(std::string_view toml_text, const RunConfig& base = {});
FileConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

// A workload spec file: either top-level keys or a [workload] table.
WorkloadSpec load_workload_spec(const std::filesystem::path& path);
WorkloadSpec parse_workload_spec(std::string_view toml_text);

}  // namespace parblock
