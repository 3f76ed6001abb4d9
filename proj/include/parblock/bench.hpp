#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "parblock/baselines.hpp"
#include "parblock/client_host.hpp"
#include "parblock/execution.hpp"
#include "parblock/ordering.hpp"
#include "parblock/sim_network.hpp"
#include "parblock/workload.hpp"

namespace parblock {

// Virtual CPU costs (microseconds) charged by the simulator.
struct CostModel {
    Micros order_verify_request{20};
    Micros order_per_entry{2};
    Micros order_per_block{8'000};
    Micros order_sign{30};
    double graph_pair_us = 0.4;

    Micros verify_newblock{50};
    Micros verify_commit{50};
    Micros sign{30};
    Micros replica_per_block{500};
    Micros apply_txn{10};
    Micros exec_txn{1'000};

    Micros verify_client{50};
    Micros verify_endorsement{50};
    Micros validate_txn{50};
};

enum class NodeGroup { clients, orderers, executors, non_executors };
std::string_view to_string(NodeGroup g);
NodeGroup parse_node_group(std::string_view s);

struct LatencyInjection {
    NodeGroup group = NodeGroup::clients;
    LatencyModel model;
};

struct RunConfig {
    Paradigm paradigm = Paradigm::oxii;
    WorkloadSpec workload;
    std::optional<std::filesystem::path> workload_file;
    TopologyOptions topology;

    std::size_t block_size = 200;
    std::size_t xov_block_size = 0;  // 0: same as block_size
    std::size_t max_block_bytes = 64u << 20;
    Micros block_interval{20'000};
    ConsensusKind consensus = ConsensusKind::leader_sequencer;
    MulticastMode multicast = MulticastMode::all_orderers;

    NetConfig net;
    std::vector<LatencyInjection> injections;

    Micros warmup{1'000'000};
    Micros measure{2'000'000};
    Micros drain{20'000'000};

    // Explicit client counts; empty means a geometric ramp.
    std::vector<std::size_t> ramp;
    std::size_t ramp_start = 25;
    std::size_t ramp_max = 3'200;
    double ramp_factor = 2.0;
    double saturation_gain = 0.05;
    // Consecutive steps without that gain before the ramp stops.
    std::size_t ramp_patience = 2;

    std::size_t workers = 8;
    std::size_t xov_workers = 1;
    SignatureScheme scheme = SignatureScheme::hmac;
    std::uint64_t key_seed = 7;
    CostModel costs;
    GraphOptions graph;
    bool verify_graph = true;
    Micros result_timeout{5'000'000};
    Micros endorse_timeout{5'000'000};
    std::size_t endorsement_policy = 1;

    std::optional<std::filesystem::path> ledger_dir;
    std::string param;  // label of the swept value

    std::size_t effective_block_size() const;
};

struct StepReport {
    std::size_t clients = 0;
    double throughput_tps = 0;
    double p50_ms = 0, p95_ms = 0, p99_ms = 0;
    double mean_ms = 0;
    std::uint64_t submitted = 0;  // within the measurement window
    std::uint64_t committed = 0;
    std::uint64_t aborted = 0;
    std::uint64_t failed = 0;
    std::uint64_t rejected = 0;  // counted inside `failed`
    double abort_rate = 0;
    double block_fill_avg = 0;
    double formation_wait_ms = 0;
    double post_order_ms = 0;
    double conflict_fraction = 0;
    std::vector<std::uint64_t> per_second;
    bool valid = true;
    std::string diagnostics;
};

struct RunReport {
    Paradigm paradigm = Paradigm::oxii;
    std::string param;
    std::string clock;
    std::vector<StepReport> steps;
    std::size_t chosen = 0;  // last step that still gained throughput
    const StepReport& peak() const { return steps.at(chosen); }
    bool valid() const;
};

// One protocol node of a deployment, built from the shared run configuration.
struct BuiltNode {
    std::shared_ptr<Node> node;
    std::size_t workers = 1;
    std::shared_ptr<OrdererNode> orderer;
    std::shared_ptr<ExecutorNode> oxii;
    std::shared_ptr<OxExecutorNode> ox;
    std::shared_ptr<XovPeerNode> xov;
};

// Orderers and replicas only; the client host is built separately.
BuiltNode build_node(const RunConfig& config, const Topology& topology, NodeId id, std::shared_ptr<KeyRing> keys,
                     const StateStore& genesis, std::shared_ptr<const ContractRegistry> contracts);

ClientHostNode::Options client_options(const RunConfig& config, const Topology& topology);

// A fully wired simulated deployment.
class SimDeployment {
  public:
    SimDeployment(const RunConfig& config, const Topology& topology, StateStore genesis,
                  std::shared_ptr<const ContractRegistry> contracts, std::shared_ptr<KeyRing> keys);

    // Adds the client host (before start()).
    ClientHostNode& attach_clients(std::vector<ClientId> clients, ClientHostNode::Source source);

    SimNetwork& net() { return net_; }
    const Topology& topology() const { return topology_; }
    const RunConfig& config() const { return config_; }
    std::shared_ptr<KeyRing> keys() const { return keys_; }
    ClientHostNode* clients() { return client_host_.get(); }

    OrdererNode& orderer(std::size_t i) { return *orderers_.at(i); }
    std::size_t orderer_count() const { return orderers_.size(); }
    ExecutorNode* oxii(NodeId id);
    OxExecutorNode* ox(NodeId id);
    XovPeerNode* xov(NodeId id);

    std::vector<NodeId> replicas() const { return topology_.replicas(); }
    const Ledger& ledger(NodeId id) const;
    Ledger& ledger(NodeId id);
    const StateStore& state(NodeId id) const;
    const std::vector<BlockMetrics>& metrics(NodeId id) const;
    bool any_halted(std::string* why = nullptr) const;
    bool idle() const;

    void start();

  private:
    RunConfig config_;
    Topology topology_;
    std::shared_ptr<KeyRing> keys_;
    SimNetwork net_;
    std::vector<std::shared_ptr<OrdererNode>> orderers_;
    std::map<NodeId, std::shared_ptr<ExecutorNode>> oxii_;
    std::map<NodeId, std::shared_ptr<OxExecutorNode>> ox_;
    std::map<NodeId, std::shared_ptr<XovPeerNode>> xov_;
    std::shared_ptr<ClientHostNode> client_host_;
};

// Keys for every node of a topology plus `num_clients` clients.
std::shared_ptr<KeyRing> make_keyring(SignatureScheme scheme, std::uint64_t seed, const Topology& topology,
                                      std::uint32_t num_clients);

struct StepArtifacts {
    StateStore genesis;
    std::map<NodeId, std::vector<LedgerEntry>> ledgers;
};

// One closed-loop run with a fixed client count.
StepReport run_step(const RunConfig& config, std::size_t clients, StepArtifacts* artifacts = nullptr);
// Ramps clients until throughput saturates.
RunReport run(const RunConfig& config);

enum class SweepParam { block_size, contention, latency_group };
std::string_view to_string(SweepParam p);
SweepParam parse_sweep_param(std::string_view s);

// One report per (value, paradigm). A failing cell is recorded and skipped.
std::vector<RunReport> sweep(const RunConfig& base, SweepParam param, const std::vector<std::string>& values,
                             const std::vector<Paradigm>& paradigms);
// Applies one swept value to a config.
void apply_param(RunConfig& config, SweepParam param, const std::string& value);

void write_csv(std::ostream& out, const std::vector<RunReport>& reports);
void write_svg(const std::filesystem::path& path, const std::vector<RunReport>& reports, const std::string& x_label);

// Persists ledgers as <dir>/node-<id>.ledger plus <dir>/genesis.state. With
// `replace`, other ledger files already in `dir` are removed first.
void persist_artifacts(const std::filesystem::path& dir, const StepArtifacts& artifacts, bool replace = true);

struct VerifyResult {
    bool ok = true;
    std::string check;  // which check failed
    std::optional<std::uint64_t> first_bad_block;
    std::string detail;
};

// Chain and cross-replica equality over every *.ledger file in `dir`.
VerifyResult verify_ledger_dir(const std::filesystem::path& dir);

// Full audit: chains, cross-replica equality, conservation, and replay of
// `sample` blocks through the sequential oracle.
VerifyResult verify_run(Paradigm paradigm, const std::filesystem::path& ledger_dir, std::size_t sample = 20,
                        std::uint64_t seed = 1);

// Reads the paradigm from the first data row of a report CSV.
Paradigm paradigm_of_report(const std::filesystem::path& csv);

}  // namespace parblock
