#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "parblock/contract.hpp"
#include "parblock/crypto.hpp"
#include "parblock/state.hpp"
#include "parblock/types.hpp"

namespace parblock {

enum class ConflictScope { intra_app, cross_app };
std::string_view to_string(ConflictScope s);
ConflictScope parse_conflict_scope(std::string_view s);

class InfeasibleWorkload : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct WorkloadSpec {
    std::uint32_t num_apps = 3;
    std::uint32_t agents_per_app = 1;
    std::uint32_t num_clients = 200;
    std::uint32_t accounts_per_client = 9;
    std::uint64_t initial_balance = 1'000'000'000;
    double contention = 0.0;
    ConflictScope scope = ConflictScope::intra_app;
    std::uint32_t hot_keys = 1;
    // Each transfer reads its source and writes source and destination.
    std::uint32_t transfers_per_txn = 1;
    // Stream positions per contention window; match the block size.
    std::uint32_t window = 200;
    std::uint64_t txn_budget = 10'000;
    std::uint32_t max_amount = 10;
    // Fraction of transfers that overdraw on purpose.
    double overdraft_rate = 0.0;
    std::uint64_t seed = 1;

    // Throws InfeasibleWorkload.
    void validate() const;
    bool operator==(const WorkloadSpec&) const = default;
};

Key account_key(ClientId c, std::uint32_t index);
Key hot_key(std::uint32_t index);

// Initial balances: every client account and every hot account.
StateStore workload_genesis(const WorkloadSpec& spec);
// Total units in a state's account records.
std::uint64_t total_balance(const StateStore& state);
ContractRegistry accounting_contracts(std::uint32_t num_apps);

// Deterministic transfer stream. Positions are numbered globally in creation
// order; within every `window` consecutive positions exactly
// round(contention * window) are hot transfers into a shared hot account.
class WorkloadGenerator {
  public:
    WorkloadGenerator(WorkloadSpec spec, std::shared_ptr<const KeyRing> keys);

    // Next signed request for client `c`.
    Transaction next(ClientId c);
    // Unsigned operation the next call would build, advancing the stream.
    Operation next_op(ClientId c);

    std::uint64_t position() const { return position_; }
    const WorkloadSpec& spec() const { return spec_; }
    bool hot_at(std::uint64_t position) const;

  private:
    WorkloadSpec spec_;
    std::shared_ptr<const KeyRing> keys_;
    std::mt19937_64 rng_;
    std::uint64_t position_ = 0;
    std::uint64_t hot_count_ = 0;
    std::uint32_t hot_per_window_ = 0;
    std::map<ClientId, std::uint64_t> ts_;
    std::map<ClientId, std::uint64_t> cold_round_;
};

// Full stream of `txn_budget` requests; stream position i belongs to client
// i mod num_clients.
std::vector<Transaction> generate(const WorkloadSpec& spec, const KeyRing& keys);

void provision_clients(KeyRing& keys, std::uint32_t num_clients);

// Workload file: "PBWL" magic, u32 format version, spec, u64 count, then
// length-prefixed canonical transactions.
void write_workload(const std::filesystem::path& path, const WorkloadSpec& spec, const std::vector<Transaction>& txns);
struct WorkloadFile {
    WorkloadSpec spec;
    std::vector<Transaction> txns;
};
WorkloadFile read_workload(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Topology

struct TopologyOptions {
    std::uint32_t orderers = 3;
    std::uint32_t executors = 0;  // 0: one per agent slot (num_apps * agents_per_app)
    std::size_t tau = 1;
    std::size_t newblock_quorum = 2;
    std::uint32_t non_executors = 1;  // replicas hosting no contract
};

struct Topology {
    std::vector<NodeId> orderers;
    std::vector<NodeId> executors;  // agents of at least one application
    std::vector<NodeId> passive;    // replicas that only maintain state
    NodeId client_host{1000};
    NodeId observer;
    std::map<AppId, std::set<NodeId>> agents;
    std::map<AppId, std::size_t> tau;
    std::map<ClientId, std::set<AppId>> acl;
    std::size_t newblock_quorum = 1;

    // Throws std::invalid_argument.
    void validate() const;
    std::vector<NodeId> all_nodes() const;
    // Every node keeping a ledger: executors then passive replicas.
    std::vector<NodeId> replicas() const;
};

Topology assign_topology(const WorkloadSpec& spec, const TopologyOptions& options = {});

}  // namespace parblock
