#pragma once

// Reference paradigms sharing the ordering service, contracts and state:
// order-execute (sequential on every node) and execute-order-validate
// (endorse, order, MVCC-validate).

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "parblock/contract.hpp"
#include "parblock/execution.hpp"
#include "parblock/messages.hpp"
#include "parblock/runtime.hpp"
#include "parblock/state.hpp"

namespace parblock {

// Executes one transaction against `state` without applying it. A missing
// contract aborts.
ResultRecords execute_on(const Transaction& txn, const StateStore& state, const ContractRegistry& contracts);
ResultRecords run_on(const Transaction& txn, const ReadView& view, const SmartContract* contract);

// Runs a block's transactions one by one in block order. Returns the status
// and committed write records of each.
struct SequentialOutcome {
    std::vector<TxnStatus> statuses;
    std::vector<ResultRecords> results;
};
SequentialOutcome execute_sequential(const Block& block, StateStore& state, const ContractRegistry& contracts);

// Shared plumbing for the baseline replicas: NEWBLOCK acceptance, ledger,
// decided-transaction hooks and replies.
struct ReplicaConfig {
    std::vector<NodeId> orderers;
    std::size_t newblock_quorum = 1;
    std::optional<NodeId> reply_to;
};

// ---------------------------------------------------------------------------
// Order-execute

class OxExecutorNode final : public Node {
  public:
    OxExecutorNode(NodeId self, ReplicaConfig config, std::shared_ptr<const KeyRing> keys,
                   std::shared_ptr<const ContractRegistry> contracts, StateStore genesis, ExecutorCosts costs = {});

    void on_frame(NodeId from, const Frame& frame) override;

    NodeId id() const { return self_; }
    const StateStore& state() const { return state_; }
    const Ledger& ledger() const { return ledger_; }
    Ledger& ledger() { return ledger_; }
    const std::vector<BlockMetrics>& metrics() const { return metrics_; }
    bool halted() const { return halted_; }
    bool idle() const { return !running_ && queue_.empty(); }

    void on_decided(std::function<void(const DecidedEvent&)> fn) { on_decided_ = std::move(fn); }

  private:
    void start_next();
    void run_txn(std::size_t i);

    NodeId self_;
    ReplicaConfig config_;
    std::shared_ptr<const ContractRegistry> contracts_;
    ExecutorCosts costs_;
    BlockAcceptor acceptor_;
    StateStore state_;
    Ledger ledger_;
    std::deque<NewBlockMsg> queue_;
    bool running_ = false;
    std::optional<NewBlockMsg> current_;
    LedgerEntry pending_;
    BlockMetrics block_metrics_;
    std::vector<BlockMetrics> metrics_;
    bool halted_ = false;
    std::function<void(const DecidedEvent&)> on_decided_;
};

// ---------------------------------------------------------------------------
// Execute-order-validate

struct EndorsementPolicy {
    std::map<AppId, std::size_t> required;  // missing apps require 1
    std::size_t of(AppId a) const;
    // Throws std::invalid_argument if a requirement exceeds |agents|.
    void validate(const std::map<AppId, std::set<NodeId>>& agents) const;
};

struct XovConfig {
    std::map<AppId, std::set<NodeId>> agents;
    EndorsementPolicy policy;
    ReplicaConfig replica;
};

struct XovCosts {
    Micros verify_client{0};
    Micros exec_txn{0};
    Micros sign{0};
    Micros verify_newblock{0};
    Micros verify_endorsement{0};
    Micros validate_txn{0};
    Micros per_block{0};
};

// Keys whose versions an endorsement records: ρ ∪ ω.
std::set<Key> versioned_keys(const Operation& op);

// Endorses `txn` against `state`: executes speculatively and records versions.
Endorsement endorse(const Transaction& txn, const StateStore& state, const SmartContract* contract, NodeId endorser);

// Validates a block in order against `state`, applying committed writes.
SequentialOutcome xov_validate(const Block& block, StateStore& state, const KeyRing& keys, const XovConfig& config);

// Client-side endorsement assembly.
class EndorsementCollector {
  public:
    enum class Status { pending, ready, mismatch };

    EndorsementCollector(Transaction txn, std::set<NodeId> endorsers, std::size_t required);
    Status add(const Endorsement& e);
    Status status() const { return status_; }
    RequestMsg request() const;
    const Transaction& txn() const { return txn_; }

  private:
    Transaction txn_;
    std::set<NodeId> endorsers_;
    std::size_t required_;
    std::map<NodeId, Endorsement> got_;
    Status status_ = Status::pending;
};

class XovPeerNode final : public Node {
  public:
    XovPeerNode(NodeId self, XovConfig config, std::shared_ptr<const KeyRing> keys,
                std::shared_ptr<const ContractRegistry> contracts, StateStore genesis, XovCosts costs = {});

    void on_frame(NodeId from, const Frame& frame) override;

    NodeId id() const { return self_; }
    const StateStore& state() const { return state_; }
    // Test hook: replaces the state endorsements are computed against.
    StateStore& mutable_state() { return state_; }
    const Ledger& ledger() const { return ledger_; }
    Ledger& ledger() { return ledger_; }
    const std::vector<BlockMetrics>& metrics() const { return metrics_; }
    std::uint64_t endorsements_sent() const { return endorsements_sent_; }
    bool halted() const { return halted_; }
    bool idle() const { return queue_.empty(); }

    void on_decided(std::function<void(const DecidedEvent&)> fn) { on_decided_ = std::move(fn); }

  private:
    void handle_endorse(NodeId from, const Frame& frame);
    void validate_queued();

    NodeId self_;
    XovConfig config_;
    std::shared_ptr<const KeyRing> keys_;
    std::shared_ptr<const ContractRegistry> contracts_;
    XovCosts costs_;
    BlockAcceptor acceptor_;
    StateStore state_;
    Ledger ledger_;
    std::deque<NewBlockMsg> queue_;
    std::vector<BlockMetrics> metrics_;
    std::uint64_t endorsements_sent_ = 0;
    bool halted_ = false;
    std::function<void(const DecidedEvent&)> on_decided_;
};

}  // namespace parblock
