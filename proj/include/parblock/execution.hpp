#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "parblock/contract.hpp"
#include "parblock/crypto.hpp"
#include "parblock/depgraph.hpp"
#include "parblock/messages.hpp"
#include "parblock/runtime.hpp"
#include "parblock/state.hpp"

namespace parblock {

// Raised (and latched) when two different blocks both reach a quorum for the
// same sequence number.
class ProtocolViolation : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// NEWBLOCK quorum validation

struct AcceptorOptions {
    std::vector<NodeId> orderers;
    std::size_t quorum = 1;
    bool verify_graph = true;  // rebuild the dependency graph and compare
    GraphOptions graph;
};

enum class CopyVerdict {
    counted,
    buffered,  // predecessor block not yet valid; chain check deferred
    duplicate,
    bad_signature,
    unknown_orderer,
    bad_chain,
    stale,
};

std::string_view to_string(CopyVerdict v);

// Collects signed NEWBLOCK copies and releases blocks, in sequence order, once
// `quorum` orderers sent byte-identical content chained to the previous valid
// block.
class BlockAcceptor {
  public:
    struct Offer {
        CopyVerdict verdict = CopyVerdict::counted;
        std::vector<NewBlockMsg> valid;     // newly valid blocks, in order
        std::uint64_t graph_pair_checks = 0;  // work spent re-verifying graphs
        std::size_t signatures_checked = 0;
    };

    BlockAcceptor(std::shared_ptr<const KeyRing> keys, AcceptorOptions options);

    // Throws ProtocolViolation on conflicting quorums; the acceptor then stays halted.
    Offer offer(const NewBlockMsg& copy);

    std::uint64_t next_seq() const { return next_seq_; }
    bool halted() const { return halted_; }
    // Content that reached quorum but failed structural or graph checks.
    std::uint64_t rejected_quorums() const { return rejected_quorums_; }

  private:
    struct Tally {
        std::map<NodeId, Bytes> votes;
        std::map<Bytes, std::size_t> counts;
        std::optional<Bytes> accepted;
        std::set<Bytes> rejected;
    };

    // Chain-checks and counts a signature-verified copy whose predecessor is known.
    CopyVerdict count(const NewBlockMsg& copy, Offer& out);
    bool structurally_valid(const NewBlockMsg& m, Offer& out) const;
    Digest hash_before(std::uint64_t seq) const;

    std::shared_ptr<const KeyRing> keys_;
    AcceptorOptions options_;
    std::set<NodeId> orderer_set_;
    std::uint64_t next_seq_ = 0;
    std::vector<Digest> accepted_hashes_;
    std::map<std::uint64_t, Tally> tallies_;
    std::map<std::uint64_t, std::vector<NewBlockMsg>> buffered_;
    bool halted_ = false;
    std::uint64_t rejected_quorums_ = 0;
};

// ---------------------------------------------------------------------------
// Executor

struct ExecutorConfig {
    std::map<AppId, std::set<NodeId>> agents;
    std::map<AppId, std::size_t> tau;
    std::vector<NodeId> orderers;
    std::vector<NodeId> executors;  // COMMIT multicast group (self excluded on send)
    std::size_t newblock_quorum = 1;
    Micros result_timeout{2'000'000};
    bool verify_graph = true;
    GraphOptions graph;
    // Receives a REPLY for every decided transaction when set.
    std::optional<NodeId> reply_to;

    // Throws std::invalid_argument on violated invariants.
    void validate() const;
    bool is_agent(NodeId e, AppId a) const;
    std::size_t tau_of(AppId a) const;
};

struct ExecutorCosts {
    Micros verify_newblock{0};
    Micros verify_commit{0};
    Micros sign{0};
    Micros per_block{0};
    Micros apply_txn{0};
    Micros exec_txn{0};  // worker time of one contract invocation
    double graph_pair_us = 0.0;
};

struct BlockMetrics {
    std::uint64_t seq = 0;
    std::size_t txns = 0;
    std::size_t committed = 0;
    std::size_t aborted = 0;
    std::size_t failed = 0;
    std::size_t owned = 0;
    std::size_t commits_sent = 0;
    Micros valid_at{0};
    Micros first_exec_start{-1};
    Micros last_exec_end{-1};
    Micros last_decided{0};
    Micros finalized_at{0};
};

struct DecidedEvent {
    const Transaction& txn;
    BlockTimestamp position;
    TxnStatus status;
    Micros at;
};

class ExecutorNode final : public Node {
  public:
    ExecutorNode(NodeId self, ExecutorConfig config, std::shared_ptr<const KeyRing> keys,
                 std::shared_ptr<const ContractRegistry> contracts, StateStore genesis, ExecutorCosts costs = {});
    ~ExecutorNode() override;

    void start(Runtime& rt) override;
    void on_frame(NodeId from, const Frame& frame) override;

    NodeId id() const { return self_; }
    const StateStore& state() const { return state_; }
    const Ledger& ledger() const { return ledger_; }
    Ledger& ledger() { return ledger_; }
    const std::vector<BlockMetrics>& metrics() const { return metrics_; }
    bool halted() const { return halted_; }
    const std::string& halt_reason() const { return halt_reason_; }
    const std::vector<std::string>& incidents() const { return incidents_; }
    std::uint64_t commits_sent() const { return commits_sent_; }
    bool idle() const { return !current_ && queue_.empty(); }

    void on_decided(std::function<void(const DecidedEvent&)> fn) { on_decided_ = std::move(fn); }
    void on_finalized(std::function<void(const BlockMetrics&)> fn) { on_finalized_ = std::move(fn); }
    // Fires on the scheduler context when a local execution is dispatched (index).
    void on_dispatch(std::function<void(std::uint32_t, Micros)> fn) { on_dispatch_ = std::move(fn); }
    // Fires for every outgoing COMMIT.
    void on_commit_sent(std::function<void(const CommitMsg&)> fn) { on_commit_sent_ = std::move(fn); }
    // Test hook: alters local results before they are recorded and sent.
    void set_result_mutator(std::function<void(const Transaction&, ResultRecords&)> fn) {
        mutator_ = std::move(fn);
    }

  private:
    struct BlockRun;
    struct ExecTask;

    void handle_newblock(const Frame& frame);
    void handle_commit(NodeId from, const Frame& frame);
    void start_next_block();
    void dispatch(std::uint32_t x);
    void on_executed(std::uint64_t seq, std::uint32_t x, ResultRecords result);
    void flush();
    void record_votes(const CommitMsg& msg);
    void decide(std::uint32_t x, TxnStatus status, const ResultRecords* result);
    void mark_done(std::uint32_t x);
    void arm_timeout(std::uint32_t x);
    void maybe_finalize();
    std::optional<Value> read_for(const Key& k, std::uint32_t x) const;
    void halt(std::string reason);

    NodeId self_;
    ExecutorConfig config_;
    std::shared_ptr<const KeyRing> keys_;
    std::shared_ptr<const ContractRegistry> contracts_;
    ExecutorCosts costs_;
    BlockAcceptor acceptor_;
    StateStore state_;
    Ledger ledger_;
    std::vector<NodeId> peers_;

    std::deque<NewBlockMsg> queue_;
    std::unique_ptr<BlockRun> current_;
    std::map<std::uint64_t, std::vector<CommitMsg>> early_commits_;

    std::vector<BlockMetrics> metrics_;
    std::vector<std::string> incidents_;
    std::uint64_t commits_sent_ = 0;
    bool halted_ = false;
    std::string halt_reason_;

    std::function<void(const DecidedEvent&)> on_decided_;
    std::function<void(const BlockMetrics&)> on_finalized_;
    std::function<void(std::uint32_t, Micros)> on_dispatch_;
    std::function<void(const CommitMsg&)> on_commit_sent_;
    std::function<void(const Transaction&, ResultRecords&)> mutator_;
};

}  // namespace parblock
