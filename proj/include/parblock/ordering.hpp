#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <variant>
#include <vector>

#include "parblock/crypto.hpp"
#include "parblock/depgraph.hpp"
#include "parblock/messages.hpp"
#include "parblock/runtime.hpp"

namespace parblock {

// ---------------------------------------------------------------------------
// Configuration

enum class ConsensusKind { leader_sequencer, replicated_log };
enum class MulticastMode { all_orderers, leader_only };

std::string_view to_string(ConsensusKind k);
ConsensusKind parse_consensus_kind(std::string_view s);

struct OrdererConfig {
    std::vector<NodeId> orderers;  // orderers.front() is the initial leader
    std::vector<NodeId> executors;
    std::map<ClientId, std::set<AppId>> acl;
    std::size_t max_block_bytes = 1 << 20;
    std::size_t max_block_txns = 200;
    Micros max_block_interval{50'000};
    std::size_t newblock_quorum = 1;
    ConsensusKind consensus = ConsensusKind::leader_sequencer;
    MulticastMode multicast = MulticastMode::all_orderers;
    bool build_graph = true;  // false for the order-execute and XOV baselines
    GraphOptions graph;

    // Throws std::invalid_argument on violated invariants.
    void validate() const;
};

// Virtual CPU costs charged on an orderer's main context.
struct OrdererCosts {
    Micros verify_request{0};
    Micros per_entry{0};
    Micros per_block{0};
    double graph_pair_us = 0.0;
    Micros sign{0};
};

// ---------------------------------------------------------------------------
// Admission: signature, access control, exactly-once.

enum class RejectReason { bad_sig, unauthorized, duplicate };
std::string_view to_string(RejectReason r);

struct AdmitResult {
    bool accepted = true;
    RejectReason reason = RejectReason::bad_sig;

    static AdmitResult ok() { return {}; }
    static AdmitResult reject(RejectReason r) { return {false, r}; }
};

class Admission {
  public:
    Admission(std::shared_ptr<const KeyRing> keys, std::map<ClientId, std::set<AppId>> acl)
        : keys_(std::move(keys)), acl_(std::move(acl)) {}

    AdmitResult admit(const RequestMsg& req);
    std::optional<std::uint64_t> high_water(ClientId c) const;

  private:
    std::shared_ptr<const KeyRing> keys_;
    std::map<ClientId, std::set<AppId>> acl_;
    std::map<ClientId, std::uint64_t> high_water_;
};

// ---------------------------------------------------------------------------
// Block cutting

struct CutMarker {
    std::uint64_t block_seq = 0;
    bool operator==(const CutMarker&) const = default;
};

using ConsensusEntry = std::variant<RequestMsg, CutMarker>;

void encode(Writer& w, const ConsensusEntry& e);
ConsensusEntry decode_consensus_entry(Reader& r);

struct BlockLimits {
    std::size_t max_txns = 200;
    std::size_t max_bytes = 1 << 20;
};

enum class CutTrigger { size, count, timer };

// Takes the longest prefix of `pending` within both limits (at least one
// transaction) for size/count triggers; a timer trigger takes everything.
Block cut_block(std::deque<RequestMsg>& pending, CutTrigger trigger, const BlockLimits& limits, std::uint64_t seq,
                const Digest& prev_hash);

// Deterministic batching of the consensus delivery stream. Identical delivery
// streams produce byte-identical blocks.
class BlockCutter {
  public:
    explicit BlockCutter(BlockLimits limits) : limits_(limits) {}

    std::vector<Block> append(RequestMsg req);
    // Cuts the open block if it is still `marker.block_seq`; stale markers
    // (the block was already cut by size or count) are ignored.
    std::optional<Block> apply(const CutMarker& marker);

    std::uint64_t open_seq() const { return next_seq_; }
    bool open_empty() const { return pending_.empty(); }
    std::size_t pending() const { return pending_.size(); }
    const Digest& last_hash() const { return prev_hash_; }

  private:
    Block seal(CutTrigger trigger);

    BlockLimits limits_;
    std::deque<RequestMsg> pending_;
    std::size_t pending_bytes_ = 0;
    std::uint64_t next_seq_ = 0;
    Digest prev_hash_ = Digest::zero();
};

// ---------------------------------------------------------------------------
// Consensus engines

class ConsensusEngine {
  public:
    using Deliver = std::function<void(const ConsensusEntry&)>;

    virtual ~ConsensusEngine() = default;
    virtual void start(Runtime& rt, Deliver deliver) = 0;
    virtual NodeId leader() const = 0;
    bool is_leader(NodeId self) const { return leader() == self; }
    // Leader only: proposes an entry for the next slot.
    virtual void submit(ConsensusEntry entry) = 0;
    virtual void on_message(NodeId from, Reader& r) = 0;
    // Digests of delivered entries, in delivery order.
    const std::vector<Digest>& delivery_log() const { return log_; }

  protected:
    void record(const ConsensusEntry& e);
    std::vector<Digest> log_;
};

// One designated orderer assigns slots and relays them to the others.
class LeaderSequencer final : public ConsensusEngine {
  public:
    LeaderSequencer(std::vector<NodeId> orderers, Micros per_entry_cost = Micros{0});
    void start(Runtime& rt, Deliver deliver) override;
    NodeId leader() const override { return orderers_.front(); }
    void submit(ConsensusEntry entry) override;
    void on_message(NodeId from, Reader& r) override;

  private:
    void deliver_ready();

    std::vector<NodeId> orderers_;
    Micros per_entry_cost_;
    Runtime* rt_ = nullptr;
    Deliver deliver_;
    std::uint64_t next_slot_ = 0;
    std::uint64_t next_deliver_ = 0;
    std::map<std::uint64_t, ConsensusEntry> buffered_;
};

// Crash-fault replicated log: the leader appends, followers acknowledge, and
// an entry is delivered once a majority (leader included) holds it.
// 2f+1 orderers tolerate f crashed followers.
class ReplicatedLog final : public ConsensusEngine {
  public:
    ReplicatedLog(std::vector<NodeId> orderers, Micros per_entry_cost = Micros{0});
    void start(Runtime& rt, Deliver deliver) override;
    NodeId leader() const override { return orderers_.front(); }
    void submit(ConsensusEntry entry) override;
    void on_message(NodeId from, Reader& r) override;

    std::uint64_t commit_index() const { return committed_; }

  private:
    void advance_to(std::uint64_t committed);

    std::vector<NodeId> orderers_;
    Micros per_entry_cost_;
    Runtime* rt_ = nullptr;
    Deliver deliver_;
    std::map<std::uint64_t, ConsensusEntry> entries_;
    std::map<std::uint64_t, std::set<NodeId>> acks_;
    std::uint64_t next_index_ = 0;  // leader: next index to assign
    std::uint64_t committed_ = 0;   // entries [0, committed_) are committed
    std::uint64_t delivered_ = 0;
};

std::unique_ptr<ConsensusEngine> make_consensus(ConsensusKind kind, std::vector<NodeId> orderers,
                                                Micros per_entry_cost);

// ---------------------------------------------------------------------------
// Orderer node

class OrdererNode final : public Node {
  public:
    struct CutEvent {
        const Block& block;
        const DependencyGraph& graph;
        Micros at;
    };

    OrdererNode(NodeId self, OrdererConfig config, std::shared_ptr<const KeyRing> keys, OrdererCosts costs = {});

    void start(Runtime& rt) override;
    void on_frame(NodeId from, const Frame& frame) override;

    NodeId id() const { return self_; }
    bool is_leader() const { return engine_->is_leader(self_); }
    const ConsensusEngine& engine() const { return *engine_; }
    const Admission& admission() const { return admission_; }
    // Canonical hashes of every block this orderer cut, in order.
    const std::vector<Digest>& block_hashes() const { return block_hashes_; }
    std::uint64_t admitted() const { return admitted_; }
    std::uint64_t rejected() const { return rejected_; }

    // Test hook: mutate outgoing NEWBLOCK messages (Byzantine-orderer injection).
    void set_newblock_mutator(std::function<void(NewBlockMsg&)> fn) { mutator_ = std::move(fn); }
    void on_cut(std::function<void(const CutEvent&)> fn) { on_cut_ = std::move(fn); }
    // Silences the orderer's NEWBLOCK multicast.
    void set_silent(bool silent) { silent_ = silent; }

  private:
    void handle_request(NodeId origin, RequestMsg req);
    void on_deliver(const ConsensusEntry& entry);
    void publish(Block block);
    void arm_timer();

    NodeId self_;
    OrdererConfig config_;
    std::shared_ptr<const KeyRing> keys_;
    OrdererCosts costs_;
    Admission admission_;
    BlockCutter cutter_;
    std::unique_ptr<ConsensusEngine> engine_;
    std::optional<std::uint64_t> timer_for_seq_;
    std::vector<Digest> block_hashes_;
    std::uint64_t admitted_ = 0;
    std::uint64_t rejected_ = 0;
    std::function<void(NewBlockMsg&)> mutator_;
    std::function<void(const CutEvent&)> on_cut_;
    bool silent_ = false;
};

}  // namespace parblock
