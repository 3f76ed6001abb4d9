#include "parblock/execution.hpp"

#include <algorithm>
#include <stdexcept>

namespace parblock {

std::string_view to_string(CopyVerdict v) {
    switch (v) {
        case CopyVerdict::counted: return "counted";
        case CopyVerdict::buffered: return "buffered";
        case CopyVerdict::duplicate: return "duplicate";
        case CopyVerdict::bad_signature: return "bad_signature";
        case CopyVerdict::unknown_orderer: return "unknown_orderer";
        case CopyVerdict::bad_chain: return "bad_chain";
        case CopyVerdict::stale: return "stale";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// BlockAcceptor

BlockAcceptor::BlockAcceptor(std::shared_ptr<const KeyRing> keys, AcceptorOptions options)
    : keys_(std::move(keys)), options_(std::move(options)), orderer_set_(options_.orderers.begin(), options_.orderers.end()) {
    if (options_.quorum == 0 || options_.quorum > orderer_set_.size())
        throw std::invalid_argument("newblock quorum must be within [1, |orderers|]");
}

Digest BlockAcceptor::hash_before(std::uint64_t seq) const {
    return seq == 0 ? Digest::zero() : accepted_hashes_.at(seq - 1);
}

bool BlockAcceptor::structurally_valid(const NewBlockMsg& m, Offer& out) const {
    const auto& b = m.block;
    if (b.txns.empty()) return false;
    if (b.apps != apps_of(b.txns) || m.apps != b.apps) return false;
    if (m.graph.size() != b.txns.size()) return false;
    for (std::size_t i = 0; i < b.txns.size(); ++i)
        if (m.graph.nodes()[i] != b.txns[i].id) return false;
    if (!b.endorsements.empty() && b.endorsements.size() != b.txns.size()) return false;
    if (options_.verify_graph) {
        out.graph_pair_checks += graph_pair_checks(b.txns.size());
        if (build_graph(b, options_.graph) != m.graph) return false;
    }
    return true;
}

CopyVerdict BlockAcceptor::count(const NewBlockMsg& copy, Offer& out) {
    if (copy.prev_hash != hash_before(copy.seq) || copy.block.prev_hash != copy.prev_hash) return CopyVerdict::bad_chain;
    auto& tally = tallies_[copy.seq];
    if (tally.votes.contains(copy.orderer)) return CopyVerdict::duplicate;
    auto content = newblock_content_bytes(copy);
    tally.votes.emplace(copy.orderer, content);
    auto n = ++tally.counts[content];
    if (n < options_.quorum || tally.rejected.contains(content)) return CopyVerdict::counted;
    if (tally.accepted) {
        if (*tally.accepted != content) {
            halted_ = true;
            throw ProtocolViolation("conflicting NEWBLOCK quorums for block " + std::to_string(copy.seq));
        }
        return CopyVerdict::counted;
    }
    if (n != options_.quorum) return CopyVerdict::counted;
    if (!structurally_valid(copy, out)) {
        tally.rejected.insert(content);
        ++rejected_quorums_;
        return CopyVerdict::counted;
    }
    tally.accepted = content;
    accepted_hashes_.push_back(hash_block(copy.block));
    ++next_seq_;
    out.valid.push_back(copy);
    return CopyVerdict::counted;
}

BlockAcceptor::Offer BlockAcceptor::offer(const NewBlockMsg& copy) {
    Offer out;
    if (halted_) {
        out.verdict = CopyVerdict::stale;
        return out;
    }
    if (!orderer_set_.contains(copy.orderer)) {
        out.verdict = CopyVerdict::unknown_orderer;
        return out;
    }
    ++out.signatures_checked;
    if (!verify_newblock(*keys_, copy) || copy.block.seq != copy.seq) {
        out.verdict = CopyVerdict::bad_signature;
        return out;
    }
    if (copy.seq > next_seq_) {
        buffered_[copy.seq].push_back(copy);
        out.verdict = CopyVerdict::buffered;
        return out;
    }
    if (next_seq_ > 128 && copy.seq + 128 < next_seq_) {
        out.verdict = CopyVerdict::stale;
        return out;
    }
    out.verdict = count(copy, out);
    // A newly valid block may unlock copies that arrived ahead of it.
    while (!out.valid.empty() && buffered_.contains(next_seq_)) {
        auto copies = std::move(buffered_[next_seq_]);
        buffered_.erase(next_seq_);
        for (const auto& c : copies) count(c, out);
    }
    while (!tallies_.empty() && tallies_.begin()->first + 128 < next_seq_) tallies_.erase(tallies_.begin());
    return out;
}

// ---------------------------------------------------------------------------
// ExecutorConfig

void ExecutorConfig::validate() const {
    if (agents.empty()) throw std::invalid_argument("executor config has no applications");
    for (const auto& [app, set] : agents) {
        if (set.empty()) throw std::invalid_argument("application " + std::to_string(app.value) + " has no agents");
        auto t = tau_of(app);
        if (t == 0 || t > set.size())
            throw std::invalid_argument("tau for application " + std::to_string(app.value) +
                                        " must be within [1, |agents|]");
    }
    if (newblock_quorum == 0 || newblock_quorum > orderers.size())
        throw std::invalid_argument("newblock quorum must be within [1, |orderers|]");
    if (result_timeout <= Micros{0}) throw std::invalid_argument("result timeout must be positive");
}

bool ExecutorConfig::is_agent(NodeId e, AppId a) const {
    auto it = agents.find(a);
    return it != agents.end() && it->second.contains(e);
}

std::size_t ExecutorConfig::tau_of(AppId a) const {
    auto it = tau.find(a);
    return it == tau.end() ? 1 : it->second;
}

// ---------------------------------------------------------------------------
// ExecutorNode

struct ExecutorNode::BlockRun {
    NewBlockMsg msg;
    std::vector<AppId> app_of;
    std::unordered_map<TxnId, std::uint32_t> index_of;

    std::vector<char> owned, dispatched, executed, done;
    std::vector<std::optional<TxnStatus>> status;
    std::vector<ResultRecords> decided;
    std::vector<std::size_t> waiting;          // predecessors not yet done
    std::vector<std::size_t> undecided_preds;  // predecessors without an outcome
    std::vector<std::optional<Runtime::TimerId>> timers;
    std::vector<std::map<NodeId, Bytes>> votes;
    std::vector<std::map<Bytes, std::size_t>> tally;

    std::vector<std::pair<std::uint32_t, ResultRecords>> unflushed;
    std::size_t owned_pending = 0;
    std::size_t undecided = 0;

    // Per key: values written in this block, by block index.
    std::unordered_map<Key, std::map<std::uint32_t, Value>> local;    // executed here, undecided
    std::unordered_map<Key, std::map<std::uint32_t, Value>> applied;  // decided and applied
    std::unordered_map<Key, std::optional<Value>> base;               // value before the block

    BlockMetrics metrics;

    const Block& block() const { return msg.block; }
    const DependencyGraph& graph() const { return msg.graph; }
    std::uint64_t seq() const { return msg.seq; }
};

struct ExecutorNode::ExecTask {
    Transaction txn;
    ReadView view;
    ResultRecords result;
};

ExecutorNode::ExecutorNode(NodeId self, ExecutorConfig config, std::shared_ptr<const KeyRing> keys,
                           std::shared_ptr<const ContractRegistry> contracts, StateStore genesis, ExecutorCosts costs)
    : self_(self),
      config_(std::move(config)),
      keys_(keys),
      contracts_(std::move(contracts)),
      costs_(costs),
      acceptor_(keys, AcceptorOptions{config_.orderers, config_.newblock_quorum, config_.verify_graph, config_.graph}),
      state_(std::move(genesis)) {
    config_.validate();
    for (auto e : config_.executors)
        if (e != self_) peers_.push_back(e);
}

ExecutorNode::~ExecutorNode() = default;

void ExecutorNode::start(Runtime& rt) { Node::start(rt); }

void ExecutorNode::halt(std::string reason) {
    halted_ = true;
    halt_reason_ = std::move(reason);
    incidents_.push_back("halted: " + halt_reason_);
}

void ExecutorNode::on_frame(NodeId from, const Frame& frame) {
    if (halted_) return;
    try {
        switch (frame.type) {
            case FrameType::newblock: handle_newblock(frame); break;
            case FrameType::commit: handle_commit(from, frame); break;
            default: break;
        }
    } catch (const DecodeError& e) {
        incidents_.push_back(std::string("malformed frame: ") + e.what());
    } catch (const ProtocolViolation& e) {
        halt(e.what());
    }
}

void ExecutorNode::handle_newblock(const Frame& frame) {
    auto msg = decode_all<NewBlockMsg>(frame.payload, decode_newblock);
    rt().charge(costs_.verify_newblock);
    auto offer = acceptor_.offer(msg);
    if (offer.graph_pair_checks > 0)
        rt().charge(Micros{static_cast<std::int64_t>(costs_.graph_pair_us * static_cast<double>(offer.graph_pair_checks))});
    for (auto& v : offer.valid) queue_.push_back(std::move(v));
    if (!current_) start_next_block();
}

void ExecutorNode::handle_commit(NodeId from, const Frame& frame) {
    auto msg = decode_all<CommitMsg>(frame.payload, decode_commit);
    if (msg.sender != from) return;
    if (std::find(config_.executors.begin(), config_.executors.end(), from) == config_.executors.end()) return;
    rt().charge(costs_.verify_commit);
    if (!verify_commit(*keys_, msg)) {
        incidents_.push_back("commit with bad signature from node " + std::to_string(from.value));
        return;
    }
    if (current_ && msg.block_seq == current_->seq()) {
        record_votes(msg);
        maybe_finalize();
    } else if (msg.block_seq >= ledger_.size()) {
        early_commits_[msg.block_seq].push_back(std::move(msg));
    }
}

void ExecutorNode::start_next_block() {
    while (!current_ && !queue_.empty()) {
        auto run = std::make_unique<BlockRun>();
        run->msg = std::move(queue_.front());
        queue_.pop_front();
        const auto& txns = run->block().txns;
        auto n = txns.size();
        run->owned.assign(n, 0);
        run->dispatched.assign(n, 0);
        run->executed.assign(n, 0);
        run->done.assign(n, 0);
        run->status.assign(n, std::nullopt);
        run->decided.assign(n, ResultRecords::abort());
        run->waiting.assign(n, 0);
        run->undecided_preds.assign(n, 0);
        run->timers.assign(n, std::nullopt);
        run->votes.assign(n, {});
        run->tally.assign(n, {});
        run->undecided = n;
        for (std::uint32_t i = 0; i < n; ++i) {
            run->app_of.push_back(txns[i].op.app);
            run->index_of.emplace(txns[i].id, i);
            run->owned[i] = config_.is_agent(self_, txns[i].op.app) ? 1 : 0;
            run->owned_pending += run->owned[i];
            run->waiting[i] = run->graph().pre(i).size();
            run->undecided_preds[i] = run->graph().pre(i).size();
        }
        run->metrics.seq = run->seq();
        run->metrics.txns = n;
        run->metrics.owned = run->owned_pending;
        run->metrics.valid_at = rt().now();
        current_ = std::move(run);
        rt().charge(costs_.per_block);

        for (std::uint32_t i = 0; i < n; ++i)
            if (current_->undecided_preds[i] == 0) arm_timeout(i);
        for (std::uint32_t i = 0; i < n; ++i)
            if (current_->owned[i] && current_->waiting[i] == 0) dispatch(i);

        auto early = early_commits_.find(current_->seq());
        if (early != early_commits_.end()) {
            auto msgs = std::move(early->second);
            early_commits_.erase(early);
            for (const auto& m : msgs) {
                record_votes(m);
                if (!current_) break;
            }
        }
        maybe_finalize();
    }
}

std::optional<Value> ExecutorNode::read_for(const Key& k, std::uint32_t x) const {
    const auto& run = *current_;
    std::optional<std::pair<std::uint32_t, const Value*>> best;
    auto consider = [&](const std::unordered_map<Key, std::map<std::uint32_t, Value>>& m) {
        auto it = m.find(k);
        if (it == m.end()) return;
        auto pos = it->second.lower_bound(x);
        if (pos == it->second.begin()) return;
        --pos;
        if (!best || pos->first > best->first) best = std::pair{pos->first, &pos->second};
    };
    consider(run.applied);
    consider(run.local);
    if (best) return *best->second;
    auto b = run.base.find(k);
    if (b != run.base.end()) return b->second;
    return state_.get(k);
}

void ExecutorNode::dispatch(std::uint32_t x) {
    auto& run = *current_;
    run.dispatched[x] = 1;
    const auto& txn = run.block().txns[x];
    auto task = std::make_shared<ExecTask>();
    task->txn = txn;
    for (const auto& k : txn.op.read_set) task->view.set(k, read_for(k, x));
    for (const auto& k : txn.op.write_set)
        if (!task->view.declared(k)) task->view.set(k, read_for(k, x));
    auto now = rt().now();
    if (run.metrics.first_exec_start < Micros{0}) run.metrics.first_exec_start = now;
    if (on_dispatch_) on_dispatch_(x, now);

    const SmartContract* contract = contracts_->find(txn.op.app);
    auto seq = run.seq();
    rt().workers().submit(
        costs_.exec_txn,
        [task, contract] {
            if (!contract) {
                task->result = ResultRecords::abort();
                return;
            }
            task->result = run_contract(*contract, ContractCall{task->txn.client, task->txn.op, task->view});
        },
        [this, task, seq, x] { on_executed(seq, x, std::move(task->result)); });
}

void ExecutorNode::on_executed(std::uint64_t seq, std::uint32_t x, ResultRecords result) {
    if (halted_ || !current_ || current_->seq() != seq) return;
    auto& run = *current_;
    const auto& txn = run.block().txns[x];
    if (mutator_) mutator_(txn, result);
    run.executed[x] = 1;
    --run.owned_pending;
    run.metrics.last_exec_end = rt().now();
    if (!run.status[x] && !result.aborted)
        for (const auto& [k, v] : result.writes) run.local[k][x] = v;
    run.unflushed.emplace_back(x, result);

    bool cut = cross_app_successor(run.graph(), x, run.app_of);
    mark_done(x);
    if (!current_) return;
    if (cut || current_->owned_pending == 0) flush();
    maybe_finalize();
}

void ExecutorNode::mark_done(std::uint32_t x) {
    auto& run = *current_;
    if (run.done[x]) return;
    run.done[x] = 1;
    for (auto y : run.graph().suc(x)) {
        if (--run.waiting[y] == 0 && run.owned[y] && !run.dispatched[y]) dispatch(y);
    }
}

void ExecutorNode::flush() {
    auto& run = *current_;
    if (run.unflushed.empty()) return;
    CommitMsg msg;
    msg.block_seq = run.seq();
    msg.sender = self_;
    for (auto& [x, r] : run.unflushed) msg.results.emplace_back(run.block().txns[x].id, std::move(r));
    run.unflushed.clear();
    rt().charge(costs_.sign);
    sign_commit(*keys_, msg);
    ++commits_sent_;
    ++run.metrics.commits_sent;
    if (on_commit_sent_) on_commit_sent_(msg);
    auto frame = make_commit_frame(msg);
    rt().multicast(peers_, frame);
    record_votes(msg);
}

void ExecutorNode::record_votes(const CommitMsg& msg) {
    std::vector<std::pair<std::uint32_t, const ResultRecords*>> ordered;
    for (const auto& [id, r] : msg.results) {
        auto it = current_->index_of.find(id);
        if (it == current_->index_of.end()) continue;
        ordered.emplace_back(it->second, &r);
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [x, r] : ordered) {
        if (!current_) return;
        auto& run = *current_;
        if (!config_.is_agent(msg.sender, run.app_of[x])) continue;
        if (run.votes[x].contains(msg.sender)) continue;
        auto bytes = canonical_bytes(*r);
        run.votes[x].emplace(msg.sender, bytes);
        auto n = ++run.tally[x][bytes];
        if (!run.status[x] && n >= config_.tau_of(run.app_of[x]))
            decide(x, r->aborted ? TxnStatus::aborted : TxnStatus::committed, r);
    }
}

void ExecutorNode::arm_timeout(std::uint32_t x) {
    auto& run = *current_;
    if (run.status[x] || run.timers[x]) return;
    auto seq = run.seq();
    run.timers[x] = rt().set_timer(config_.result_timeout, [this, seq, x] {
        if (halted_ || !current_ || current_->seq() != seq || current_->status[x]) return;
        current_->timers[x].reset();
        incidents_.push_back("block " + std::to_string(seq) + " txn " + std::to_string(x) +
                             ": no matching result quorum before timeout");
        decide(x, TxnStatus::failed, nullptr);
        maybe_finalize();
    });
}

void ExecutorNode::decide(std::uint32_t x, TxnStatus status, const ResultRecords* result) {
    auto& run = *current_;
    run.status[x] = status;
    if (run.timers[x]) {
        rt().cancel_timer(*run.timers[x]);
        run.timers[x].reset();
    }
    const auto& txn = run.block().txns[x];
    for (const auto& k : txn.op.write_set) {
        auto it = run.local.find(k);
        if (it != run.local.end()) it->second.erase(x);
    }
    if (status == TxnStatus::committed) {
        run.decided[x] = *result;
        rt().charge(costs_.apply_txn);
        for (const auto& [k, v] : result->writes) {
            if (!run.base.contains(k)) run.base.emplace(k, state_.get(k));
            auto& hist = run.applied[k];
            bool latest = hist.empty() || hist.rbegin()->first < x;
            hist[x] = v;
            if (latest)
                state_.put(k, v);
            else
                state_.bump(k);
        }
    }
    --run.undecided;
    auto now = rt().now();
    run.metrics.last_decided = now;
    switch (status) {
        case TxnStatus::committed: ++run.metrics.committed; break;
        case TxnStatus::aborted: ++run.metrics.aborted; break;
        case TxnStatus::failed: ++run.metrics.failed; break;
    }
    BlockTimestamp pos{run.seq(), x};
    if (on_decided_) on_decided_(DecidedEvent{txn, pos, status, now});
    if (config_.reply_to) rt().send(*config_.reply_to, make_reply_frame(ReplyMsg{txn.id, txn.client, outcome_of(status), pos}));

    for (auto y : run.graph().suc(x))
        if (--run.undecided_preds[y] == 0) arm_timeout(y);
    mark_done(x);
}

void ExecutorNode::maybe_finalize() {
    if (!current_) return;
    auto& run = *current_;
    if (run.undecided > 0 || run.owned_pending > 0) return;
    flush();
    LedgerEntry entry;
    entry.block = run.block();
    for (std::size_t i = 0; i < run.status.size(); ++i) {
        entry.statuses.push_back(*run.status[i]);
        entry.results.push_back(*run.status[i] == TxnStatus::committed ? run.decided[i] : ResultRecords::abort());
    }
    ledger_.append(std::move(entry));
    run.metrics.finalized_at = rt().now();
    metrics_.push_back(run.metrics);
    if (on_finalized_) on_finalized_(metrics_.back());
    auto seq = run.seq();
    current_.reset();
    early_commits_.erase(early_commits_.begin(), early_commits_.upper_bound(seq));
    start_next_block();
}

}  // namespace parblock
