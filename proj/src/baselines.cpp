#include "parblock/baselines.hpp"

#include <stdexcept>

namespace parblock {

namespace {

ReadView snapshot(const Operation& op, const StateStore& state) {
    ReadView view;
    for (const auto& k : op.read_set) view.set(k, state.get(k));
    for (const auto& k : op.write_set)
        if (!view.declared(k)) view.set(k, state.get(k));
    return view;
}

void count_status(BlockMetrics& m, TxnStatus s) {
    switch (s) {
        case TxnStatus::committed: ++m.committed; break;
        case TxnStatus::aborted: ++m.aborted; break;
        case TxnStatus::failed: ++m.failed; break;
    }
}

}  // namespace

ResultRecords run_on(const Transaction& txn, const ReadView& view, const SmartContract* contract) {
    if (!contract) return ResultRecords::abort();
    return run_contract(*contract, ContractCall{txn.client, txn.op, view});
}

ResultRecords execute_on(const Transaction& txn, const StateStore& state, const ContractRegistry& contracts) {
    return run_on(txn, snapshot(txn.op, state), contracts.find(txn.op.app));
}

SequentialOutcome execute_sequential(const Block& block, StateStore& state, const ContractRegistry& contracts) {
    SequentialOutcome out;
    for (const auto& txn : block.txns) {
        auto r = run_on(txn, snapshot(txn.op, state), contracts.find(txn.op.app));
        if (r.aborted) {
            out.statuses.push_back(TxnStatus::aborted);
        } else {
            state.apply(r);
            out.statuses.push_back(TxnStatus::committed);
        }
        out.results.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// OxExecutorNode

OxExecutorNode::OxExecutorNode(NodeId self, ReplicaConfig config, std::shared_ptr<const KeyRing> keys,
                               std::shared_ptr<const ContractRegistry> contracts, StateStore genesis,
                               ExecutorCosts costs)
    : self_(self),
      config_(std::move(config)),
      contracts_(std::move(contracts)),
      costs_(costs),
      acceptor_(std::move(keys), AcceptorOptions{config_.orderers, config_.newblock_quorum, false, {}}),
      state_(std::move(genesis)) {}

void OxExecutorNode::on_frame(NodeId, const Frame& frame) {
    if (halted_ || frame.type != FrameType::newblock) return;
    try {
        auto msg = decode_all<NewBlockMsg>(frame.payload, decode_newblock);
        rt().charge(costs_.verify_newblock);
        auto offer = acceptor_.offer(msg);
        for (auto& v : offer.valid) queue_.push_back(std::move(v));
    } catch (const DecodeError&) {
        return;
    } catch (const ProtocolViolation&) {
        halted_ = true;
        return;
    }
    if (!running_) start_next();
}

void OxExecutorNode::start_next() {
    if (running_ || queue_.empty()) return;
    running_ = true;
    current_ = std::move(queue_.front());
    queue_.pop_front();
    pending_ = LedgerEntry{current_->block, {}, {}};
    block_metrics_ = BlockMetrics{};
    block_metrics_.seq = current_->seq;
    block_metrics_.txns = current_->block.txns.size();
    block_metrics_.owned = block_metrics_.txns;
    block_metrics_.valid_at = rt().now();
    rt().charge(costs_.per_block);
    run_txn(0);
}

void OxExecutorNode::run_txn(std::size_t i) {
    const auto& block = current_->block;
    if (i == block.txns.size()) {
        ledger_.append(std::move(pending_));
        block_metrics_.finalized_at = rt().now();
        metrics_.push_back(block_metrics_);
        current_.reset();
        running_ = false;
        start_next();
        return;
    }
    struct Task {
        Transaction txn;
        ReadView view;
        ResultRecords result;
    };
    auto task = std::make_shared<Task>();
    task->txn = block.txns[i];
    task->view = snapshot(task->txn.op, state_);
    const SmartContract* contract = contracts_->find(task->txn.op.app);
    if (block_metrics_.first_exec_start < Micros{0}) block_metrics_.first_exec_start = rt().now();
    rt().workers().submit(
        costs_.exec_txn, [task, contract] { task->result = run_on(task->txn, task->view, contract); },
        [this, task, i] {
            auto status = task->result.aborted ? TxnStatus::aborted : TxnStatus::committed;
            if (status == TxnStatus::committed) {
                rt().charge(costs_.apply_txn);
                state_.apply(task->result);
            }
            pending_.statuses.push_back(status);
            pending_.results.push_back(status == TxnStatus::committed ? task->result : ResultRecords::abort());
            count_status(block_metrics_, status);
            auto now = rt().now();
            block_metrics_.last_exec_end = now;
            block_metrics_.last_decided = now;
            BlockTimestamp pos{current_->seq, static_cast<std::uint32_t>(i)};
            if (on_decided_) on_decided_(DecidedEvent{task->txn, pos, status, now});
            if (config_.reply_to)
                rt().send(*config_.reply_to,
                          make_reply_frame(ReplyMsg{task->txn.id, task->txn.client, outcome_of(status), pos}));
            run_txn(i + 1);
        });
}

// ---------------------------------------------------------------------------
// Execute-order-validate

std::size_t EndorsementPolicy::of(AppId a) const {
    auto it = required.find(a);
    return it == required.end() ? 1 : it->second;
}

void EndorsementPolicy::validate(const std::map<AppId, std::set<NodeId>>& agents) const {
    for (const auto& [app, set] : agents)
        if (of(app) == 0 || of(app) > set.size())
            throw std::invalid_argument("endorsement policy for application " + std::to_string(app.value) +
                                        " exceeds its endorsers");
}

std::set<Key> versioned_keys(const Operation& op) {
    std::set<Key> keys = op.read_set;
    keys.insert(op.write_set.begin(), op.write_set.end());
    return keys;
}

Endorsement endorse(const Transaction& txn, const StateStore& state, const SmartContract* contract, NodeId endorser) {
    Endorsement e;
    e.txn = txn.id;
    e.endorser = endorser;
    for (const auto& k : versioned_keys(txn.op)) e.read_versions[k] = state.version(k);
    e.result = run_on(txn, snapshot(txn.op, state), contract);
    return e;
}

SequentialOutcome xov_validate(const Block& block, StateStore& state, const KeyRing& keys, const XovConfig& config) {
    SequentialOutcome out;
    for (std::size_t i = 0; i < block.txns.size(); ++i) {
        const auto& txn = block.txns[i];
        auto reject = [&] {
            out.statuses.push_back(TxnStatus::aborted);
            out.results.push_back(ResultRecords::abort());
        };
        auto agents_it = config.agents.find(txn.op.app);
        if (i >= block.endorsements.size() || agents_it == config.agents.end()) {
            reject();
            continue;
        }
        std::map<NodeId, const Endorsement*> valid;
        for (const auto& e : block.endorsements[i])
            if (e.txn == txn.id && agents_it->second.contains(e.endorser) && !valid.contains(e.endorser) &&
                verify_endorsement(keys, e))
                valid.emplace(e.endorser, &e);
        if (valid.size() < config.policy.of(txn.op.app)) {
            reject();
            continue;
        }
        const Endorsement& ref = *valid.begin()->second;
        bool agree = true;
        for (const auto& [n, e] : valid)
            if (e->result != ref.result || e->read_versions != ref.read_versions) agree = false;
        bool fresh = true;
        std::set<Key> recorded;
        for (const auto& [k, ver] : ref.read_versions) {
            recorded.insert(k);
            if (state.version(k) != ver) fresh = false;
        }
        bool in_bounds = true;
        for (const auto& [k, v] : ref.result.writes)
            if (!txn.op.write_set.contains(k)) in_bounds = false;
        if (!agree || !fresh || !in_bounds || ref.result.aborted || recorded != versioned_keys(txn.op)) {
            reject();
            continue;
        }
        state.apply(ref.result);
        out.statuses.push_back(TxnStatus::committed);
        out.results.push_back(ref.result);
    }
    return out;
}

EndorsementCollector::EndorsementCollector(Transaction txn, std::set<NodeId> endorsers, std::size_t required)
    : txn_(std::move(txn)), endorsers_(std::move(endorsers)), required_(required) {}

EndorsementCollector::Status EndorsementCollector::add(const Endorsement& e) {
    if (status_ != Status::pending) return status_;
    if (e.txn != txn_.id || !endorsers_.contains(e.endorser) || got_.contains(e.endorser)) return status_;
    if (!got_.empty()) {
        const auto& ref = got_.begin()->second;
        if (ref.result != e.result || ref.read_versions != e.read_versions) return status_ = Status::mismatch;
    }
    got_.emplace(e.endorser, e);
    if (got_.size() >= required_) status_ = Status::ready;
    return status_;
}

RequestMsg EndorsementCollector::request() const {
    RequestMsg req;
    req.txn = txn_;
    for (const auto& [n, e] : got_) req.endorsements.push_back(e);
    return req;
}

XovPeerNode::XovPeerNode(NodeId self, XovConfig config, std::shared_ptr<const KeyRing> keys,
                         std::shared_ptr<const ContractRegistry> contracts, StateStore genesis, XovCosts costs)
    : self_(self),
      config_(std::move(config)),
      keys_(keys),
      contracts_(std::move(contracts)),
      costs_(costs),
      acceptor_(keys, AcceptorOptions{config_.replica.orderers, config_.replica.newblock_quorum, false, {}}),
      state_(std::move(genesis)) {
    config_.policy.validate(config_.agents);
}

void XovPeerNode::on_frame(NodeId from, const Frame& frame) {
    if (halted_) return;
    try {
        if (frame.type == FrameType::endorse) {
            handle_endorse(from, frame);
        } else if (frame.type == FrameType::newblock) {
            auto msg = decode_all<NewBlockMsg>(frame.payload, decode_newblock);
            rt().charge(costs_.verify_newblock);
            auto offer = acceptor_.offer(msg);
            for (auto& v : offer.valid) queue_.push_back(std::move(v));
            validate_queued();
        }
    } catch (const DecodeError&) {
    } catch (const ProtocolViolation&) {
        halted_ = true;
    }
}

void XovPeerNode::handle_endorse(NodeId from, const Frame& frame) {
    auto txn = decode_all<Transaction>(frame.payload, decode_transaction);
    auto it = config_.agents.find(txn.op.app);
    if (it == config_.agents.end() || !it->second.contains(self_)) return;
    rt().charge(costs_.verify_client);
    if (!verify_transaction(*keys_, txn)) return;

    struct Task {
        Transaction txn;
        ReadView view;
        std::map<Key, std::uint64_t> versions;
        ResultRecords result;
    };
    auto task = std::make_shared<Task>();
    task->txn = std::move(txn);
    task->view = snapshot(task->txn.op, state_);
    for (const auto& k : versioned_keys(task->txn.op)) task->versions[k] = state_.version(k);
    const SmartContract* contract = contracts_->find(task->txn.op.app);
    rt().workers().submit(
        costs_.exec_txn, [task, contract] { task->result = run_on(task->txn, task->view, contract); },
        [this, task, from] {
            Endorsement e;
            e.txn = task->txn.id;
            e.read_versions = std::move(task->versions);
            e.result = std::move(task->result);
            e.endorser = self_;
            rt().charge(costs_.sign);
            e.sig = keys_->sign(Principal::of(self_), endorsement_signing_bytes(e));
            ++endorsements_sent_;
            rt().send(from, make_endorsed_frame(e));
        });
}

void XovPeerNode::validate_queued() {
    while (!queue_.empty()) {
        auto msg = std::move(queue_.front());
        queue_.pop_front();
        const auto& block = msg.block;
        BlockMetrics m;
        m.seq = msg.seq;
        m.txns = block.txns.size();
        m.valid_at = rt().now();
        std::size_t endorsements = 0;
        for (const auto& set : block.endorsements) endorsements += set.size();
        rt().charge(costs_.per_block + costs_.validate_txn * static_cast<std::int64_t>(block.txns.size()) +
                    costs_.verify_endorsement * static_cast<std::int64_t>(endorsements));
        auto outcome = xov_validate(block, state_, *keys_, config_);
        auto now = rt().now();
        for (std::size_t i = 0; i < block.txns.size(); ++i) {
            count_status(m, outcome.statuses[i]);
            BlockTimestamp pos{msg.seq, static_cast<std::uint32_t>(i)};
            if (on_decided_) on_decided_(DecidedEvent{block.txns[i], pos, outcome.statuses[i], now});
            if (config_.replica.reply_to)
                rt().send(*config_.replica.reply_to, make_reply_frame(ReplyMsg{block.txns[i].id, block.txns[i].client,
                                                                                outcome_of(outcome.statuses[i]), pos}));
        }
        ledger_.append(LedgerEntry{block, outcome.statuses, outcome.results});
        m.last_decided = now;
        m.finalized_at = now;
        metrics_.push_back(m);
    }
}

}  // namespace parblock
