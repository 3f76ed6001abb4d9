#include "parblock/ordering.hpp"

#include <algorithm>
#include <stdexcept>

namespace parblock {

std::string_view to_string(ConsensusKind k) {
    return k == ConsensusKind::leader_sequencer ? "leader_sequencer" : "replicated_log";
}

ConsensusKind parse_consensus_kind(std::string_view s) {
    if (s == "leader_sequencer" || s == "leader") return ConsensusKind::leader_sequencer;
    if (s == "replicated_log" || s == "raft") return ConsensusKind::replicated_log;
    throw std::invalid_argument("unknown consensus engine: " + std::string(s));
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::bad_sig: return "bad_sig";
        case RejectReason::unauthorized: return "unauthorized";
        case RejectReason::duplicate: return "duplicate";
    }
    return "unknown";
}

void OrdererConfig::validate() const {
    if (orderers.empty()) throw std::invalid_argument("at least one orderer is required");
    if (max_block_txns < 1) throw std::invalid_argument("block.max_txns must be >= 1");
    if (max_block_bytes < 1) throw std::invalid_argument("block.max_bytes must be >= 1");
    if (newblock_quorum < 1 || newblock_quorum > orderers.size())
        throw std::invalid_argument("quorum.newblock must be in [1, |orderers|]");
    if (multicast == MulticastMode::leader_only && newblock_quorum > 1)
        throw std::invalid_argument("leader-only multicast cannot satisfy a NEWBLOCK quorum above 1");
}

// ---------------------------------------------------------------------------

AdmitResult Admission::admit(const RequestMsg& req) {
    const auto& t = req.txn;
    if (!verify_transaction(*keys_, t)) return AdmitResult::reject(RejectReason::bad_sig);
    auto acl = acl_.find(t.client);
    if (acl == acl_.end() || !acl->second.contains(t.op.app)) return AdmitResult::reject(RejectReason::unauthorized);
    auto hw = high_water_.find(t.client);
    if (hw != high_water_.end() && t.client_ts <= hw->second) return AdmitResult::reject(RejectReason::duplicate);
    high_water_[t.client] = t.client_ts;
    return AdmitResult::ok();
}

std::optional<std::uint64_t> Admission::high_water(ClientId c) const {
    auto it = high_water_.find(c);
    if (it == high_water_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------

void encode(Writer& w, const ConsensusEntry& e) {
    if (const auto* req = std::get_if<RequestMsg>(&e)) {
        w.u8(0);
        encode(w, *req);
    } else {
        w.u8(1).u64(std::get<CutMarker>(e).block_seq);
    }
}

ConsensusEntry decode_consensus_entry(Reader& r) {
    auto tag = r.u8();
    if (tag == 0) return decode_request(r);
    if (tag == 1) return CutMarker{r.u64()};
    throw DecodeError("unknown consensus entry");
}

Block cut_block(std::deque<RequestMsg>& pending, CutTrigger trigger, const BlockLimits& limits, std::uint64_t seq,
                const Digest& prev_hash) {
    if (pending.empty()) throw std::invalid_argument("cut_block requires pending transactions");
    std::size_t take = pending.size();
    if (trigger != CutTrigger::timer) {
        take = 0;
        std::size_t bytes = 0;
        for (const auto& req : pending) {
            auto sz = canonical_bytes(req).size();
            if (take > 0 && (take == limits.max_txns || bytes + sz > limits.max_bytes)) break;
            bytes += sz;
            ++take;
            if (take == limits.max_txns) break;
        }
    }
    Block b;
    b.seq = seq;
    b.prev_hash = prev_hash;
    bool endorsed = false;
    for (std::size_t i = 0; i < take; ++i) endorsed = endorsed || !pending[i].endorsements.empty();
    for (std::size_t i = 0; i < take; ++i) {
        auto req = std::move(pending.front());
        pending.pop_front();
        b.txns.push_back(std::move(req.txn));
        if (endorsed) b.endorsements.push_back(std::move(req.endorsements));
    }
    b.apps = apps_of(b.txns);
    return b;
}

Block BlockCutter::seal(CutTrigger trigger) {
    auto b = cut_block(pending_, trigger, {limits_.max_txns, limits_.max_bytes}, next_seq_, prev_hash_);
    pending_bytes_ = 0;
    for (const auto& req : pending_) pending_bytes_ += canonical_bytes(req).size();
    prev_hash_ = hash_block(b);
    ++next_seq_;
    return b;
}

std::vector<Block> BlockCutter::append(RequestMsg req) {
    std::vector<Block> out;
    auto sz = canonical_bytes(req).size();
    if (!pending_.empty() && pending_bytes_ + sz > limits_.max_bytes) out.push_back(seal(CutTrigger::size));
    pending_.push_back(std::move(req));
    pending_bytes_ += sz;
    if (pending_.size() >= limits_.max_txns) out.push_back(seal(CutTrigger::count));
    return out;
}

std::optional<Block> BlockCutter::apply(const CutMarker& marker) {
    if (marker.block_seq != next_seq_ || pending_.empty()) return std::nullopt;
    return seal(CutTrigger::timer);
}

// ---------------------------------------------------------------------------

void ConsensusEngine::record(const ConsensusEntry& e) {
    Writer w;
    encode(w, e);
    log_.push_back(sha256(w.data()));
}

namespace {

enum class EngineMsg : std::uint8_t { seq = 1, append = 2, ack = 3, committed = 4 };

Frame consensus_frame(EngineMsg kind, const std::function<void(Writer&)>& body) {
    Writer w;
    w.u8(static_cast<std::uint8_t>(ControlKind::consensus)).u8(static_cast<std::uint8_t>(kind));
    body(w);
    return {FrameType::control, std::move(w).take()};
}

std::vector<NodeId> others(const std::vector<NodeId>& all, NodeId self) {
    std::vector<NodeId> out;
    for (auto n : all)
        if (n != self) out.push_back(n);
    return out;
}

}  // namespace

LeaderSequencer::LeaderSequencer(std::vector<NodeId> orderers, Micros per_entry_cost)
    : orderers_(std::move(orderers)), per_entry_cost_(per_entry_cost) {}

void LeaderSequencer::start(Runtime& rt, Deliver deliver) {
    rt_ = &rt;
    deliver_ = std::move(deliver);
}

void LeaderSequencer::submit(ConsensusEntry entry) {
    if (!is_leader(rt_->self())) throw std::logic_error("only the leader sequences entries");
    auto slot = next_slot_++;
    rt_->charge(per_entry_cost_);
    rt_->multicast(others(orderers_, rt_->self()), consensus_frame(EngineMsg::seq, [&](Writer& w) {
                       w.u64(slot);
                       encode(w, entry);
                   }));
    buffered_.emplace(slot, std::move(entry));
    deliver_ready();
}

void LeaderSequencer::on_message(NodeId from, Reader& r) {
    auto kind = static_cast<EngineMsg>(r.u8());
    if (kind != EngineMsg::seq || from != leader()) return;
    auto slot = r.u64();
    auto entry = decode_consensus_entry(r);
    rt_->charge(per_entry_cost_);
    if (slot >= next_deliver_) buffered_.emplace(slot, std::move(entry));
    deliver_ready();
}

void LeaderSequencer::deliver_ready() {
    for (auto it = buffered_.find(next_deliver_); it != buffered_.end(); it = buffered_.find(next_deliver_)) {
        auto entry = std::move(it->second);
        buffered_.erase(it);
        ++next_deliver_;
        record(entry);
        deliver_(entry);
    }
}

ReplicatedLog::ReplicatedLog(std::vector<NodeId> orderers, Micros per_entry_cost)
    : orderers_(std::move(orderers)), per_entry_cost_(per_entry_cost) {}

void ReplicatedLog::start(Runtime& rt, Deliver deliver) {
    rt_ = &rt;
    deliver_ = std::move(deliver);
}

void ReplicatedLog::submit(ConsensusEntry entry) {
    if (!is_leader(rt_->self())) throw std::logic_error("only the leader appends entries");
    auto index = next_index_++;
    rt_->charge(per_entry_cost_);
    rt_->multicast(others(orderers_, rt_->self()), consensus_frame(EngineMsg::append, [&](Writer& w) {
                       w.u64(index);
                       encode(w, entry);
                   }));
    entries_.emplace(index, std::move(entry));
    acks_[index].insert(rt_->self());
    if (orderers_.size() == 1) advance_to(index + 1);
}

void ReplicatedLog::on_message(NodeId from, Reader& r) {
    auto kind = static_cast<EngineMsg>(r.u8());
    const std::size_t majority = orderers_.size() / 2 + 1;
    switch (kind) {
        case EngineMsg::append: {
            if (from != leader()) return;
            auto index = r.u64();
            auto entry = decode_consensus_entry(r);
            rt_->charge(per_entry_cost_);
            if (index >= delivered_) entries_.emplace(index, std::move(entry));
            rt_->send(from, consensus_frame(EngineMsg::ack, [&](Writer& w) { w.u64(index); }));
            break;
        }
        case EngineMsg::ack: {
            if (!is_leader(rt_->self())) return;
            auto index = r.u64();
            if (index < committed_) return;
            auto& acked = acks_[index];
            acked.insert(from);
            auto target = committed_;
            while (true) {
                auto it = acks_.find(target);
                if (it == acks_.end() || it->second.size() < majority) break;
                ++target;
            }
            if (target > committed_) {
                advance_to(target);
                rt_->multicast(others(orderers_, rt_->self()),
                               consensus_frame(EngineMsg::committed, [&](Writer& w) { w.u64(target); }));
            }
            break;
        }
        case EngineMsg::committed: {
            if (from != leader()) return;
            advance_to(std::max(committed_, r.u64()));
            break;
        }
        default: break;
    }
}

void ReplicatedLog::advance_to(std::uint64_t committed) {
    committed_ = committed;
    while (delivered_ < committed_) {
        auto it = entries_.find(delivered_);
        if (it == entries_.end()) break;  // FIFO links make this unreachable for live followers
        auto entry = std::move(it->second);
        entries_.erase(it);
        acks_.erase(delivered_);
        ++delivered_;
        record(entry);
        deliver_(entry);
    }
}

std::unique_ptr<ConsensusEngine> make_consensus(ConsensusKind kind, std::vector<NodeId> orderers,
                                                Micros per_entry_cost) {
    if (kind == ConsensusKind::leader_sequencer)
        return std::make_unique<LeaderSequencer>(std::move(orderers), per_entry_cost);
    return std::make_unique<ReplicatedLog>(std::move(orderers), per_entry_cost);
}

// ---------------------------------------------------------------------------

OrdererNode::OrdererNode(NodeId self, OrdererConfig config, std::shared_ptr<const KeyRing> keys, OrdererCosts costs)
    : self_(self),
      config_(std::move(config)),
      keys_(std::move(keys)),
      costs_(costs),
      admission_(keys_, config_.acl),
      cutter_(BlockLimits{config_.max_block_txns, config_.max_block_bytes}),
      engine_(make_consensus(config_.consensus, config_.orderers, costs.per_entry)) {
    config_.validate();
    if (std::find(config_.orderers.begin(), config_.orderers.end(), self_) == config_.orderers.end())
        throw std::invalid_argument("orderer node is not in the orderer set");
}

void OrdererNode::start(Runtime& rt) {
    Node::start(rt);
    engine_->start(rt, [this](const ConsensusEntry& e) { on_deliver(e); });
}

void OrdererNode::on_frame(NodeId from, const Frame& frame) {
    try {
        if (frame.type == FrameType::request) {
            handle_request(from, decode_all<RequestMsg>(frame.payload, decode_request));
            return;
        }
        if (frame.type != FrameType::control) return;
        Reader r(frame.payload);
        auto kind = static_cast<ControlKind>(r.u8());
        if (kind == ControlKind::consensus) {
            if (std::find(config_.orderers.begin(), config_.orderers.end(), from) == config_.orderers.end()) return;
            engine_->on_message(from, r);
        } else if (kind == ControlKind::forward) {
            auto origin = r.id<NodeId>();
            handle_request(origin, decode_request(r));
        }
    } catch (const DecodeError&) {
        // Malformed frames are dropped.
    }
}

void OrdererNode::handle_request(NodeId origin, RequestMsg req) {
    if (!is_leader()) {
        Writer w;
        w.u8(static_cast<std::uint8_t>(ControlKind::forward)).id(origin);
        encode(w, req);
        rt().send(engine_->leader(), Frame{FrameType::control, std::move(w).take()});
        return;
    }
    rt().charge(costs_.verify_request);
    auto verdict = admission_.admit(req);
    if (!verdict.accepted) {
        ++rejected_;
        ReplyMsg reply;
        reply.txn = req.txn.id;
        reply.client = req.txn.client;
        reply.outcome = verdict.reason == RejectReason::bad_sig        ? TxnOutcome::rejected_bad_sig
                        : verdict.reason == RejectReason::unauthorized ? TxnOutcome::rejected_unauthorized
                                                                       : TxnOutcome::rejected_duplicate;
        try {
            rt().send(origin, make_reply_frame(reply));
        } catch (const UnknownDestination&) {
        }
        return;
    }
    ++admitted_;
    engine_->submit(std::move(req));
}

void OrdererNode::on_deliver(const ConsensusEntry& entry) {
    if (const auto* req = std::get_if<RequestMsg>(&entry)) {
        for (auto& b : cutter_.append(*req)) publish(std::move(b));
        arm_timer();
    } else if (auto b = cutter_.apply(std::get<CutMarker>(entry))) {
        publish(std::move(*b));
        arm_timer();
    }
}

void OrdererNode::arm_timer() {
    if (!is_leader() || cutter_.open_empty()) return;
    auto seq = cutter_.open_seq();
    if (timer_for_seq_ == seq) return;
    timer_for_seq_ = seq;
    rt().set_timer(config_.max_block_interval, [this, seq] {
        if (cutter_.open_seq() == seq && !cutter_.open_empty()) engine_->submit(CutMarker{seq});
    });
}

void OrdererNode::publish(Block block) {
    rt().charge(costs_.per_block);
    DependencyGraph graph;
    if (config_.build_graph) {
        rt().charge(Micros{static_cast<std::int64_t>(costs_.graph_pair_us *
                                                     static_cast<double>(graph_pair_checks(block.txns.size())))});
        graph = build_graph(block, config_.graph);
    } else {
        std::vector<TxnId> ids;
        for (const auto& t : block.txns) ids.push_back(t.id);
        graph = DependencyGraph(std::move(ids), {});
    }
    block_hashes_.push_back(hash_block(block));
    if (on_cut_) on_cut_(CutEvent{block, graph, rt().now()});
    if (silent_) return;
    if (config_.multicast == MulticastMode::leader_only && !is_leader()) return;
    rt().charge(costs_.sign);
    auto msg = make_newblock(*keys_, self_, std::move(block), std::move(graph));
    if (mutator_) mutator_(msg);
    rt().multicast(config_.executors, make_newblock_frame(msg));
}

}  // namespace parblock
