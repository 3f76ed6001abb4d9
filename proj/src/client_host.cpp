#include "parblock/client_host.hpp"

#include <stdexcept>

namespace parblock {

std::string_view to_string(Paradigm p) {
    switch (p) {
        case Paradigm::ox: return "ox";
        case Paradigm::xov: return "xov";
        case Paradigm::oxii: return "oxii";
    }
    return "?";
}

Paradigm parse_paradigm(std::string_view s) {
    if (s == "ox") return Paradigm::ox;
    if (s == "xov") return Paradigm::xov;
    if (s == "oxii") return Paradigm::oxii;
    throw std::invalid_argument("unknown paradigm: " + std::string(s));
}

ClientHostNode::ClientHostNode(NodeId self, Options options, std::vector<ClientId> clients, Source source)
    : self_(self), options_(std::move(options)), clients_(std::move(clients)), source_(std::move(source)) {}

void ClientHostNode::start(Runtime& rt) {
    Node::start(rt);
    for (auto c : clients_) submit_next(c);
}

void ClientHostNode::submit_next(ClientId c) {
    if (!submitting_) return;
    auto txn = source_(c);
    if (!txn) return;
    ClientRecord rec;
    rec.id = txn->id;
    rec.client = c;
    rec.submitted = rt().now();
    auto idx = records_.size();
    records_.push_back(rec);
    index_[txn->id] = idx;
    ++outstanding_;

    Pending p{idx, std::nullopt, std::nullopt};
    if (options_.paradigm == Paradigm::xov) {
        auto it = options_.agents.find(txn->op.app);
        std::set<NodeId> endorsers = it == options_.agents.end() ? std::set<NodeId>{} : it->second;
        p.collector.emplace(*txn, endorsers, options_.policy.of(txn->op.app));
        auto id = txn->id;
        p.timer = rt().set_timer(options_.endorse_timeout, [this, id] {
            auto pit = pending_.find(id);
            if (pit == pending_.end() || !pit->second.collector) return;
            pit->second.timer.reset();
            resolve(id, TxnOutcome::endorsement_timeout, std::nullopt);
        });
        auto frame = make_endorse_frame(*txn);
        pending_.emplace(txn->id, std::move(p));
        rt().multicast(std::vector<NodeId>(endorsers.begin(), endorsers.end()), frame);
    } else {
        pending_.emplace(txn->id, std::move(p));
        rt().send(options_.orderer, make_request_frame(RequestMsg{std::move(*txn), {}}));
    }
}

void ClientHostNode::note_ordered(const TxnId& id, Micros at) {
    auto it = index_.find(id);
    if (it != index_.end() && !records_[it->second].ordered) records_[it->second].ordered = at;
}

void ClientHostNode::note_decided(const TxnId& id, Micros at) {
    auto it = index_.find(id);
    if (it != index_.end() && !records_[it->second].decided) records_[it->second].decided = at;
}

void ClientHostNode::resolve(const TxnId& id, TxnOutcome outcome, std::optional<BlockTimestamp> pos) {
    auto pit = pending_.find(id);
    if (pit == pending_.end()) return;
    auto& rec = records_[pit->second.record];
    if (pit->second.timer) rt().cancel_timer(*pit->second.timer);
    pending_.erase(pit);
    rec.outcome = outcome;
    rec.position = pos;
    if (!rec.decided) rec.decided = rt().now();
    --outstanding_;
    submit_next(rec.client);
}

void ClientHostNode::on_frame(NodeId, const Frame& frame) {
    try {
        if (frame.type == FrameType::control) {
            Reader r(frame.payload);
            if (static_cast<ControlKind>(r.u8()) != ControlKind::reply) return;
            auto reply = decode_reply(r);
            r.expect_end();
            resolve(reply.txn, reply.outcome, reply.position);
        } else if (frame.type == FrameType::endorsed) {
            auto e = decode_all<Endorsement>(frame.payload, decode_endorsement);
            auto pit = pending_.find(e.txn);
            if (pit == pending_.end() || !pit->second.collector) return;
            auto& collector = *pit->second.collector;
            auto status = collector.add(e);
            if (status == EndorsementCollector::Status::mismatch) {
                resolve(e.txn, TxnOutcome::endorsement_mismatch, std::nullopt);
            } else if (status == EndorsementCollector::Status::ready) {
                auto req = collector.request();
                if (pit->second.timer) {
                    rt().cancel_timer(*pit->second.timer);
                    pit->second.timer.reset();
                }
                pit->second.collector.reset();
                rt().send(options_.orderer, make_request_frame(req));
            }
        }
    } catch (const DecodeError&) {
    }
}

}  // namespace parblock
