#include "parblock/messages.hpp"

#include <algorithm>

namespace parblock {

std::string_view to_string(FrameType t) {
    switch (t) {
        case FrameType::control: return "control";
        case FrameType::request: return "request";
        case FrameType::newblock: return "newblock";
        case FrameType::commit: return "commit";
        case FrameType::endorse: return "endorse";
        case FrameType::endorsed: return "endorsed";
    }
    return "unknown";
}

std::string_view to_string(TxnOutcome o) {
    switch (o) {
        case TxnOutcome::committed: return "committed";
        case TxnOutcome::aborted: return "aborted";
        case TxnOutcome::failed: return "failed";
        case TxnOutcome::rejected_bad_sig: return "bad_sig";
        case TxnOutcome::rejected_unauthorized: return "unauthorized";
        case TxnOutcome::rejected_duplicate: return "duplicate";
        case TxnOutcome::endorsement_mismatch: return "endorsement_mismatch";
        case TxnOutcome::endorsement_timeout: return "endorsement_timeout";
    }
    return "unknown";
}

TxnOutcome outcome_of(TxnStatus s) {
    switch (s) {
        case TxnStatus::committed: return TxnOutcome::committed;
        case TxnStatus::aborted: return TxnOutcome::aborted;
        case TxnStatus::failed: return TxnOutcome::failed;
    }
    return TxnOutcome::failed;
}

Bytes encode_frame(const Frame& f) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(f.payload.size() + 1));
    w.u8(static_cast<std::uint8_t>(f.type));
    w.raw(f.payload);
    return std::move(w).take();
}

std::optional<Frame> decode_frame(std::string_view data, std::size_t& consumed) {
    consumed = 0;
    if (data.size() < 5) return std::nullopt;
    Reader r(data);
    auto len = r.u32();
    if (len == 0) throw DecodeError("empty frame");
    if (r.remaining() < len) return std::nullopt;
    auto tag = r.u8();
    if (tag > static_cast<std::uint8_t>(FrameType::endorsed)) throw DecodeError("unknown frame type");
    Frame f{static_cast<FrameType>(tag), Bytes(r.raw(len - 1))};
    consumed = 4 + static_cast<std::size_t>(len);
    return f;
}

void encode(Writer& w, const RequestMsg& m) {
    encode(w, m.txn);
    w.u32(static_cast<std::uint32_t>(m.endorsements.size()));
    for (const auto& e : m.endorsements) encode(w, e);
}

RequestMsg decode_request(Reader& r) {
    RequestMsg m;
    m.txn = decode_transaction(r);
    auto n = r.count(32);
    for (std::uint32_t i = 0; i < n; ++i) m.endorsements.push_back(decode_endorsement(r));
    return m;
}

namespace {

void encode_newblock_content(Writer& w, const NewBlockMsg& m) {
    w.u64(m.seq);
    encode(w, m.block);
    encode(w, m.graph);
    w.u32(static_cast<std::uint32_t>(m.apps.size()));
    for (auto a : m.apps) w.id(a);
    w.digest(m.prev_hash);
}

}  // namespace

Bytes newblock_content_bytes(const NewBlockMsg& m) {
    Writer w;
    w.raw("NBK");
    encode_newblock_content(w, m);
    return std::move(w).take();
}

void encode(Writer& w, const NewBlockMsg& m) {
    encode_newblock_content(w, m);
    w.id(m.orderer);
    w.bytes(m.sig.bytes);
}

NewBlockMsg decode_newblock(Reader& r) {
    NewBlockMsg m;
    m.seq = r.u64();
    m.block = decode_block(r);
    m.graph = decode_graph(r);
    auto n = r.count(4);
    for (std::uint32_t i = 0; i < n; ++i) m.apps.insert(r.id<AppId>());
    m.prev_hash = r.digest();
    m.orderer = r.id<NodeId>();
    m.sig.bytes = r.bytes();
    return m;
}

namespace {

void encode_commit_body(Writer& w, const CommitMsg& m) {
    w.u64(m.block_seq);
    w.u32(static_cast<std::uint32_t>(m.results.size()));
    for (const auto& [id, res] : m.results) {
        w.digest(id);
        encode(w, res);
    }
    w.id(m.sender);
}

}  // namespace

Bytes commit_signing_bytes(const CommitMsg& m) {
    Writer w;
    w.raw("CMT");
    encode_commit_body(w, m);
    return std::move(w).take();
}

void encode(Writer& w, const CommitMsg& m) {
    encode_commit_body(w, m);
    w.bytes(m.sig.bytes);
}

CommitMsg decode_commit(Reader& r) {
    CommitMsg m;
    m.block_seq = r.u64();
    auto n = r.count(37);
    m.results.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto id = r.digest();
        if (!m.results.empty() && !(m.results.back().first < id)) throw DecodeError("commit results not sorted");
        m.results.emplace_back(id, decode_result(r));
    }
    m.sender = r.id<NodeId>();
    m.sig.bytes = r.bytes();
    return m;
}

void encode(Writer& w, const ReplyMsg& m) {
    w.digest(m.txn).id(m.client).u8(static_cast<std::uint8_t>(m.outcome));
    w.u64(m.position.block_seq).u32(m.position.index);
}

ReplyMsg decode_reply(Reader& r) {
    ReplyMsg m;
    m.txn = r.digest();
    m.client = r.id<ClientId>();
    auto o = r.u8();
    if (o > static_cast<std::uint8_t>(TxnOutcome::endorsement_timeout)) throw DecodeError("unknown outcome");
    m.outcome = static_cast<TxnOutcome>(o);
    m.position.block_seq = r.u64();
    m.position.index = r.u32();
    return m;
}

Frame make_request_frame(const RequestMsg& m) { return {FrameType::request, canonical_bytes(m)}; }
Frame make_newblock_frame(const NewBlockMsg& m) { return {FrameType::newblock, canonical_bytes(m)}; }
Frame make_commit_frame(const CommitMsg& m) { return {FrameType::commit, canonical_bytes(m)}; }

Frame make_reply_frame(const ReplyMsg& m) {
    Writer w;
    w.u8(static_cast<std::uint8_t>(ControlKind::reply));
    encode(w, m);
    return {FrameType::control, std::move(w).take()};
}

Frame make_endorse_frame(const Transaction& t) { return {FrameType::endorse, canonical_bytes(t)}; }
Frame make_endorsed_frame(const Endorsement& e) { return {FrameType::endorsed, canonical_bytes(e)}; }

Transaction make_transaction(const KeyRing& keys, ClientId client, std::uint64_t client_ts, Operation op) {
    Transaction t;
    t.id = make_txn_id(client, client_ts);
    t.client = client;
    t.client_ts = client_ts;
    t.op = std::move(op);
    t.sig = keys.sign(Principal::of(client), txn_signing_bytes(t));
    return t;
}

NewBlockMsg make_newblock(const KeyRing& keys, NodeId orderer, Block block, DependencyGraph graph) {
    NewBlockMsg m;
    m.seq = block.seq;
    m.apps = block.apps;
    m.prev_hash = block.prev_hash;
    m.block = std::move(block);
    m.graph = std::move(graph);
    m.orderer = orderer;
    m.sig = keys.sign(Principal::of(orderer), newblock_content_bytes(m));
    return m;
}

void sign_commit(const KeyRing& keys, CommitMsg& m) {
    std::sort(m.results.begin(), m.results.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    m.sig = keys.sign(Principal::of(m.sender), commit_signing_bytes(m));
}

bool verify_transaction(const KeyRing& keys, const Transaction& t) {
    if (t.id != make_txn_id(t.client, t.client_ts)) return false;
    return keys.verify(Principal::of(t.client), txn_signing_bytes(t), t.sig);
}

bool verify_newblock(const KeyRing& keys, const NewBlockMsg& m) {
    return keys.verify(Principal::of(m.orderer), newblock_content_bytes(m), m.sig);
}

bool verify_commit(const KeyRing& keys, const CommitMsg& m) {
    return keys.verify(Principal::of(m.sender), commit_signing_bytes(m), m.sig);
}

bool verify_endorsement(const KeyRing& keys, const Endorsement& e) {
    return keys.verify(Principal::of(e.endorser), endorsement_signing_bytes(e), e.sig);
}

}  // namespace parblock
