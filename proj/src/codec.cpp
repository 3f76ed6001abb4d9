#include "parblock/codec.hpp"

#include <cstdio>

namespace parblock {

bool Digest::is_zero() const {
    for (auto b : bytes)
        if (b != 0) return false;
    return true;
}

std::string Digest::hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (auto b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

std::string_view to_string(TxnStatus s) {
    switch (s) {
        case TxnStatus::committed: return "committed";
        case TxnStatus::aborted: return "aborted";
        case TxnStatus::failed: return "failed";
    }
    return "unknown";
}

std::set<AppId> apps_of(const std::vector<Transaction>& txns) {
    std::set<AppId> apps;
    for (const auto& t : txns) apps.insert(t.op.app);
    return apps;
}

Writer& Writer::u8(std::uint8_t v) {
    buf_.push_back(static_cast<char>(v));
    return *this;
}

Writer& Writer::u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<char>((v >> shift) & 0xFF));
    return *this;
}

Writer& Writer::u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<char>((v >> shift) & 0xFF));
    return *this;
}

Writer& Writer::bytes(std::string_view v) {
    u32(static_cast<std::uint32_t>(v.size()));
    buf_.append(v);
    return *this;
}

Writer& Writer::raw(std::string_view v) {
    buf_.append(v);
    return *this;
}

Writer& Writer::digest(const Digest& d) {
    buf_.append(reinterpret_cast<const char*>(d.bytes.data()), d.bytes.size());
    return *this;
}

void Reader::need(std::size_t n) const {
    if (remaining() < n) throw DecodeError("truncated input");
}

std::uint8_t Reader::u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t Reader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_++]);
    return v;
}

std::uint64_t Reader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_++]);
    return v;
}

bool Reader::boolean() {
    auto v = u8();
    if (v > 1) throw DecodeError("invalid boolean");
    return v == 1;
}

Bytes Reader::bytes() {
    auto n = u32();
    return Bytes(raw(n));
}

std::string_view Reader::raw(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
}

Digest Reader::digest() {
    need(32);
    Digest d;
    for (auto& b : d.bytes) b = static_cast<std::uint8_t>(data_[pos_++]);
    return d;
}

std::uint32_t Reader::count(std::size_t min_element_size) {
    auto n = u32();
    if (min_element_size > 0 && static_cast<std::size_t>(n) > remaining() / min_element_size)
        throw DecodeError("collection length exceeds input");
    return n;
}

void Reader::expect_end() const {
    if (!at_end()) throw DecodeError("trailing bytes");
}

namespace {

void encode_keys(Writer& w, const std::set<Key>& keys) {
    w.u32(static_cast<std::uint32_t>(keys.size()));
    for (const auto& k : keys) w.bytes(k);
}

std::set<Key> decode_keys(Reader& r) {
    std::set<Key> keys;
    auto n = r.count(4);
    Key prev;
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.bytes();
        if (i > 0 && !(prev < k)) throw DecodeError("key set not sorted or has duplicates");
        prev = k;
        keys.insert(keys.end(), std::move(k));
    }
    return keys;
}

}  // namespace

void encode(Writer& w, const Operation& op) {
    w.id(op.app).bytes(op.payload);
    encode_keys(w, op.read_set);
    encode_keys(w, op.write_set);
}

Operation decode_operation(Reader& r) {
    Operation op;
    op.app = r.id<AppId>();
    op.payload = r.bytes();
    op.read_set = decode_keys(r);
    op.write_set = decode_keys(r);
    return op;
}

void encode(Writer& w, const Transaction& t) {
    w.digest(t.id).id(t.client).u64(t.client_ts);
    encode(w, t.op);
    w.bytes(t.sig.bytes);
}

Transaction decode_transaction(Reader& r) {
    Transaction t;
    t.id = r.digest();
    t.client = r.id<ClientId>();
    t.client_ts = r.u64();
    t.op = decode_operation(r);
    t.sig.bytes = r.bytes();
    return t;
}

void encode(Writer& w, const ResultRecords& res) {
    w.boolean(res.aborted);
    w.u32(static_cast<std::uint32_t>(res.writes.size()));
    for (const auto& [k, v] : res.writes) w.bytes(k).bytes(v);
}

ResultRecords decode_result(Reader& r) {
    ResultRecords res;
    res.aborted = r.boolean();
    auto n = r.count(8);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.bytes();
        auto v = r.bytes();
        if (!res.writes.empty() && !(res.writes.rbegin()->first < k))
            throw DecodeError("write records not sorted");
        res.writes.emplace_hint(res.writes.end(), std::move(k), std::move(v));
    }
    if (res.aborted && !res.writes.empty()) throw DecodeError("abort marker with write records");
    return res;
}

namespace {

void encode_endorsement_body(Writer& w, const Endorsement& e) {
    w.digest(e.txn);
    w.u32(static_cast<std::uint32_t>(e.read_versions.size()));
    for (const auto& [k, ver] : e.read_versions) w.bytes(k).u64(ver);
    encode(w, e.result);
    w.id(e.endorser);
}

}  // namespace

void encode(Writer& w, const Endorsement& e) {
    encode_endorsement_body(w, e);
    w.bytes(e.sig.bytes);
}

Endorsement decode_endorsement(Reader& r) {
    Endorsement e;
    e.txn = r.digest();
    auto n = r.count(12);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.bytes();
        auto ver = r.u64();
        if (!e.read_versions.empty() && !(e.read_versions.rbegin()->first < k))
            throw DecodeError("read versions not sorted");
        e.read_versions.emplace_hint(e.read_versions.end(), std::move(k), ver);
    }
    e.result = decode_result(r);
    e.endorser = r.id<NodeId>();
    e.sig.bytes = r.bytes();
    return e;
}

void encode(Writer& w, const Block& b) {
    w.u64(b.seq).digest(b.prev_hash);
    w.u32(static_cast<std::uint32_t>(b.apps.size()));
    for (auto a : b.apps) w.id(a);
    w.u32(static_cast<std::uint32_t>(b.txns.size()));
    for (const auto& t : b.txns) encode(w, t);
    w.u32(static_cast<std::uint32_t>(b.endorsements.size()));
    for (const auto& set : b.endorsements) {
        w.u32(static_cast<std::uint32_t>(set.size()));
        for (const auto& e : set) encode(w, e);
    }
}

Block decode_block(Reader& r) {
    Block b;
    b.seq = r.u64();
    b.prev_hash = r.digest();
    auto napps = r.count(4);
    for (std::uint32_t i = 0; i < napps; ++i) {
        auto a = r.id<AppId>();
        if (!b.apps.empty() && !(*b.apps.rbegin() < a)) throw DecodeError("app set not sorted");
        b.apps.insert(b.apps.end(), a);
    }
    auto ntx = r.count(32);
    b.txns.reserve(ntx);
    for (std::uint32_t i = 0; i < ntx; ++i) b.txns.push_back(decode_transaction(r));
    auto nend = r.count(4);
    b.endorsements.resize(nend);
    for (auto& set : b.endorsements) {
        auto k = r.count(32);
        for (std::uint32_t i = 0; i < k; ++i) set.push_back(decode_endorsement(r));
    }
    return b;
}

Bytes txn_signing_bytes(const Transaction& t) {
    Writer w;
    w.raw("REQ").id(t.client).u64(t.client_ts);
    encode(w, t.op);
    return std::move(w).take();
}

Bytes endorsement_signing_bytes(const Endorsement& e) {
    Writer w;
    w.raw("END");
    encode_endorsement_body(w, e);
    return std::move(w).take();
}

}  // namespace parblock
