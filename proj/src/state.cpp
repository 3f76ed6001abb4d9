#include "parblock/state.hpp"

#include <stdexcept>

#include "parblock/crypto.hpp"

namespace parblock {

std::optional<Value> StateStore::get(const Key& k) const {
    auto it = entries_.find(k);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

std::uint64_t StateStore::version(const Key& k) const {
    auto it = entries_.find(k);
    return it == entries_.end() ? 0 : it->second.version;
}

void StateStore::put(const Key& k, Value v) {
    auto& e = entries_[k];
    e.value = std::move(v);
    ++e.version;
}

void StateStore::bump(const Key& k) { ++entries_[k].version; }

void StateStore::apply(const ResultRecords& r) {
    if (r.aborted) return;
    for (const auto& [k, v] : r.writes) put(k, v);
}

void StateStore::seed(const Key& k, Value v) { entries_[k] = VersionedValue{std::move(v), 0}; }

Digest StateStore::values_digest() const {
    Writer w;
    for (const auto& [k, e] : entries_) w.bytes(k).bytes(e.value);
    return sha256(w.data());
}

std::map<Key, Value> StateStore::values() const {
    std::map<Key, Value> out;
    for (const auto& [k, e] : entries_) out.emplace(k, e.value);
    return out;
}

void encode(Writer& w, const StateStore& s) {
    w.u32(static_cast<std::uint32_t>(s.entries().size()));
    for (const auto& [k, e] : s.entries()) w.bytes(k).bytes(e.value).u64(e.version);
}

StateStore decode_state(Reader& r) {
    StateStore s;
    auto n = r.count(16);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto k = r.bytes();
        auto v = r.bytes();
        auto ver = r.u64();
        s.seed(k, std::move(v));
        for (std::uint64_t j = 0; j < ver; ++j) s.bump(k);
    }
    return s;
}

void encode(Writer& w, const LedgerEntry& e) {
    encode(w, e.block);
    w.u32(static_cast<std::uint32_t>(e.statuses.size()));
    for (auto s : e.statuses) w.u8(static_cast<std::uint8_t>(s));
    w.u32(static_cast<std::uint32_t>(e.results.size()));
    for (const auto& r : e.results) encode(w, r);
}

LedgerEntry decode_ledger_entry(Reader& r) {
    LedgerEntry e;
    e.block = decode_block(r);
    auto n = r.count(1);
    for (std::uint32_t i = 0; i < n; ++i) {
        auto s = r.u8();
        if (s > static_cast<std::uint8_t>(TxnStatus::failed)) throw DecodeError("unknown txn status");
        e.statuses.push_back(static_cast<TxnStatus>(s));
    }
    auto m = r.count(5);
    for (std::uint32_t i = 0; i < m; ++i) e.results.push_back(decode_result(r));
    return e;
}

namespace {

constexpr std::string_view kMagic = "PBLG";
constexpr std::uint32_t kFormatVersion = 1;

void write_record(std::ofstream& out, const LedgerEntry& e) {
    auto payload = canonical_bytes(e);
    Writer w;
    w.u32(static_cast<std::uint32_t>(payload.size())).raw(payload).digest(sha256(payload));
    out.write(w.data().data(), static_cast<std::streamsize>(w.size()));
    out.flush();
}

}  // namespace

Ledger::~Ledger() = default;
Ledger::Ledger(Ledger&&) noexcept = default;
Ledger& Ledger::operator=(Ledger&&) noexcept = default;

void Ledger::persist_to(const std::filesystem::path& path) {
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*file_) throw std::runtime_error("cannot open ledger file " + path.string());
    Writer w;
    w.raw(kMagic).u32(kFormatVersion);
    file_->write(w.data().data(), static_cast<std::streamsize>(w.size()));
    for (const auto& e : entries_) write_record(*file_, e);
    file_->flush();
}

Digest Ledger::tip_hash() const { return entries_.empty() ? Digest::zero() : hash_block(entries_.back().block); }

void Ledger::append(LedgerEntry entry) {
    if (entry.block.seq != entries_.size())
        throw std::logic_error("ledger append out of sequence: got block " + std::to_string(entry.block.seq) +
                               ", expected " + std::to_string(entries_.size()));
    if (entry.block.prev_hash != tip_hash()) throw std::logic_error("ledger append breaks the hash chain");
    if (entry.statuses.size() != entry.block.txns.size() || entry.results.size() != entry.block.txns.size())
        throw std::logic_error("ledger entry statuses do not match block");
    if (file_) write_record(*file_, entry);
    entries_.push_back(std::move(entry));
}

ChainCheck Ledger::verify_chain(const std::vector<LedgerEntry>& entries) {
    Digest prev = Digest::zero();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        auto fail = [&](std::string why) { return ChainCheck{false, i, std::move(why)}; };
        if (e.block.seq != i) return fail("sequence gap");
        if (e.block.prev_hash != prev) return fail("prev_hash does not match predecessor");
        if (e.block.txns.empty()) return fail("empty block");
        if (e.block.apps != apps_of(e.block.txns)) return fail("application set mismatch");
        if (e.statuses.size() != e.block.txns.size() || e.results.size() != e.block.txns.size())
            return fail("status list does not match block");
        for (std::size_t t = 0; t < e.statuses.size(); ++t) {
            bool committed = e.statuses[t] == TxnStatus::committed;
            if (committed == e.results[t].aborted) return fail("status and result disagree");
            for (const auto& [k, v] : e.results[t].writes)
                if (!e.block.txns[t].op.write_set.contains(k)) return fail("write outside declared write set");
        }
        prev = hash_block(e.block);
    }
    return {};
}

Ledger::Loaded Ledger::load(const std::filesystem::path& path) {
    Loaded out;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        out.check = {false, 0, "cannot open " + path.string()};
        return out;
    }
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    try {
        if (r.raw(kMagic.size()) != kMagic) throw DecodeError("bad magic");
        if (r.u32() != kFormatVersion) throw DecodeError("unsupported ledger format");
    } catch (const DecodeError& e) {
        out.check = {false, 0, std::string("header: ") + e.what()};
        return out;
    }
    while (!r.at_end()) {
        auto block_no = out.entries.size();
        try {
            auto len = r.u32();
            auto payload = r.raw(len);
            auto digest = r.digest();
            if (sha256(payload) != digest) throw DecodeError("record digest mismatch");
            out.entries.push_back(decode_all<LedgerEntry>(payload, decode_ledger_entry));
        } catch (const DecodeError& e) {
            out.check = {false, block_no, std::string("corrupt record: ") + e.what()};
            return out;
        }
    }
    out.check = verify_chain(out.entries);
    return out;
}

}  // namespace parblock
