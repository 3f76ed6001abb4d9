#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parblock/codec.hpp"
#include "parblock/types.hpp"

namespace parblock {

struct VersionedValue {
    Value value;
    std::uint64_t version = 0;
    bool operator==(const VersionedValue&) const = default;
};

// Key-value application state. Every committed write to a key bumps its
// version by exactly one.
class StateStore {
  public:
    std::optional<Value> get(const Key& k) const;
    std::uint64_t version(const Key& k) const;

    void put(const Key& k, Value v);
    // A committed write whose value is superseded by a later writer in the
    // same block still counts as one write.
    void bump(const Key& k);
    void apply(const ResultRecords& r);

    // Seeds initial state (version 0, not counted as a write).
    void seed(const Key& k, Value v);

    const std::map<Key, VersionedValue>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // Digest over (key, value) pairs only.
    Digest values_digest() const;
    std::map<Key, Value> values() const;

    bool operator==(const StateStore&) const = default;

  private:
    std::map<Key, VersionedValue> entries_;
};

void encode(Writer& w, const StateStore& s);
StateStore decode_state(Reader& r);

struct LedgerEntry {
    Block block;
    std::vector<TxnStatus> statuses;            // parallel to block.txns
    std::vector<ResultRecords> results;         // committed write records, abort marker otherwise
    bool operator==(const LedgerEntry&) const = default;
};

void encode(Writer& w, const LedgerEntry& e);
LedgerEntry decode_ledger_entry(Reader& r);

struct ChainCheck {
    bool ok = true;
    std::uint64_t first_bad_block = 0;  // valid when !ok
    std::string reason;
};

// Append-only, hash-chained block log with an optional backing file.
//
// File layout: "PBLG" magic, u32 format version, then one record per block:
// u32 payload length, canonical LedgerEntry, SHA-256 of the payload.
class Ledger {
  public:
    Ledger() = default;
    ~Ledger();
    Ledger(Ledger&&) noexcept;
    Ledger& operator=(Ledger&&) noexcept;

    // Starts persisting to `path` (truncates), writing entries already held.
    void persist_to(const std::filesystem::path& path);

    // Throws std::logic_error if the entry breaks the chain.
    void append(LedgerEntry entry);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    const LedgerEntry& at(std::size_t i) const { return entries_.at(i); }
    Digest tip_hash() const;

    static ChainCheck verify_chain(const std::vector<LedgerEntry>& entries);

    struct Loaded {
        std::vector<LedgerEntry> entries;
        ChainCheck check;
    };
    // Reads and verifies a persisted ledger; stops at the first corrupt record.
    static Loaded load(const std::filesystem::path& path);

  private:
    std::vector<LedgerEntry> entries_;
    std::unique_ptr<std::ofstream> file_;
};

}  // namespace parblock
