#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace parblock {

// Opaque byte strings. Equality is byte equality.
using Bytes = std::string;
using Key = std::string;
using Value = std::string;

struct NodeId {
    std::uint32_t value = 0;
    auto operator<=>(const NodeId&) const = default;
};

struct ClientId {
    std::uint32_t value = 0;
    auto operator<=>(const ClientId&) const = default;
};

struct AppId {
    std::uint32_t value = 0;
    auto operator<=>(const AppId&) const = default;
};

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Digest&) const = default;
    bool is_zero() const;
    std::string hex() const;
    std::string short_hex() const { return hex().substr(0, 12); }
    static Digest zero() { return {}; }
};

// Derived from (client, client_ts); see make_txn_id().
using TxnId = Digest;

struct Signature {
    Bytes bytes;
    auto operator<=>(const Signature&) const = default;
};

struct Operation {
    AppId app;
    Bytes payload;
    std::set<Key> read_set;
    std::set<Key> write_set;
    auto operator<=>(const Operation&) const = default;
};

struct Transaction {
    TxnId id;
    ClientId client;
    std::uint64_t client_ts = 0;
    Operation op;
    Signature sig;
    auto operator<=>(const Transaction&) const = default;
};

// Position of an ordered transaction; lexicographic order is the global order.
struct BlockTimestamp {
    std::uint64_t block_seq = 0;
    std::uint32_t index = 0;
    auto operator<=>(const BlockTimestamp&) const = default;
};

// Outcome of executing one transaction: either the updated records or "abort".
struct ResultRecords {
    bool aborted = false;
    std::map<Key, Value> writes;

    static ResultRecords abort() { return ResultRecords{true, {}}; }
    auto operator<=>(const ResultRecords&) const = default;
};

struct Endorsement {
    TxnId txn;
    std::map<Key, std::uint64_t> read_versions;
    ResultRecords result;
    NodeId endorser;
    Signature sig;
    auto operator<=>(const Endorsement&) const = default;
};

struct Block {
    std::uint64_t seq = 0;
    std::vector<Transaction> txns;
    Digest prev_hash;
    std::set<AppId> apps;
    // Parallel to txns; populated only for execute-order-validate blocks.
    std::vector<std::vector<Endorsement>> endorsements;
    auto operator<=>(const Block&) const = default;
};

enum class TxnStatus : std::uint8_t { committed = 0, aborted = 1, failed = 2 };

std::string_view to_string(TxnStatus s);

std::set<AppId> apps_of(const std::vector<Transaction>& txns);

}  // namespace parblock

template <>
struct std::hash<parblock::Digest> {
    std::size_t operator()(const parblock::Digest& d) const noexcept {
        std::size_t h = 0;
        for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
        return h;
    }
};

template <>
struct std::hash<parblock::NodeId> {
    std::size_t operator()(parblock::NodeId n) const noexcept { return std::hash<std::uint32_t>{}(n.value); }
};
