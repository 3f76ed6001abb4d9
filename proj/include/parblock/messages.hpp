#pragma once

// Protocol messages and the framing shared by every transport.

#include <optional>
#include <string_view>
#include <vector>

#include "parblock/codec.hpp"
#include "parblock/crypto.hpp"
#include "parblock/depgraph.hpp"
#include "parblock/types.hpp"

namespace parblock {

enum class FrameType : std::uint8_t {
    control = 0,
    request = 1,
    newblock = 2,
    commit = 3,
    endorse = 4,
    endorsed = 5,
};

std::string_view to_string(FrameType t);

struct Frame {
    FrameType type = FrameType::control;
    Bytes payload;
    bool operator==(const Frame&) const = default;
};

// Wire form: u32 length of (tag + payload), u8 tag, payload.
Bytes encode_frame(const Frame& f);
// Parses one frame from the front of `data`; nullopt if incomplete.
std::optional<Frame> decode_frame(std::string_view data, std::size_t& consumed);

// Subtypes carried in the first payload byte of control frames.
enum class ControlKind : std::uint8_t {
    reply = 1,
    consensus = 2,
    hello = 3,
    forward = 4,  // a follower orderer relaying a request to the leader
};

// Final outcome of a client request as reported back to the client.
enum class TxnOutcome : std::uint8_t {
    committed = 0,
    aborted = 1,
    failed = 2,
    rejected_bad_sig = 3,
    rejected_unauthorized = 4,
    rejected_duplicate = 5,
    endorsement_mismatch = 6,
    endorsement_timeout = 7,
};

std::string_view to_string(TxnOutcome o);
TxnOutcome outcome_of(TxnStatus s);

struct RequestMsg {
    Transaction txn;
    std::vector<Endorsement> endorsements;  // execute-order-validate only
    bool operator==(const RequestMsg&) const = default;
};

struct NewBlockMsg {
    std::uint64_t seq = 0;
    Block block;
    DependencyGraph graph;
    std::set<AppId> apps;
    NodeId orderer;
    Digest prev_hash;
    Signature sig;
};

// Bytes compared for quorum matching and covered by the orderer signature:
// (seq, block, graph, apps, prev_hash).
Bytes newblock_content_bytes(const NewBlockMsg& m);

struct CommitMsg {
    std::uint64_t block_seq = 0;
    std::vector<std::pair<TxnId, ResultRecords>> results;  // sorted by TxnId
    NodeId sender;
    Signature sig;
};

Bytes commit_signing_bytes(const CommitMsg& m);

struct ReplyMsg {
    TxnId txn;
    ClientId client;
    TxnOutcome outcome = TxnOutcome::committed;
    BlockTimestamp position;
};

struct EndorseMsg {
    Transaction txn;
};

void encode(Writer& w, const RequestMsg& m);
void encode(Writer& w, const NewBlockMsg& m);
void encode(Writer& w, const CommitMsg& m);
void encode(Writer& w, const ReplyMsg& m);

RequestMsg decode_request(Reader& r);
NewBlockMsg decode_newblock(Reader& r);
CommitMsg decode_commit(Reader& r);
ReplyMsg decode_reply(Reader& r);

Frame make_request_frame(const RequestMsg& m);
Frame make_newblock_frame(const NewBlockMsg& m);
Frame make_commit_frame(const CommitMsg& m);
Frame make_reply_frame(const ReplyMsg& m);
Frame make_endorse_frame(const Transaction& t);
Frame make_endorsed_frame(const Endorsement& e);

// Convenience constructors used by clients and tests.
Transaction make_transaction(const KeyRing& keys, ClientId client, std::uint64_t client_ts, Operation op);
NewBlockMsg make_newblock(const KeyRing& keys, NodeId orderer, Block block, DependencyGraph graph);
void sign_commit(const KeyRing& keys, CommitMsg& m);

bool verify_transaction(const KeyRing& keys, const Transaction& t);
bool verify_newblock(const KeyRing& keys, const NewBlockMsg& m);
bool verify_commit(const KeyRing& keys, const CommitMsg& m);
bool verify_endorsement(const KeyRing& keys, const Endorsement& e);

}  // namespace parblock
