#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "parblock/baselines.hpp"
#include "parblock/messages.hpp"
#include "parblock/runtime.hpp"

namespace parblock {

enum class Paradigm { ox, xov, oxii };
std::string_view to_string(Paradigm p);
Paradigm parse_paradigm(std::string_view s);

struct ClientRecord {
    TxnId id;
    ClientId client;
    Micros submitted{0};
    std::optional<Micros> ordered;   // block cut at the leading orderer
    std::optional<Micros> decided;   // outcome known at the observer
    std::optional<TxnOutcome> outcome;
    std::optional<BlockTimestamp> position;
};

// Many closed-loop clients multiplexed on one node: each client keeps one
// request in flight and issues the next as soon as the previous resolves.
class ClientHostNode final : public Node {
  public:
    using Source = std::function<std::optional<Transaction>(ClientId)>;

    struct Options {
        Paradigm paradigm = Paradigm::oxii;
        NodeId orderer;  // submission target
        std::map<AppId, std::set<NodeId>> agents;
        EndorsementPolicy policy;
        Micros endorse_timeout{5'000'000};
    };

    ClientHostNode(NodeId self, Options options, std::vector<ClientId> clients, Source source);

    void start(Runtime& rt) override;
    void on_frame(NodeId from, const Frame& frame) override;

    void stop_submitting() { submitting_ = false; }
    // Observation hooks wired by the harness.
    void note_ordered(const TxnId& id, Micros at);
    void note_decided(const TxnId& id, Micros at);

    const std::vector<ClientRecord>& records() const { return records_; }
    std::size_t outstanding() const { return outstanding_; }

  private:
    struct Pending {
        std::size_t record;
        std::optional<EndorsementCollector> collector;
        std::optional<Runtime::TimerId> timer;
    };

    void submit_next(ClientId c);
    void resolve(const TxnId& id, TxnOutcome outcome, std::optional<BlockTimestamp> pos);

    NodeId self_;
    Options options_;
    std::vector<ClientId> clients_;
    Source source_;
    bool submitting_ = true;
    std::vector<ClientRecord> records_;
    std::unordered_map<TxnId, Pending> pending_;
    std::unordered_map<TxnId, std::size_t> index_;
    std::size_t outstanding_ = 0;
};

}  // namespace parblock
