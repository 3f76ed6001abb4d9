#pragma once

// Single-threaded discrete-event simulator with a virtual clock.
//
// Every node owns one serial main context: inbound frames, timers, and worker
// completions queue in a per-node inbox and are handled one at a time. Time
// charged by a handler (Runtime::charge) delays that node's next event and the
// departure of anything it sends afterwards. Workers are modelled as `k`
// slots; a submitted task occupies the earliest-free slot for its cost.
//
// Links are FIFO; per-link latency is min + Exp(mean - min), drawn from a
// per-link RNG derived from the seed, so fixed seeds give identical traces.

#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "parblock/runtime.hpp"

namespace parblock {

struct LatencyModel {
    Micros min{0};
    Micros mean{0};
    bool operator==(const LatencyModel&) const = default;
};

struct PartitionWindow {
    std::set<NodeId> group;  // links touching any member are down
    Micros start{0};
    Micros end{0};
};

enum class NetMode { sim, sockets };
enum class ClockMode { virtual_clock, wall_clock };

std::string_view to_string(ClockMode m);

struct NetConfig {
    NetMode mode = NetMode::sim;
    ClockMode clock = ClockMode::virtual_clock;
    LatencyModel latency{Micros{200}, Micros{300}};
    double loss_rate = 0.0;
    std::vector<PartitionWindow> partitions;
    std::uint64_t seed = 1;
    bool record_trace = false;
};

struct TraceEntry {
    Micros at{0};
    NodeId from;
    NodeId to;
    FrameType type = FrameType::control;
    Digest payload_digest;
};

class SimNetwork {
  public:
    explicit SimNetwork(NetConfig config);
    ~SimNetwork();
    SimNetwork(const SimNetwork&) = delete;
    SimNetwork& operator=(const SimNetwork&) = delete;

    void add_node(NodeId id, std::shared_ptr<Node> node, std::size_t workers = 1);
    bool has_node(NodeId id) const;

    // All links touching a member of `group` adopt `model`.
    void inject_latency(const std::set<NodeId>& group, LatencyModel model);
    void set_link_latency(NodeId from, NodeId to, LatencyModel model);
    void set_link_loss(NodeId from, NodeId to, double rate);

    // Crash-stop: the node stops handling events and its links go silent.
    void crash(NodeId id);
    void crash_at(NodeId id, Micros at);
    bool crashed(NodeId id) const;

    // Calls Node::start on every node (once).
    void start();

    // Injects a frame as if `from` had sent it now.
    void inject(NodeId from, NodeId to, Frame frame);

    // Schedules an arbitrary callback on a node's main context.
    void post(NodeId node, Micros at, std::function<void()> fn);

    bool step();
    void run_until(Micros t);
    // Runs until no events remain or `max_events` were processed.
    std::uint64_t run(std::uint64_t max_events = UINT64_MAX);
    Micros now() const { return now_; }

    // Hash over the full delivery trace (requires record_trace or hashes anyway).
    Digest trace_hash() const;
    const std::vector<TraceEntry>& trace() const { return trace_; }

    std::uint64_t frames_sent(FrameType t) const;
    std::uint64_t frames_delivered(FrameType t) const;
    std::uint64_t frames_dropped() const { return dropped_; }

    const NetConfig& config() const { return config_; }

  private:
    class NodeRuntime;
    class SimWorkers;
    friend class NodeRuntime;
    friend class SimWorkers;

    struct Event {
        Micros at;
        std::uint64_t seq;
        std::function<void()> fn;
        bool operator>(const Event& o) const { return at != o.at ? at > o.at : seq > o.seq; }
    };

    struct LinkState {
        LatencyModel latency;
        double loss_rate = 0.0;
        Micros last_delivery{0};
        std::mt19937_64 rng;
        bool customised_latency = false;
    };

    void schedule(Micros at, std::function<void()> fn);
    void enqueue(NodeId node, Micros at, std::function<void()> item);
    void drain(NodeId node);
    void transmit(NodeId from, NodeId to, Frame frame, Micros depart);
    LinkState& link(NodeId from, NodeId to);
    bool partitioned(NodeId from, NodeId to, Micros at) const;

    NetConfig config_;
    Micros now_{0};
    std::uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::map<NodeId, std::unique_ptr<NodeRuntime>> nodes_;
    std::map<std::pair<NodeId, NodeId>, LinkState> links_;
    std::map<NodeId, LatencyModel> group_latency_;
    std::vector<TraceEntry> trace_;
    struct TraceHasher;
    std::unique_ptr<TraceHasher> hasher_;
    std::map<FrameType, std::uint64_t> sent_;
    std::map<FrameType, std::uint64_t> delivered_;
    std::uint64_t dropped_ = 0;
    bool started_ = false;
};

}  // namespace parblock
