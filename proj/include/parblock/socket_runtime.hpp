#pragma once

// Wall-clock runtime over TCP. Each node gets a listener, one reader thread per
// inbound connection, one writer thread per outbound peer, a worker pool, and a
// single main-context thread that runs every Node callback.
//
// Connections open lazily on first send and announce themselves with a hello
// control frame carrying the sender's NodeId. Streams are reliable; there is no
// loss or latency model in this mode.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "parblock/runtime.hpp"

namespace parblock {

class UnsupportedInSocketMode : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

struct HostPort {
    std::string host;
    std::uint16_t port = 0;
    // "host:port"; throws std::invalid_argument.
    static HostPort parse(const std::string& s);
    std::string str() const { return host + ":" + std::to_string(port); }
};

class SocketRuntime final : public Runtime {
  public:
    // Binds the listener immediately; port 0 picks a free port.
    SocketRuntime(NodeId self, const std::string& listen_addr, std::size_t workers = 1);
    ~SocketRuntime() override;
    SocketRuntime(const SocketRuntime&) = delete;
    SocketRuntime& operator=(const SocketRuntime&) = delete;

    std::uint16_t port() const { return port_; }
    // Peer addresses; must be set before start().
    void set_peers(std::map<NodeId, std::string> addrs);

    // Starts the threads and calls node->start on the main context.
    void start(std::shared_ptr<Node> node);
    void stop();
    // Runs `fn` on the main context.
    void post(std::function<void()> fn);
    // Runs `fn` on the main context and waits for it.
    void call(const std::function<void()>& fn);

    NodeId self() const override { return self_; }
    Micros now() const override;
    void send(NodeId to, Frame frame) override;
    TimerId set_timer(Micros delay, std::function<void()> callback) override;
    void cancel_timer(TimerId id) override;
    void charge(Micros) override {}
    WorkerPool& workers() override;
    bool virtual_clock() const override { return false; }

    std::uint64_t frames_received() const { return received_.load(); }

  private:
    class Pool;
    struct Peer;

    void main_loop();
    void accept_loop();
    void read_loop(int fd);
    void write_loop(Peer* peer);
    Peer& peer(NodeId to);

    NodeId self_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::map<NodeId, HostPort> addrs_;
    std::shared_ptr<Node> node_;
    std::unique_ptr<Pool> pool_;
    std::chrono::steady_clock::time_point epoch_;

    std::atomic<bool> running_{false};
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> inbox_;
    std::multimap<std::chrono::steady_clock::time_point, std::pair<TimerId, std::function<void()>>> timers_;
    std::map<TimerId, std::chrono::steady_clock::time_point> timer_at_;
    TimerId next_timer_ = 1;

    std::mutex peers_mu_;
    std::map<NodeId, std::unique_ptr<Peer>> peers_;
    std::mutex readers_mu_;
    std::vector<std::thread> readers_;
    std::vector<int> reader_fds_;
    std::thread main_thread_;
    std::thread accept_thread_;
    std::atomic<std::uint64_t> received_{0};
};

// A set of SocketRuntimes on loopback, one per node, in one process.
class LoopbackCluster {
  public:
    ~LoopbackCluster();
    // Reserves a listener for `id`.
    SocketRuntime& add(NodeId id, std::size_t workers = 1);
    // Wires every runtime's peer table and starts all nodes.
    void start(const std::map<NodeId, std::shared_ptr<Node>>& nodes);
    void stop();
    SocketRuntime& runtime(NodeId id) { return *runtimes_.at(id); }
    std::map<NodeId, std::string> addresses() const;

    // Latency injection is a simulator feature.
    [[noreturn]] void inject_latency(const std::set<NodeId>& group, Micros extra);

  private:
    std::map<NodeId, std::unique_ptr<SocketRuntime>> runtimes_;
};

}  // namespace parblock
