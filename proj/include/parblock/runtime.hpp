#pragma once

// The environment a protocol node runs in. Node logic is written once against
// Runtime; the simulator and the threaded/socket deployments implement it.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "parblock/messages.hpp"
#include "parblock/types.hpp"

namespace parblock {

using Micros = std::chrono::microseconds;

class UnknownDestination : public std::runtime_error {
  public:
    explicit UnknownDestination(NodeId to)
        : std::runtime_error("unknown destination node " + std::to_string(to.value)) {}
};

class WorkerPool {
  public:
    virtual ~WorkerPool() = default;
    virtual std::size_t size() const = 0;
    // `work` runs on a worker and must touch only state it owns; `done` runs
    // afterwards on the node's main context. `cost` is how long the work
    // occupies a worker on a virtual clock; wall-clock runtimes ignore it.
    virtual void submit(Micros cost, std::function<void()> work, std::function<void()> done) = 0;
};

class Runtime {
  public:
    using TimerId = std::uint64_t;

    virtual ~Runtime() = default;
    virtual NodeId self() const = 0;
    virtual Micros now() const = 0;
    virtual void send(NodeId to, Frame frame) = 0;
    virtual void multicast(const std::vector<NodeId>& group, const Frame& frame) {
        for (auto to : group) send(to, frame);
    }
    virtual TimerId set_timer(Micros delay, std::function<void()> callback) = 0;
    virtual void cancel_timer(TimerId id) = 0;
    // Accounts CPU time spent by the node's main context (virtual clock only).
    virtual void charge(Micros cost) = 0;
    virtual WorkerPool& workers() = 0;
    virtual bool virtual_clock() const = 0;
};

class Node {
  public:
    virtual ~Node() = default;
    virtual void start(Runtime& rt) { rt_ = &rt; }
    virtual void on_frame(NodeId from, const Frame& frame) = 0;

  protected:
    Runtime& rt() const { return *rt_; }
    bool started() const { return rt_ != nullptr; }

  private:
    Runtime* rt_ = nullptr;
};

}  // namespace parblock
