#include "parblock/sim_network.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <deque>
#include <thread>

namespace parblock {

std::string_view to_string(ClockMode m) { return m == ClockMode::virtual_clock ? "virtual" : "wall"; }

struct SimNetwork::TraceHasher {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    TraceHasher() { EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr); }
    ~TraceHasher() { EVP_MD_CTX_free(ctx); }
    void update(std::string_view s) { EVP_DigestUpdate(ctx, s.data(), s.size()); }
    Digest snapshot() const {
        EVP_MD_CTX* copy = EVP_MD_CTX_new();
        EVP_MD_CTX_copy_ex(copy, ctx);
        Digest d;
        unsigned int len = 0;
        EVP_DigestFinal_ex(copy, d.bytes.data(), &len);
        EVP_MD_CTX_free(copy);
        return d;
    }
};

class SimNetwork::SimWorkers final : public WorkerPool {
  public:
    SimWorkers(SimNetwork& net, NodeRuntime& owner, std::size_t n);
    std::size_t size() const override { return free_at_.size(); }
    void submit(Micros cost, std::function<void()> work, std::function<void()> done) override;

  private:
    SimNetwork& net_;
    NodeRuntime& owner_;
    std::vector<Micros> free_at_;
};

class SimNetwork::NodeRuntime final : public Runtime {
  public:
    NodeRuntime(SimNetwork& net, NodeId id, std::shared_ptr<Node> node, std::size_t workers)
        : net_(net), id_(id), node_(std::move(node)), workers_(net, *this, workers) {}

    NodeId self() const override { return id_; }
    Micros now() const override { return running_ ? handler_start_ + charged_ : net_.now_; }

    void send(NodeId to, Frame frame) override {
        if (!net_.nodes_.contains(to)) throw UnknownDestination(to);
        net_.transmit(id_, to, std::move(frame), now());
    }

    TimerId set_timer(Micros delay, std::function<void()> callback) override {
        auto id = ++next_timer_;
        live_timers_.insert(id);
        net_.schedule(now() + delay, [this, id, cb = std::move(callback)]() mutable {
            net_.enqueue(id_, net_.now_, [this, id, cb = std::move(cb)]() {
                if (live_timers_.erase(id)) cb();
            });
        });
        return id;
    }

    void cancel_timer(TimerId id) override { live_timers_.erase(id); }
    void charge(Micros cost) override { charged_ += cost; }
    WorkerPool& workers() override { return workers_; }
    bool virtual_clock() const override { return true; }

    SimNetwork& net_;
    NodeId id_;
    std::shared_ptr<Node> node_;
    SimWorkers workers_;
    std::deque<std::function<void()>> inbox_;
    bool drain_scheduled_ = false;
    bool running_ = false;
    bool crashed_ = false;
    Micros busy_until_{0};
    Micros handler_start_{0};
    Micros charged_{0};
    TimerId next_timer_ = 0;
    std::set<TimerId> live_timers_;
};

SimNetwork::SimWorkers::SimWorkers(SimNetwork& net, NodeRuntime& owner, std::size_t n)
    : net_(net), owner_(owner), free_at_(std::max<std::size_t>(n, 1), Micros{0}) {}

void SimNetwork::SimWorkers::submit(Micros cost, std::function<void()> work, std::function<void()> done) {
    // The task body runs at dispatch; only its completion is delayed.
    work();
    auto slot = std::min_element(free_at_.begin(), free_at_.end());
    auto begin = std::max(owner_.now(), *slot);
    *slot = begin + cost;
    auto id = owner_.id_;
    net_.schedule(*slot, [this, id, done = std::move(done)]() mutable { net_.enqueue(id, net_.now_, std::move(done)); });
}

SimNetwork::SimNetwork(NetConfig config) : config_(std::move(config)), hasher_(std::make_unique<TraceHasher>()) {}
SimNetwork::~SimNetwork() = default;

void SimNetwork::add_node(NodeId id, std::shared_ptr<Node> node, std::size_t workers) {
    if (nodes_.contains(id)) throw std::invalid_argument("duplicate node id " + std::to_string(id.value));
    nodes_.emplace(id, std::make_unique<NodeRuntime>(*this, id, std::move(node), workers));
    if (started_) nodes_.at(id)->node_->start(*nodes_.at(id));
}

bool SimNetwork::has_node(NodeId id) const { return nodes_.contains(id); }

void SimNetwork::inject_latency(const std::set<NodeId>& group, LatencyModel model) {
    if (config_.mode != NetMode::sim) throw std::logic_error("latency injection is only supported in sim mode");
    for (auto n : group) group_latency_[n] = model;
    for (auto& [key, state] : links_)
        if (!state.customised_latency && (group.contains(key.first) || group.contains(key.second)))
            state.latency = model;
}

SimNetwork::LinkState& SimNetwork::link(NodeId from, NodeId to) {
    auto key = std::make_pair(from, to);
    auto it = links_.find(key);
    if (it != links_.end()) return it->second;
    LinkState state;
    state.latency = config_.latency;
    auto pick = [&](NodeId n) {
        auto g = group_latency_.find(n);
        if (g != group_latency_.end() && g->second.mean >= state.latency.mean) state.latency = g->second;
    };
    pick(from);
    pick(to);
    state.loss_rate = config_.loss_rate;
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      from.value, to.value};
    state.rng.seed(seq);
    return links_.emplace(key, std::move(state)).first->second;
}

void SimNetwork::set_link_latency(NodeId from, NodeId to, LatencyModel model) {
    auto& l = link(from, to);
    l.latency = model;
    l.customised_latency = true;
}

void SimNetwork::set_link_loss(NodeId from, NodeId to, double rate) { link(from, to).loss_rate = rate; }

void SimNetwork::crash(NodeId id) {
    auto& n = *nodes_.at(id);
    n.crashed_ = true;
    n.inbox_.clear();
}

void SimNetwork::crash_at(NodeId id, Micros at) {
    schedule(at, [this, id] { crash(id); });
}

bool SimNetwork::crashed(NodeId id) const { return nodes_.at(id)->crashed_; }

void SimNetwork::start() {
    if (started_) return;
    started_ = true;
    for (auto& [id, n] : nodes_) {
        // Start handlers run on the node's context at time 0.
        auto* rt = n.get();
        enqueue(id, now_, [rt] { rt->node_->start(*rt); });
    }
}

void SimNetwork::schedule(Micros at, std::function<void()> fn) {
    events_.push(Event{std::max(at, now_), seq_++, std::move(fn)});
}

void SimNetwork::enqueue(NodeId node, Micros at, std::function<void()> item) {
    auto& n = *nodes_.at(node);
    if (n.crashed_) return;
    n.inbox_.push_back(std::move(item));
    if (!n.drain_scheduled_) {
        n.drain_scheduled_ = true;
        schedule(std::max(at, n.busy_until_), [this, node] { drain(node); });
    }
}

void SimNetwork::drain(NodeId node) {
    auto& n = *nodes_.at(node);
    n.drain_scheduled_ = false;
    if (n.crashed_ || n.inbox_.empty()) return;
    auto item = std::move(n.inbox_.front());
    n.inbox_.pop_front();
    n.running_ = true;
    n.handler_start_ = now_;
    n.charged_ = Micros{0};
    item();
    n.running_ = false;
    n.busy_until_ = now_ + n.charged_;
    if (!n.inbox_.empty() && !n.crashed_) {
        n.drain_scheduled_ = true;
        schedule(n.busy_until_, [this, node] { drain(node); });
    }
}

bool SimNetwork::partitioned(NodeId from, NodeId to, Micros at) const {
    for (const auto& p : config_.partitions)
        if (at >= p.start && at < p.end && (p.group.contains(from) || p.group.contains(to))) return true;
    return false;
}

void SimNetwork::transmit(NodeId from, NodeId to, Frame frame, Micros depart) {
    ++sent_[frame.type];
    auto& src = *nodes_.at(from);
    if (src.crashed_) return;
    auto& l = link(from, to);
    if (l.loss_rate > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(l.rng) < l.loss_rate) {
            ++dropped_;
            return;
        }
    }
    if (partitioned(from, to, depart)) {
        ++dropped_;
        return;
    }
    Micros delay = l.latency.min;
    if (l.latency.mean > l.latency.min) {
        std::exponential_distribution<double> exp(1.0 / static_cast<double>((l.latency.mean - l.latency.min).count()));
        delay += Micros{static_cast<std::int64_t>(exp(l.rng))};
    }
    auto arrive = std::max(depart + delay, l.last_delivery);
    l.last_delivery = arrive;
    schedule(arrive, [this, from, to, frame = std::move(frame)]() mutable {
        auto& dst = *nodes_.at(to);
        if (dst.crashed_) return;
        ++delivered_[frame.type];
        {
            Writer w;
            w.u64(static_cast<std::uint64_t>(now_.count())).id(from).id(to).u8(static_cast<std::uint8_t>(frame.type));
            w.bytes(frame.payload);
            hasher_->update(w.data());
        }
        if (config_.record_trace) trace_.push_back({now_, from, to, frame.type, sha256(frame.payload)});
        auto* rt = &dst;
        enqueue(to, now_, [rt, from, frame = std::move(frame)] { rt->node_->on_frame(from, frame); });
    });
}

void SimNetwork::inject(NodeId from, NodeId to, Frame frame) {
    if (!nodes_.contains(to)) throw UnknownDestination(to);
    if (!nodes_.contains(from)) {
        // External sender: deliver directly.
        schedule(now_, [this, from, to, frame = std::move(frame)]() mutable {
            auto* rt = nodes_.at(to).get();
            enqueue(to, now_, [rt, from, frame = std::move(frame)] { rt->node_->on_frame(from, frame); });
        });
        return;
    }
    transmit(from, to, std::move(frame), now_);
}

void SimNetwork::post(NodeId node, Micros at, std::function<void()> fn) {
    schedule(at, [this, node, fn = std::move(fn)]() mutable { enqueue(node, now_, std::move(fn)); });
}

bool SimNetwork::step() {
    if (events_.empty()) return false;
    auto ev = events_.top();
    events_.pop();
    if (config_.clock == ClockMode::wall_clock && ev.at > now_) {
        std::this_thread::sleep_for(ev.at - now_);
    }
    now_ = std::max(now_, ev.at);
    ev.fn();
    return true;
}

void SimNetwork::run_until(Micros t) {
    while (!events_.empty() && events_.top().at <= t) step();
    now_ = std::max(now_, t);
}

std::uint64_t SimNetwork::run(std::uint64_t max_events) {
    std::uint64_t n = 0;
    while (n < max_events && step()) ++n;
    return n;
}

Digest SimNetwork::trace_hash() const { return hasher_->snapshot(); }

std::uint64_t SimNetwork::frames_sent(FrameType t) const {
    auto it = sent_.find(t);
    return it == sent_.end() ? 0 : it->second;
}

std::uint64_t SimNetwork::frames_delivered(FrameType t) const {
    auto it = delivered_.find(t);
    return it == delivered_.end() ? 0 : it->second;
}

}  // namespace parblock
