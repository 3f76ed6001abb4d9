#include "parblock/socket_runtime.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <set>

#include "parblock/codec.hpp"

namespace parblock {

using Clock = std::chrono::steady_clock;

HostPort HostPort::parse(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon + 1 == s.size()) throw std::invalid_argument("address needs host:port: " + s);
    HostPort hp;
    hp.host = s.substr(0, colon);
    if (hp.host.empty()) hp.host = "127.0.0.1";
    auto port = std::stoul(s.substr(colon + 1));
    if (port > 65535) throw std::invalid_argument("port out of range: " + s);
    hp.port = static_cast<std::uint16_t>(port);
    return hp;
}

namespace {

bool write_all(int fd, const char* data, std::size_t n) {
    while (n > 0) {
        auto w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

int connect_to(const HostPort& hp) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(hp.host.c_str(), std::to_string(hp.port).c_str(), &hints, &res) != 0) return -1;
    int fd = -1;
    for (auto* p = res; p; p = p->ai_next) {
        fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd >= 0) {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    return fd;
}

Frame hello_frame(NodeId self) {
    Writer w;
    w.u8(static_cast<std::uint8_t>(ControlKind::hello)).id(self);
    return Frame{FrameType::control, std::move(w).take()};
}

}  // namespace

// ---------------------------------------------------------------------------

class SocketRuntime::Pool final : public WorkerPool {
  public:
    Pool(SocketRuntime& owner, std::size_t n) : owner_(owner) {
        for (std::size_t i = 0; i < std::max<std::size_t>(1, n); ++i) threads_.emplace_back([this] { loop(); });
    }
    ~Pool() override { shutdown(); }

    void shutdown() {
        {
            std::lock_guard lk(mu_);
            if (stopped_) return;
            stopped_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    std::size_t size() const override { return threads_.size(); }

    void submit(Micros, std::function<void()> work, std::function<void()> done) override {
        {
            std::lock_guard lk(mu_);
            jobs_.push_back({std::move(work), std::move(done)});
        }
        cv_.notify_one();
    }

  private:
    void loop() {
        for (;;) {
            std::pair<std::function<void()>, std::function<void()>> job;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stopped_ || !jobs_.empty(); });
                if (stopped_) return;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            job.first();
            owner_.post(std::move(job.second));
        }
    }

    SocketRuntime& owner_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::pair<std::function<void()>, std::function<void()>>> jobs_;
    std::vector<std::thread> threads_;
    bool stopped_ = false;
};

struct SocketRuntime::Peer {
    NodeId id;
    HostPort addr;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> outbox;
    bool closing = false;
    int fd = -1;
    std::thread writer;
};

SocketRuntime::SocketRuntime(NodeId self, const std::string& listen_addr, std::size_t workers)
    : self_(self), epoch_(Clock::now()) {
    auto hp = HostPort::parse(listen_addr);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(hp.port);
    if (::inet_pton(AF_INET, hp.host == "localhost" ? "127.0.0.1" : hp.host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw std::invalid_argument("listen address must be an IPv4 literal: " + listen_addr);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        auto err = std::string(std::strerror(errno));
        ::close(listen_fd_);
        throw std::runtime_error("cannot listen on " + listen_addr + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    pool_ = std::make_unique<Pool>(*this, workers);
}

SocketRuntime::~SocketRuntime() { stop(); }

void SocketRuntime::set_peers(std::map<NodeId, std::string> addrs) {
    for (const auto& [id, a] : addrs) addrs_[id] = HostPort::parse(a);
}

void SocketRuntime::start(std::shared_ptr<Node> node) {
    node_ = std::move(node);
    running_ = true;
    main_thread_ = std::thread([this] { main_loop(); });
    accept_thread_ = std::thread([this] { accept_loop(); });
    post([this] { node_->start(*this); });
}

void SocketRuntime::stop() {
    if (!running_.exchange(false)) {
        if (listen_fd_ >= 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
        }
        return;
    }
    cv_.notify_all();
    if (main_thread_.joinable()) main_thread_.join();
    pool_->shutdown();
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (accept_thread_.joinable()) accept_thread_.join();
    {
        std::lock_guard lk(peers_mu_);
        for (auto& [id, p] : peers_) {
            {
                std::lock_guard plk(p->mu);
                p->closing = true;
                if (p->fd >= 0) ::shutdown(p->fd, SHUT_RDWR);
            }
            p->cv.notify_all();
        }
    }
    for (auto& [id, p] : peers_)
        if (p->writer.joinable()) p->writer.join();
    {
        std::lock_guard lk(readers_mu_);
        for (int fd : reader_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : readers_) t.join();
}

Micros SocketRuntime::now() const { return std::chrono::duration_cast<Micros>(Clock::now() - epoch_); }

void SocketRuntime::post(std::function<void()> fn) {
    {
        std::lock_guard lk(mu_);
        inbox_.push_back(std::move(fn));
    }
    cv_.notify_one();
}

void SocketRuntime::call(const std::function<void()>& fn) {
    std::promise<void> done;
    post([&] {
        fn();
        done.set_value();
    });
    done.get_future().wait();
}

Runtime::TimerId SocketRuntime::set_timer(Micros delay, std::function<void()> callback) {
    std::lock_guard lk(mu_);
    auto id = next_timer_++;
    auto at = Clock::now() + delay;
    timers_.emplace(at, std::make_pair(id, std::move(callback)));
    timer_at_[id] = at;
    cv_.notify_one();
    return id;
}

void SocketRuntime::cancel_timer(TimerId id) {
    std::lock_guard lk(mu_);
    auto it = timer_at_.find(id);
    if (it == timer_at_.end()) return;
    auto [lo, hi] = timers_.equal_range(it->second);
    for (auto t = lo; t != hi; ++t)
        if (t->second.first == id) {
            timers_.erase(t);
            break;
        }
    timer_at_.erase(it);
}

WorkerPool& SocketRuntime::workers() { return *pool_; }

void SocketRuntime::main_loop() {
    std::unique_lock lk(mu_);
    while (running_) {
        if (!inbox_.empty()) {
            auto fn = std::move(inbox_.front());
            inbox_.pop_front();
            lk.unlock();
            fn();
            lk.lock();
            continue;
        }
        if (!timers_.empty() && timers_.begin()->first <= Clock::now()) {
            auto node = timers_.extract(timers_.begin());
            timer_at_.erase(node.mapped().first);
            lk.unlock();
            node.mapped().second();
            lk.lock();
            continue;
        }
        if (timers_.empty()) cv_.wait(lk);
        else cv_.wait_until(lk, timers_.begin()->first);
    }
}

void SocketRuntime::accept_loop() {
    while (running_) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            return;
        }
        std::lock_guard lk(readers_mu_);
        reader_fds_.push_back(fd);
        readers_.emplace_back([this, fd] { read_loop(fd); });
    }
}

void SocketRuntime::read_loop(int fd) {
    std::string buf;
    std::optional<NodeId> from;
    char chunk[64 * 1024];
    while (running_) {
        auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            break;
        }
        buf.append(chunk, static_cast<std::size_t>(n));
        std::size_t offset = 0;
        bool bad = false;
        for (;;) {
            std::size_t used = 0;
            std::optional<Frame> f;
            try {
                f = decode_frame(std::string_view(buf).substr(offset), used);
            } catch (const DecodeError&) {
                bad = true;
                break;
            }
            if (!f) break;
            offset += used;
            if (!from) {
                // The first frame must identify the peer.
                try {
                    Reader r(f->payload);
                    if (f->type != FrameType::control || static_cast<ControlKind>(r.u8()) != ControlKind::hello) {
                        bad = true;
                        break;
                    }
                    from = r.id<NodeId>();
                } catch (const DecodeError&) {
                    bad = true;
                    break;
                }
                continue;
            }
            ++received_;
            post([this, src = *from, frame = std::move(*f)] { node_->on_frame(src, frame); });
        }
        if (bad) break;
        buf.erase(0, offset);
    }
    ::close(fd);
    std::lock_guard lk(readers_mu_);
    std::erase(reader_fds_, fd);
}

SocketRuntime::Peer& SocketRuntime::peer(NodeId to) {
    std::lock_guard lk(peers_mu_);
    auto it = peers_.find(to);
    if (it != peers_.end()) return *it->second;
    auto addr = addrs_.find(to);
    if (addr == addrs_.end()) throw UnknownDestination(to);
    auto p = std::make_unique<Peer>();
    p->id = to;
    p->addr = addr->second;
    auto* raw = p.get();
    p->writer = std::thread([this, raw] { write_loop(raw); });
    peers_.emplace(to, std::move(p));
    return *raw;
}

void SocketRuntime::send(NodeId to, Frame frame) {
    if (to == self_) {
        post([this, frame = std::move(frame)] { node_->on_frame(self_, frame); });
        return;
    }
    auto& p = peer(to);
    {
        std::lock_guard lk(p.mu);
        p.outbox.push_back(encode_frame(frame));
    }
    p.cv.notify_one();
}

void SocketRuntime::write_loop(Peer* p) {
    int backoff_ms = 5;
    for (;;) {
        Bytes next;
        {
            std::unique_lock lk(p->mu);
            p->cv.wait(lk, [&] { return p->closing || !p->outbox.empty(); });
            if (p->closing) break;
            next = p->outbox.front();
        }
        if (p->fd < 0) {
            int fd = connect_to(p->addr);
            if (fd < 0) {
                std::unique_lock lk(p->mu);
                p->cv.wait_for(lk, std::chrono::milliseconds(backoff_ms), [&] { return p->closing; });
                backoff_ms = std::min(backoff_ms * 2, 500);
                continue;
            }
            auto hello = encode_frame(hello_frame(self_));
            if (!write_all(fd, hello.data(), hello.size())) {
                ::close(fd);
                continue;
            }
            std::lock_guard lk(p->mu);
            p->fd = fd;
            backoff_ms = 5;
        }
        if (!write_all(p->fd, next.data(), next.size())) {
            std::lock_guard lk(p->mu);
            ::close(p->fd);
            p->fd = -1;
            continue;  // reconnect and resend
        }
        std::lock_guard lk(p->mu);
        p->outbox.pop_front();
    }
    if (p->fd >= 0) ::close(p->fd);
}

// ---------------------------------------------------------------------------

LoopbackCluster::~LoopbackCluster() { stop(); }

SocketRuntime& LoopbackCluster::add(NodeId id, std::size_t workers) {
    auto rt = std::make_unique<SocketRuntime>(id, "127.0.0.1:0", workers);
    auto& ref = *rt;
    runtimes_[id] = std::move(rt);
    return ref;
}

std::map<NodeId, std::string> LoopbackCluster::addresses() const {
    std::map<NodeId, std::string> out;
    for (const auto& [id, rt] : runtimes_) out[id] = "127.0.0.1:" + std::to_string(rt->port());
    return out;
}

void LoopbackCluster::start(const std::map<NodeId, std::shared_ptr<Node>>& nodes) {
    auto addrs = addresses();
    for (auto& [id, rt] : runtimes_) rt->set_peers(addrs);
    for (auto& [id, rt] : runtimes_) {
        auto it = nodes.find(id);
        if (it == nodes.end()) throw std::invalid_argument("no node for runtime " + std::to_string(id.value));
        rt->start(it->second);
    }
}

void LoopbackCluster::stop() {
    for (auto& [id, rt] : runtimes_) rt->stop();
}

void LoopbackCluster::inject_latency(const std::set<NodeId>&, Micros) {
    throw UnsupportedInSocketMode("latency injection is only available in the simulator");
}

}  // namespace parblock
