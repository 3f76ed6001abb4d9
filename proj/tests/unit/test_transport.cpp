#include "doctest.h"

#include <thread>

#include "../support/harness.hpp"
#include "../support/probe.hpp"
#include "parblock/bench.hpp"
#include "parblock/socket_runtime.hpp"

using namespace parblock;
using namespace testharness;
using namespace std::chrono_literals;

namespace {

Frame numbered(std::uint32_t i) {
    Writer w;
    w.u32(i);
    return Frame{FrameType::control, std::move(w).take()};
}

std::uint32_t number_of(const Frame& f) {
    Reader r(f.payload);
    return r.u32();
}

// Two senders blasting numbered frames at two probes.
struct Blast {
    SimNetwork net;
    std::map<NodeId, std::shared_ptr<Probe>> nodes;

    explicit Blast(NetConfig config) : net(config) {
        for (std::uint32_t id : {1u, 2u, 3u, 4u}) {
            nodes[NodeId{id}] = std::make_shared<Probe>();
            net.add_node(NodeId{id}, nodes[NodeId{id}]);
        }
        net.start();
        net.run();
    }

    void run(std::uint32_t per_link = 200) {
        for (std::uint32_t from : {1u, 2u})
            net.post(NodeId{from}, Micros{0}, [this, from, per_link] {
                for (std::uint32_t i = 0; i < per_link; ++i)
                    for (std::uint32_t to : {3u, 4u}) {
                        nodes[NodeId{from}]->runtime->charge(Micros{7});
                        nodes[NodeId{from}]->runtime->send(NodeId{to}, numbered(i));
                    }
            });
        net.run();
    }
};

bool fifo(const Probe& p, NodeId from, std::uint32_t expect) {
    std::vector<std::uint32_t> seq;
    for (const auto& g : p.got)
        if (g.from == from) seq.push_back(number_of(g.frame));
    if (seq.size() != expect) return false;
    for (std::uint32_t i = 0; i < seq.size(); ++i)
        if (seq[i] != i) return false;
    return true;
}

}  // namespace

TEST_SUITE("sim network") {
    TEST_CASE("zero latency delivers in send order") {
        NetConfig c;
        c.latency = {Micros{0}, Micros{0}};
        Blast b(c);
        b.run();
        for (std::uint32_t to : {3u, 4u})
            for (std::uint32_t from : {1u, 2u}) CHECK(fifo(*b.nodes[NodeId{to}], NodeId{from}, 200));
    }

    TEST_CASE("random latency keeps per-link fifo") {
        NetConfig c;
        c.latency = {Micros{100}, Micros{5000}};
        Blast b(c);
        b.run();
        for (std::uint32_t to : {3u, 4u})
            for (std::uint32_t from : {1u, 2u}) CHECK(fifo(*b.nodes[NodeId{to}], NodeId{from}, 200));
        // different links interleave
        const auto& got = b.nodes[NodeId{3}]->got;
        bool mixed = false;
        for (std::size_t i = 1; i < got.size(); ++i) mixed = mixed || got[i].from != got[i - 1].from;
        CHECK(mixed);
    }

    TEST_CASE("delivered frames are bit-identical") {
        SimNetwork net({});
        auto a = std::make_shared<Probe>();
        auto b = std::make_shared<Probe>();
        net.add_node(NodeId{1}, a);
        net.add_node(NodeId{2}, b);
        net.start();
        net.run();
        Frame f{FrameType::commit, Bytes("\x00\xff payload \x01", 12)};
        net.post(NodeId{1}, net.now(), [&] { a->runtime->send(NodeId{2}, f); });
        net.run();
        REQUIRE(b->got.size() == 1);
        CHECK(b->got[0].frame == f);
        CHECK(net.frames_delivered(FrameType::commit) == 1);
    }

    TEST_CASE("equal seeds give equal traces") {
        NetConfig c;
        c.latency = {Micros{100}, Micros{3000}};
        c.seed = 11;
        Blast x(c), y(c);
        x.run();
        y.run();
        CHECK(x.net.trace_hash() == y.net.trace_hash());
        c.seed = 12;
        Blast z(c);
        z.run();
        CHECK(z.net.trace_hash() != x.net.trace_hash());
    }

    TEST_CASE("zero added latency leaves the trace unchanged") {
        NetConfig c;
        c.latency = {Micros{100}, Micros{3000}};
        Blast x(c), y(c);
        y.net.inject_latency({NodeId{3}}, c.latency);
        x.run();
        y.run();
        CHECK(x.net.trace_hash() == y.net.trace_hash());
        Blast z(c);
        z.net.inject_latency({NodeId{3}}, {c.latency.min + 100ms, c.latency.mean + 100ms});
        z.run();
        CHECK(z.net.trace_hash() != x.net.trace_hash());
        CHECK(z.nodes[NodeId{3}]->got.front().at >= 100ms);
        CHECK(z.nodes[NodeId{4}]->got.front().at < 100ms);
    }

    TEST_CASE("total loss silences one destination only") {
        NetConfig c;
        Blast b(c);
        b.net.set_link_loss(NodeId{1}, NodeId{3}, 1.0);
        b.net.set_link_loss(NodeId{2}, NodeId{3}, 1.0);
        b.run(50);
        CHECK(b.nodes[NodeId{3}]->got.empty());
        CHECK(b.nodes[NodeId{4}]->got.size() == 100);
        CHECK(b.net.frames_dropped() == 100);
    }

    TEST_CASE("partition windows drop traffic only while active") {
        NetConfig c;
        c.latency = {Micros{10}, Micros{10}};
        c.partitions.push_back({{NodeId{3}}, Micros{0}, Micros{1000}});
        Blast b(c);
        b.run(200);
        auto& got = b.nodes[NodeId{3}]->got;
        CHECK_FALSE(got.empty());
        CHECK(got.size() < 400);
        for (const auto& g : got) CHECK(g.at >= Micros{1000});
        CHECK(b.nodes[NodeId{4}]->got.size() == 400);
    }

    TEST_CASE("sending to an unknown node throws") {
        Blast b({});
        bool threw = false;
        b.net.post(NodeId{1}, b.net.now(), [&] {
            try {
                b.nodes[NodeId{1}]->runtime->send(NodeId{99}, numbered(0));
            } catch (const UnknownDestination&) {
                threw = true;
            }
        });
        b.net.run();
        CHECK(threw);
        CHECK_THROWS_AS(b.net.inject(NodeId{1}, NodeId{99}, numbered(0)), UnknownDestination);
    }

    TEST_CASE("crashed nodes neither send nor receive") {
        Blast b({});
        b.net.crash(NodeId{3});
        b.net.crash(NodeId{2});
        b.run(10);
        CHECK(b.nodes[NodeId{3}]->got.empty());
        CHECK(b.nodes[NodeId{4}]->got.size() == 10);
    }

    TEST_CASE("charged time delays a node's later events") {
        SimNetwork net({});
        auto a = std::make_shared<Probe>();
        net.add_node(NodeId{1}, a);
        net.start();
        net.run();
        Micros second{-1};
        net.post(NodeId{1}, Micros{0}, [&] { a->runtime->charge(Micros{500}); });
        net.post(NodeId{1}, Micros{10}, [&] { second = a->runtime->now(); });
        net.run();
        CHECK(second == Micros{500});
    }

    TEST_CASE("workers run k tasks at once") {
        SimNetwork net({});
        auto a = std::make_shared<Probe>();
        net.add_node(NodeId{1}, a, 3);
        net.start();
        net.run();
        std::vector<Micros> done;
        net.post(NodeId{1}, Micros{0}, [&] {
            for (int i = 0; i < 7; ++i)
                a->runtime->workers().submit(Micros{100}, [] {}, [&] { done.push_back(a->runtime->now()); });
        });
        net.run();
        REQUIRE(done.size() == 7);
        CHECK(std::count(done.begin(), done.end(), Micros{100}) == 3);
        CHECK(std::count(done.begin(), done.end(), Micros{200}) == 3);
        CHECK(std::count(done.begin(), done.end(), Micros{300}) == 1);
    }
}

TEST_SUITE("socket transport") {
    TEST_CASE("host:port parsing") {
        auto hp = HostPort::parse("127.0.0.1:7001");
        CHECK(hp.host == "127.0.0.1");
        CHECK(hp.port == 7001);
        CHECK(HostPort::parse(":9").host == "127.0.0.1");
        CHECK_THROWS_AS(HostPort::parse("nohost"), std::invalid_argument);
        CHECK_THROWS_AS(HostPort::parse("h:70000"), std::invalid_argument);
    }

    TEST_CASE("latency injection is unsupported") {
        LoopbackCluster cluster;
        CHECK_THROWS_AS(cluster.inject_latency({NodeId{1}}, 100ms), UnsupportedInSocketMode);
    }

    TEST_CASE("frames cross loopback in order") {
        LoopbackCluster cluster;
        auto a = std::make_shared<Probe>();
        auto b = std::make_shared<Probe>();
        cluster.add(NodeId{1});
        cluster.add(NodeId{2});
        cluster.start({{NodeId{1}, a}, {NodeId{2}, b}});
        cluster.runtime(NodeId{1}).call([&] {
            for (std::uint32_t i = 0; i < 500; ++i) a->runtime->send(NodeId{2}, numbered(i));
        });
        std::size_t n = 0;
        for (int i = 0; i < 500 && n < 500; ++i) {
            std::this_thread::sleep_for(10ms);
            cluster.runtime(NodeId{2}).call([&] { n = b->got.size(); });
        }
        cluster.stop();
        REQUIRE(n == 500);
        CHECK(fifo(*b, NodeId{1}, 500));
        CHECK_THROWS_AS(cluster.runtime(NodeId{1}).send(NodeId{77}, numbered(0)), UnknownDestination);
    }

    TEST_CASE("timers fire on the main context") {
        LoopbackCluster cluster;
        auto a = std::make_shared<Probe>();
        cluster.add(NodeId{1});
        cluster.start({{NodeId{1}, a}});
        std::atomic<bool> fired{false};
        std::atomic<bool> cancelled_fired{false};
        cluster.runtime(NodeId{1}).call([&] {
            a->runtime->set_timer(20ms, [&] { fired = true; });
            auto id = a->runtime->set_timer(30ms, [&] { cancelled_fired = true; });
            a->runtime->cancel_timer(id);
        });
        std::this_thread::sleep_for(150ms);
        cluster.stop();
        CHECK(fired);
        CHECK_FALSE(cancelled_fired);
    }

    TEST_CASE("a full deployment commits over loopback") {
        for (auto paradigm : {Paradigm::oxii, Paradigm::ox, Paradigm::xov}) {
            INFO("paradigm " << to_string(paradigm));
            RunConfig cfg;
            cfg.paradigm = paradigm;
            cfg.workload.num_clients = 6;
            cfg.workload.txn_budget = 60;
            cfg.workload.contention = 0.2;
            cfg.workload.window = 10;
            cfg.block_size = 10;
            cfg.workers = 2;
            auto topology = assign_topology(cfg.workload, cfg.topology);
            auto keys = make_keyring(cfg.scheme, cfg.key_seed, topology, cfg.workload.num_clients);
            auto genesis = workload_genesis(cfg.workload);
            auto contracts = std::make_shared<const ContractRegistry>(accounting_contracts(cfg.workload.num_apps));
            auto txns = generate(cfg.workload, *keys);
            auto queues = std::make_shared<std::map<ClientId, std::deque<Transaction>>>();
            for (auto& t : txns) (*queues)[t.client].push_back(t);
            std::vector<ClientId> ids;
            for (const auto& [c, q] : *queues) ids.push_back(c);

            LoopbackCluster cluster;
            std::map<NodeId, std::shared_ptr<Node>> nodes;
            std::map<NodeId, BuiltNode> built;
            for (auto id : topology.all_nodes()) {
                if (id == topology.client_host) continue;
                built[id] = build_node(cfg, topology, id, keys, genesis, contracts);
                nodes[id] = built[id].node;
                cluster.add(id, built[id].workers);
            }
            auto host = std::make_shared<ClientHostNode>(
                topology.client_host, client_options(cfg, topology), ids, [queues](ClientId c) -> std::optional<Transaction> {
                    auto& q = (*queues)[c];
                    if (q.empty()) return std::nullopt;
                    auto t = q.front();
                    q.pop_front();
                    return t;
                });
            nodes[topology.client_host] = host;
            cluster.add(topology.client_host);
            cluster.start(nodes);

            auto ledger_of = [&](NodeId id) -> const Ledger& {
                auto& b = built.at(id);
                if (b.oxii) return b.oxii->ledger();
                if (b.ox) return b.ox->ledger();
                return b.xov->ledger();
            };
            auto replicas = topology.replicas();
            bool settled = false;
            for (int i = 0; i < 600 && !settled; ++i) {
                std::this_thread::sleep_for(20ms);
                std::size_t outstanding = 1;
                cluster.runtime(topology.client_host).call([&] { outstanding = host->outstanding(); });
                if (outstanding != 0) continue;
                std::set<std::size_t> sizes;
                for (auto id : replicas) cluster.runtime(id).call([&] { sizes.insert(ledger_of(id).size()); });
                settled = sizes.size() == 1;
            }
            std::map<TxnOutcome, std::size_t> outcomes;
            cluster.runtime(topology.client_host).call([&] {
                for (const auto& r : host->records())
                    if (r.outcome) ++outcomes[*r.outcome];
            });
            std::vector<std::vector<LedgerEntry>> ledgers;
            for (auto id : replicas) cluster.runtime(id).call([&] { ledgers.push_back(ledger_of(id).entries()); });
            cluster.stop();

            REQUIRE(settled);
            std::size_t resolved = 0;
            for (const auto& [o, n] : outcomes) resolved += n;
            CHECK(resolved == txns.size());
            CHECK(outcomes[TxnOutcome::committed] > 0);
            for (const auto& l : ledgers) {
                CHECK(l == ledgers.front());
                CHECK(Ledger::verify_chain(l).ok);
            }
        }
    }
}
