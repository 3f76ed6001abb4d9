#include "doctest.h"

#include <algorithm>

#include "../support/gen.hpp"
#include "../support/harness.hpp"
#include "../support/oracle.hpp"
#include "../support/probe.hpp"
#include "parblock/client_host.hpp"
#include "parblock/workload.hpp"

using namespace parblock;
using namespace testharness;
using namespace std::chrono_literals;

namespace {

Endorsement signed_endorsement(const KeyRing& keys, const Transaction& t, const StateStore& state,
                               const ContractRegistry& contracts, NodeId endorser) {
    auto e = endorse(t, state, contracts.find(t.op.app), endorser);
    e.sig = keys.sign(Principal::of(endorser), endorsement_signing_bytes(e));
    return e;
}

XovConfig xov_config(std::map<AppId, std::set<NodeId>> agents, std::vector<NodeId> orderers,
                     std::map<AppId, std::size_t> policy = {}) {
    XovConfig c;
    c.agents = std::move(agents);
    c.policy.required = std::move(policy);
    c.replica.orderers = std::move(orderers);
    c.replica.newblock_quorum = 2;
    return c;
}

// Endorses every transaction against `state` by each listed endorser.
Block endorsed_block(const KeyRing& keys, std::vector<Transaction> txns, const StateStore& state,
                     const ContractRegistry& contracts, const std::vector<NodeId>& endorsers) {
    Block b;
    b.txns = std::move(txns);
    b.apps = apps_of(b.txns);
    for (const auto& t : b.txns) {
        std::vector<Endorsement> es;
        for (auto e : endorsers) es.push_back(signed_endorsement(keys, t, state, contracts, e));
        b.endorsements.push_back(std::move(es));
    }
    return b;
}

std::vector<Transaction> random_txns(testgen::Gen& g, const KeyRing& keys, std::size_t n, std::size_t universe,
                                     std::uint32_t apps, std::uint64_t& ts) {
    std::vector<Transaction> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto o = g.op(universe, 3, apps);
        if (g.chance(0.03)) o.payload = "abort";
        out.push_back(make_transaction(keys, ClientId{static_cast<std::uint32_t>(i % 8)}, ts++, o));
    }
    return out;
}

}  // namespace

TEST_SUITE("sequential execution") {
    TEST_CASE("matches the reference executor on random blocks") {
        auto keys = keyring({});
        auto contracts = digest_contracts(3);
        for (std::uint64_t seed = 1; seed <= 200; ++seed) {
            testgen::Gen g(seed);
            std::uint64_t ts = 1;
            Block b;
            b.txns = random_txns(g, *keys, g.range(1, 30), g.range(2, 12), 3, ts);
            StateStore s;
            auto model = oracle::model_of(s);
            auto out = execute_sequential(b, s, *contracts);
            auto ref = oracle::sequential(b.txns, model, *contracts);
            CHECK(out.statuses == ref.statuses);
            CHECK(oracle::same(model, s));
        }
    }

    TEST_CASE("missing contract aborts") {
        auto keys = keyring({});
        ContractRegistry none;
        StateStore s;
        auto t = make_transaction(*keys, ClientId{0}, 1, op(4, {}, {"x"}));
        CHECK(execute_on(t, s, none).aborted);
    }
}

TEST_SUITE("xov validation") {
    TEST_CASE("identical-key writers commit exactly one per block") {
        auto orderers = node_ids(1, 3);
        auto keys = keyring({orderers, {NodeId{101}}});
        auto contracts = digest_contracts(1);
        auto cfg = xov_config({{AppId{0}, {NodeId{101}}}}, orderers);
        for (std::size_t n = 1; n <= 60; ++n) {
            StateStore s;
            s.seed("hot", "0");
            std::vector<Transaction> txns;
            for (std::size_t i = 0; i < n; ++i)
                txns.push_back(make_transaction(*keys, ClientId{static_cast<std::uint32_t>(i % 8)}, i + 1,
                                                op(0, {"hot"}, {"hot"}, "p" + std::to_string(i))));
            auto b = endorsed_block(*keys, txns, s, *contracts, {NodeId{101}});
            auto out = xov_validate(b, s, *keys, cfg);
            auto committed = std::count(out.statuses.begin(), out.statuses.end(), TxnStatus::committed);
            CHECK(committed == 1);
            CHECK(out.statuses.front() == TxnStatus::committed);
            CHECK(s.version("hot") == 1);
        }
    }

    TEST_CASE("no-contention block commits everything") {
        auto keys = keyring({{NodeId{101}}});
        auto contracts = digest_contracts(1);
        auto cfg = xov_config({{AppId{0}, {NodeId{101}}}}, node_ids(1, 3));
        StateStore s;
        std::vector<Transaction> txns;
        for (std::uint64_t i = 0; i < 40; ++i)
            txns.push_back(make_transaction(*keys, ClientId{1}, i + 1, op(0, {"r" + std::to_string(i)},
                                                                       {"w" + std::to_string(i)})));
        auto out = xov_validate(endorsed_block(*keys, txns, s, *contracts, {NodeId{101}}), s, *keys, cfg);
        CHECK(std::count(out.statuses.begin(), out.statuses.end(), TxnStatus::committed) == 40);
    }

    TEST_CASE("abort count equals the stale-read oracle") {
        std::vector<std::size_t> totals;
        for (double contention : {0.0, 0.2, 0.5, 0.8, 1.0}) {
            WorkloadSpec spec;
            spec.num_apps = 1;
            spec.num_clients = 200;
            spec.contention = contention;
            spec.window = 200;
            spec.txn_budget = 600;
            KeyRing keys(SignatureScheme::hmac, 3);
            provision_clients(keys, spec.num_clients);
            keys.provision(Principal::of(NodeId{101}));
            auto contracts = accounting_contracts(1);
            auto cfg = xov_config({{AppId{0}, {NodeId{101}}}}, node_ids(1, 3));
            auto txns = generate(spec, keys);
            StateStore s = workload_genesis(spec);
            for (std::size_t i = 0; i < txns.size(); i += 200) {
                std::vector<Transaction> chunk(txns.begin() + i, txns.begin() + i + 200);
                auto b = endorsed_block(keys, chunk, s, contracts, {NodeId{101}});
                std::vector<bool> spec_abort;
                for (const auto& es : b.endorsements) spec_abort.push_back(es.front().result.aborted);
                auto out = xov_validate(b, s, keys, cfg);
                auto aborted = static_cast<std::size_t>(std::count(out.statuses.begin(), out.statuses.end(),
                                                                   TxnStatus::aborted));
                CHECK(aborted == oracle::stale_read_aborts(chunk, spec_abort));
                if (contention == 0.0) CHECK(aborted == 0);
                if (i == 0) totals.push_back(0);
                totals.back() += aborted;
            }
        }
        CHECK(std::is_sorted(totals.begin(), totals.end()));
        CHECK(totals.back() > totals.front());
    }

    TEST_CASE("a read overwritten after endorsement never commits") {
        auto keys = keyring({{NodeId{101}}});
        auto contracts = digest_contracts(1);
        auto cfg = xov_config({{AppId{0}, {NodeId{101}}}}, node_ids(1, 3));
        for (std::uint64_t seed = 1; seed <= 200; ++seed) {
            testgen::Gen g(seed);
            std::uint64_t ts = 1;
            StateStore s;
            auto late = random_txns(g, *keys, 1, 6, 1, ts).front();
            late.op.payload = "p";
            late = make_transaction(*keys, late.client, late.client_ts, late.op);
            auto endorsed = signed_endorsement(*keys, late, s, *contracts, NodeId{101});
            auto first = endorsed_block(*keys, random_txns(g, *keys, g.range(1, 10), 6, 1, ts), s, *contracts,
                                        {NodeId{101}});
            auto out = xov_validate(first, s, *keys, cfg);
            bool overwritten = false;
            for (std::size_t i = 0; i < first.txns.size(); ++i)
                if (out.statuses[i] == TxnStatus::committed)
                    for (const auto& k : first.txns[i].op.write_set)
                        if (versioned_keys(late.op).contains(k)) overwritten = true;
            Block second;
            second.txns = {late};
            second.apps = apps_of(second.txns);
            second.endorsements = {{endorsed}};
            auto res = xov_validate(second, s, *keys, cfg);
            CHECK((res.statuses[0] == TxnStatus::committed) == !overwritten);
        }
    }

    TEST_CASE("endorsement policy and signatures are enforced") {
        auto keys = keyring({{NodeId{101}, NodeId{102}, NodeId{103}}});
        auto contracts = digest_contracts(1);
        auto cfg = xov_config({{AppId{0}, {NodeId{101}, NodeId{102}}}}, node_ids(1, 3), {{AppId{0}, 2}});
        StateStore s;
        auto t = make_transaction(*keys, ClientId{1}, 1, op(0, {"a"}, {"b"}));
        auto check = [&](std::vector<NodeId> endorsers, auto tweak) {
            StateStore copy = s;
            auto b = endorsed_block(*keys, {t}, copy, *contracts, endorsers);
            tweak(b.endorsements[0]);
            return xov_validate(b, copy, *keys, cfg).statuses[0];
        };
        auto none = [](std::vector<Endorsement>&) {};
        CHECK(check({NodeId{101}, NodeId{102}}, none) == TxnStatus::committed);
        CHECK(check({NodeId{101}}, none) == TxnStatus::aborted);
        CHECK(check({NodeId{101}, NodeId{103}}, none) == TxnStatus::aborted);
        CHECK(check({NodeId{101}, NodeId{101}}, none) == TxnStatus::aborted);
        CHECK(check({NodeId{101}, NodeId{102}}, [](std::vector<Endorsement>& es) { es[1].sig.bytes[0] ^= 1; }) ==
              TxnStatus::aborted);
        CHECK(check({NodeId{101}, NodeId{102}}, [&](std::vector<Endorsement>& es) {
                  es[1].result.writes["b"] = "other";
                  es[1].sig = keys->sign(Principal::of(NodeId{102}), endorsement_signing_bytes(es[1]));
              }) == TxnStatus::aborted);
        EndorsementPolicy too_strict;
        too_strict.required[AppId{0}] = 3;
        CHECK_THROWS_AS(too_strict.validate(cfg.agents), std::invalid_argument);
        CHECK_NOTHROW(cfg.policy.validate(cfg.agents));
    }

    TEST_CASE("collector waits for the policy and flags mismatches") {
        auto keys = keyring({{NodeId{101}, NodeId{102}}});
        auto contracts = digest_contracts(1);
        StateStore s;
        auto t = make_transaction(*keys, ClientId{1}, 1, op(0, {"a"}, {"b"}));
        auto e1 = signed_endorsement(*keys, t, s, *contracts, NodeId{101});
        auto e2 = signed_endorsement(*keys, t, s, *contracts, NodeId{102});
        EndorsementCollector ok(t, {NodeId{101}, NodeId{102}}, 2);
        CHECK(ok.add(e1) == EndorsementCollector::Status::pending);
        CHECK(ok.add(e1) == EndorsementCollector::Status::pending);
        CHECK(ok.add(e2) == EndorsementCollector::Status::ready);
        CHECK(ok.request().endorsements.size() == 2);

        StateStore moved;
        moved.seed("a", "x");
        moved.put("a", "y");
        auto stale = signed_endorsement(*keys, t, moved, *contracts, NodeId{102});
        EndorsementCollector bad(t, {NodeId{101}, NodeId{102}}, 2);
        bad.add(e1);
        CHECK(bad.add(stale) == EndorsementCollector::Status::mismatch);
    }
}

TEST_SUITE("xov clients") {
    struct XovRig {
        std::vector<NodeId> orderers = node_ids(1, 3);
        std::shared_ptr<KeyRing> keys = keyring({orderers, {NodeId{101}, NodeId{102}}});
        std::shared_ptr<ContractRegistry> contracts = digest_contracts(1);
        SimNetwork net{NetConfig{}};
        std::shared_ptr<Probe> orderer = std::make_shared<Probe>();
        std::vector<std::shared_ptr<XovPeerNode>> peers;
        std::shared_ptr<ClientHostNode> host;

        XovRig(bool second_alive, bool diverge) {
            std::map<AppId, std::set<NodeId>> agents{{AppId{0}, {NodeId{101}, NodeId{102}}}};
            XovConfig cfg = xov_config(agents, orderers, {{AppId{0}, 2}});
            net.add_node(NodeId{1}, orderer);
            peers.push_back(std::make_shared<XovPeerNode>(NodeId{101}, cfg, keys, contracts, StateStore{}));
            net.add_node(NodeId{101}, peers.back());
            if (second_alive) {
                peers.push_back(std::make_shared<XovPeerNode>(NodeId{102}, cfg, keys, contracts, StateStore{}));
                if (diverge) peers.back()->mutable_state().put("a", "elsewhere");
                net.add_node(NodeId{102}, peers.back());
            } else {
                net.add_node(NodeId{102}, std::make_shared<Probe>());
            }
            ClientHostNode::Options o;
            o.paradigm = Paradigm::xov;
            o.orderer = NodeId{1};
            o.agents = agents;
            o.policy.required = {{AppId{0}, 2}};
            o.endorse_timeout = 50ms;
            bool sent = false;
            auto k = keys;
            host = std::make_shared<ClientHostNode>(NodeId{1000}, o, std::vector<ClientId>{ClientId{1}},
                                                    [k, sent](ClientId c) mutable -> std::optional<Transaction> {
                                                        if (sent) return std::nullopt;
                                                        sent = true;
                                                        return make_transaction(*k, c, 1, op(0, {"a"}, {"b"}));
                                                    });
            net.add_node(NodeId{1000}, host);
            net.start();
            net.run();
        }
    };

    TEST_CASE("matching endorsements are submitted to ordering") {
        XovRig r(true, false);
        auto reqs = r.orderer->of_type(FrameType::request);
        REQUIRE(reqs.size() == 1);
        CHECK(decode_all<RequestMsg>(reqs[0].payload, decode_request).endorsements.size() == 2);
    }

    TEST_CASE("a missing endorser times the submission out") {
        XovRig r(false, false);
        CHECK(r.orderer->of_type(FrameType::request).empty());
        REQUIRE(r.host->records().size() == 1);
        CHECK(r.host->records()[0].outcome == TxnOutcome::endorsement_timeout);
    }

    TEST_CASE("endorsers at different versions make the client abort") {
        XovRig r(true, true);
        CHECK(r.orderer->of_type(FrameType::request).empty());
        REQUIRE(r.host->records().size() == 1);
        CHECK(r.host->records()[0].outcome == TxnOutcome::endorsement_mismatch);
    }
}

TEST_SUITE("cross-paradigm consistency") {
    TEST_CASE("ox, oxii and xov agree over 100 shared blocks") {
        auto orderers = node_ids(1, 3);
        std::vector<NodeId> oxii_ids{NodeId{101}, NodeId{102}, NodeId{201}};
        NodeId ox_id{301}, xov_id{401};
        auto keys = keyring({orderers, oxii_ids, {ox_id, xov_id}});
        auto contracts = digest_contracts(2);
        StateStore genesis;
        for (int k = 0; k < 6; ++k) genesis.seed("k" + std::to_string(k), "v");

        NetConfig net_config;
        net_config.latency = {50us, 800us};
        SimNetwork net(net_config);
        ExecutorConfig ec;
        ec.agents = {{AppId{0}, {NodeId{101}}}, {AppId{1}, {NodeId{102}}}};
        ec.orderers = orderers;
        ec.executors = oxii_ids;
        ec.newblock_quorum = 2;
        std::vector<std::shared_ptr<ExecutorNode>> oxii;
        for (auto id : oxii_ids) {
            oxii.push_back(std::make_shared<ExecutorNode>(id, ec, keys, contracts, genesis));
            net.add_node(id, oxii.back(), 4);
        }
        auto ox = std::make_shared<OxExecutorNode>(ox_id, ReplicaConfig{orderers, 2, {}}, keys, contracts, genesis);
        net.add_node(ox_id, ox);
        auto xcfg = xov_config({{AppId{0}, {xov_id}}, {AppId{1}, {xov_id}}}, orderers);
        auto xov = std::make_shared<XovPeerNode>(xov_id, xcfg, keys, contracts, genesis);
        net.add_node(xov_id, xov);
        net.start();

        BlockSource plain{keys, orderers};
        BlockSource endorsed{keys, orderers};
        auto model = oracle::model_of(genesis);
        auto xov_model = oracle::model_of(genesis);
        testgen::Gen g(2024);
        std::uint64_t ts = 1;
        std::vector<std::vector<TxnStatus>> expect;
        for (int k = 0; k < 100; ++k) {
            auto txns = random_txns(g, *keys, g.range(1, 25), g.range(3, 14), 2, ts);
            auto b = plain.make(txns);
            for (const auto& copy : plain.copies(b, 3)) {
                for (auto id : oxii_ids) net.inject(copy.orderer, id, make_newblock_frame(copy));
                net.inject(copy.orderer, ox_id, make_newblock_frame(copy));
            }
            expect.push_back(oracle::sequential(txns, model, *contracts).statuses);

            net.run();
            auto eb = endorsed_block(*keys, txns, xov->state(), *contracts, {xov_id});
            eb.seq = endorsed.next_seq++;
            eb.prev_hash = endorsed.prev;
            endorsed.prev = hash_block(eb);
            for (const auto& copy : endorsed.copies(eb, 3, false))
                net.inject(copy.orderer, xov_id, make_newblock_frame(copy));
            net.run();
            REQUIRE(xov->ledger().size() == static_cast<std::size_t>(k + 1));
            std::vector<Transaction> committed;
            const auto& st = xov->ledger().at(k).statuses;
            for (std::size_t i = 0; i < txns.size(); ++i)
                if (st[i] == TxnStatus::committed) committed.push_back(txns[i]);
            auto replay = oracle::sequential(committed, xov_model, *contracts);
            CHECK(std::all_of(replay.statuses.begin(), replay.statuses.end(),
                              [](TxnStatus s) { return s == TxnStatus::committed; }));
        }
        CHECK(oracle::same(model, ox->state()));
        for (const auto& n : oxii) {
            CHECK(n->state() == ox->state());
            REQUIRE(n->ledger().size() == 100);
            for (std::size_t k = 0; k < 100; ++k) CHECK(n->ledger().at(k).statuses == ox->ledger().at(k).statuses);
        }
        for (std::size_t k = 0; k < 100; ++k) CHECK(ox->ledger().at(k).statuses == expect[k]);
        CHECK(oracle::same(xov_model, xov->state()));
    }

    TEST_CASE("running example statuses agree between ox and oxii") {
        auto contracts = digest_contracts(2);
        OxiiCluster c({{AppId{0}, {NodeId{101}}}, {AppId{1}, {NodeId{102}}}}, {NodeId{101}, NodeId{102}}, NetConfig{},
                      {}, contracts, 4);
        auto ox = std::make_shared<OxExecutorNode>(NodeId{301}, ReplicaConfig{c.orderers, 2, {}}, c.keys, contracts,
                                                   StateStore{});
        c.keys->provision(Principal::of(NodeId{301}));
        c.net->add_node(NodeId{301}, ox);
        c.net->start();
        std::vector<Operation> ops{op(0, {}, {"b"}), op(1, {"e"}, {"d"}, "abort"), op(1, {"b"}, {}), op(0, {}, {"e"}),
                                   op(1, {}, {"d"})};
        std::vector<Transaction> txns;
        for (std::size_t i = 0; i < ops.size(); ++i) txns.push_back(c.txn(ClientId{0}, i + 1, ops[i]));
        auto b = c.deliver(txns);
        for (const auto& copy : c.source.copies(b, 3)) c.net->inject(copy.orderer, NodeId{301}, make_newblock_frame(copy));
        c.net->run();
        REQUIRE(ox->ledger().size() == 1);
        for (auto& [id, n] : c.nodes) {
            REQUIRE(n->ledger().size() == 1);
            CHECK(n->ledger().at(0).statuses == ox->ledger().at(0).statuses);
        }
        CHECK(ox->ledger().at(0).statuses[1] == TxnStatus::aborted);
    }
}

TEST_SUITE("order-execute") {
    TEST_CASE("execution time does not depend on the worker count") {
        auto orderers = node_ids(1, 3);
        std::vector<Micros> spans;
        for (std::size_t workers : {1u, 4u, 16u}) {
            auto keys = keyring({orderers, {NodeId{301}}});
            auto contracts = digest_contracts(1);
            ExecutorCosts costs;
            costs.exec_txn = 1ms;
            SimNetwork net(NetConfig{});
            auto ox = std::make_shared<OxExecutorNode>(NodeId{301}, ReplicaConfig{orderers, 2, {}}, keys, contracts,
                                                       StateStore{}, costs);
            net.add_node(NodeId{301}, ox, workers);
            net.start();
            BlockSource src{keys, orderers};
            std::vector<Transaction> txns;
            for (std::uint64_t i = 0; i < 50; ++i)
                txns.push_back(make_transaction(*keys, ClientId{1}, i + 1, op(0, {"r" + std::to_string(i)},
                                                                           {"w" + std::to_string(i)})));
            auto b = src.make(txns);
            for (const auto& copy : src.copies(b, 2)) net.inject(copy.orderer, NodeId{301}, make_newblock_frame(copy));
            net.run();
            const auto& m = ox->metrics().at(0);
            spans.push_back(m.last_exec_end - m.valid_at);
        }
        CHECK(spans[0] == 50ms);
        CHECK(spans[1] == spans[0]);
        CHECK(spans[2] == spans[0]);
    }
}
