#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "parblock/config.hpp"

using namespace parblock;
using namespace std::chrono_literals;

TEST_SUITE("config files") {
    TEST_CASE("empty text keeps the base configuration") {
        RunConfig base;
        base.block_size = 77;
        auto f = parse_config("", base);
        CHECK(f.run.block_size == 77);
        CHECK(f.addrs.empty());
        CHECK(f.acl.empty());
        CHECK_FALSE(f.has_workload);
    }

    TEST_CASE("run settings are read from their tables") {
        auto f = parse_config(R"(
paradigm = "xov"
consensus = "replicated_log"
multicast = "leader_only"
orderers = [1, 2, 3]

[block]
max_txns = 400
xov_max_txns = 100
max_interval_ms = 15

[quorum]
newblock = 1
tau = 2
endorsement = 2

[topology]
executors = 6
non_executors = 0

[net]
latency_min_ms = 0.5
latency_mean_ms = 2
loss_rate = 0.01
seed = 9
clock = "wall"

[[net.inject]]
group = "clients"
add_ms = 40

[run]
warmup_ms = 100
measure_ms = 300
ramp = [10, 20, 40]
workers = 16
scheme = "ed25519"
verify_graph = false
transitive_reduction = true

[costs]
exec_txn = 250
graph_pair_us = 1.5

[workload]
contention = 0.8
scope = "cross_app"

[acl]
"4" = [0, 2]

[nodes.1]
addr = "127.0.0.1:7001"
[nodes.101]
addr = "127.0.0.1:7101"
)");
        const auto& r = f.run;
        CHECK(r.paradigm == Paradigm::xov);
        CHECK(r.consensus == ConsensusKind::replicated_log);
        CHECK(r.multicast == MulticastMode::leader_only);
        CHECK(f.orderer_ids == std::vector<NodeId>{NodeId{1}, NodeId{2}, NodeId{3}});
        CHECK(r.block_size == 400);
        CHECK(r.xov_block_size == 100);
        CHECK(r.block_interval == 15ms);
        CHECK(r.topology.newblock_quorum == 1);
        CHECK(r.topology.tau == 2);
        CHECK(r.endorsement_policy == 2);
        CHECK(r.topology.executors == 6);
        CHECK(r.topology.non_executors == 0);
        CHECK(r.net.latency.min == 500us);
        CHECK(r.net.latency.mean == 2ms);
        CHECK(r.net.loss_rate == doctest::Approx(0.01));
        CHECK(r.net.seed == 9);
        CHECK(r.net.clock == ClockMode::wall_clock);
        REQUIRE(r.injections.size() == 1);
        CHECK(r.injections[0].group == NodeGroup::clients);
        CHECK(r.injections[0].model.mean == 2ms + 40ms);
        CHECK(r.warmup == 100ms);
        CHECK(r.measure == 300ms);
        CHECK(r.ramp == std::vector<std::size_t>{10, 20, 40});
        CHECK(r.workers == 16);
        CHECK(r.scheme == SignatureScheme::ed25519);
        CHECK_FALSE(r.verify_graph);
        CHECK(r.graph.transitive_reduction);
        CHECK(r.costs.exec_txn == 250us);
        CHECK(r.costs.graph_pair_us == doctest::Approx(1.5));
        CHECK(f.has_workload);
        CHECK(r.workload.contention == doctest::Approx(0.8));
        CHECK(r.workload.scope == ConflictScope::cross_app);
        CHECK(f.acl.at(ClientId{4}) == std::set<AppId>{AppId{0}, AppId{2}});
        CHECK(f.addrs.at(NodeId{101}) == "127.0.0.1:7101");
        CHECK(f.addrs.size() == 2);
    }

    TEST_CASE("bad values name the offending key") {
        auto message = [](std::string_view text) {
            try {
                parse_config(text);
            } catch (const ConfigError& e) {
                return std::string(e.what());
            }
            return std::string();
        };
        CHECK(message("[block]\nmax_txns = \"many\"").find("block.max_txns") != std::string::npos);
        CHECK(message("[block]\nmax_txns = -3").find("block.max_txns") != std::string::npos);
        CHECK_FALSE(message("block = 3").empty());
        CHECK_FALSE(message("paradigm = \"xo\"").empty());
        CHECK_FALSE(message("[net]\nclock = \"sundial\"").empty());
        CHECK_FALSE(message("[acl]\nalice = [0]").empty());
        CHECK_FALSE(message("[[net.inject]]\ngroup = \"routers\"").empty());
        CHECK_FALSE(message("this is = = not toml").empty());
    }

    TEST_CASE("workload spec files") {
        auto s = parse_workload_spec("num_apps = 2\ncontention = 0.2\ntxn_budget = 5000\nseed = 4\n");
        CHECK(s.num_apps == 2);
        CHECK(s.contention == doctest::Approx(0.2));
        CHECK(s.txn_budget == 5000);
        CHECK(s.seed == 4);
        auto t = parse_workload_spec("[workload]\nhot_keys = 3\nscope = \"intra_app\"\n");
        CHECK(t.hot_keys == 3);
        CHECK(t.scope == ConflictScope::intra_app);
        CHECK_THROWS_AS(parse_workload_spec("contention = 1.0\nhot_keys = 0\n"), InfeasibleWorkload);
        CHECK_THROWS_AS(parse_workload_spec("scope = \"sideways\"\n"), ConfigError);

        auto path = std::filesystem::temp_directory_path() / "parblock_spec.toml";
        std::ofstream(path) << "num_clients = 12\n";
        CHECK(load_workload_spec(path).num_clients == 12);
        std::filesystem::remove(path);
        CHECK_THROWS(load_workload_spec(path));
    }
}
