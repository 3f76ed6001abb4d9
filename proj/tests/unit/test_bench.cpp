#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "parblock/bench.hpp"
#include "parblock/codec.hpp"

using namespace parblock;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

RunConfig small(Paradigm p, double contention = 0.2) {
    RunConfig c;
    c.paradigm = p;
    c.warmup = 200ms;
    c.measure = 500ms;
    c.drain = 5s;
    c.ramp = {30};
    c.block_size = 50;
    c.block_interval = 10ms;
    c.workload.contention = contention;
    c.workload.window = 50;
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("parblock_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path honest_ledgers(const TempDir& dir, Paradigm p, double contention = 0.2) {
    StepArtifacts art;
    run_step(small(p, contention), 30, &art);
    persist_artifacts(dir.path, art);
    return dir.path;
}

std::vector<fs::path> ledger_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".ledger") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& data) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << data;
}

// Start offset of every record in a ledger file (header: magic + u32 version;
// record: u32 length, payload, 32-byte digest).
std::vector<std::size_t> record_offsets(const std::string& data) {
    std::vector<std::size_t> out;
    std::size_t at = 8;
    while (at < data.size()) {
        out.push_back(at);
        Reader r(std::string_view(data).substr(at, 4));
        at += 4 + r.u32() + 32;
    }
    return out;
}

}  // namespace

TEST_SUITE("bench runs") {
    TEST_CASE("every submitted request is accounted for") {
        for (auto p : {Paradigm::oxii, Paradigm::ox, Paradigm::xov}) {
            auto c = small(p, 0.5);
            c.workload.overdraft_rate = 0.05;
            auto s = run_step(c, 30);
            CAPTURE(to_string(p));
            CHECK(s.valid);
            CHECK(s.submitted > 0);
            CHECK(s.committed + s.aborted + s.failed == s.submitted);
            CHECK(s.aborted > 0);
            CHECK(s.p50_ms <= s.p95_ms);
            CHECK(s.p95_ms <= s.p99_ms);
            CHECK(s.block_fill_avg > 0);
            CHECK(s.block_fill_avg <= 1.0);
        }
    }

    TEST_CASE("virtual-clock reports are identical across repeats") {
        for (auto p : {Paradigm::oxii, Paradigm::xov}) {
            auto c = small(p);
            c.ramp = {10, 20};
            std::ostringstream a, b;
            auto ra = run(c), rb = run(c);
            write_csv(a, {ra});
            write_csv(b, {rb});
            CHECK(a.str() == b.str());
            REQUIRE(ra.steps.size() == rb.steps.size());
            for (std::size_t i = 0; i < ra.steps.size(); ++i) {
                CHECK(ra.steps[i].per_second == rb.steps[i].per_second);
                CHECK(ra.steps[i].p99_ms == rb.steps[i].p99_ms);
            }
        }
    }

    TEST_CASE("the ramp stops once throughput stops growing") {
        auto c = small(Paradigm::ox);
        c.ramp.clear();
        c.ramp_start = 5;
        c.ramp_max = 640;
        auto r = run(c);
        CHECK(r.steps.size() >= 3);
        CHECK(r.chosen < r.steps.size());
        CHECK(r.peak().throughput_tps > 0);
        for (std::size_t i = 1; i < r.steps.size(); ++i) CHECK(r.steps[i].clients > r.steps[i - 1].clients);
    }

    TEST_CASE("csv carries the report columns") {
        auto r = run(small(Paradigm::oxii));
        r.param = "0.2";
        std::ostringstream out;
        write_csv(out, {r});
        std::istringstream in(out.str());
        std::string header, row;
        std::getline(in, header);
        std::getline(in, row);
        CHECK(header.rfind("paradigm,param,throughput_tps,p50_ms,p95_ms,p99_ms,abort_rate,failed,block_fill_avg", 0) ==
              0);
        CHECK(row.rfind("oxii,0.2,", 0) == 0);
        CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));

        TempDir dir("csv");
        spit(dir.path / "r.csv", out.str());
        CHECK(paradigm_of_report(dir.path / "r.csv") == Paradigm::oxii);
    }

    TEST_CASE("swept values are applied to the configuration") {
        RunConfig c;
        apply_param(c, SweepParam::block_size, "400");
        CHECK(c.block_size == 400);
        CHECK(c.workload.window == 400);
        apply_param(c, SweepParam::contention, "0.8");
        CHECK(c.workload.contention == 0.8);
        apply_param(c, SweepParam::latency_group, "none");
        CHECK(c.injections.empty());
        apply_param(c, SweepParam::latency_group, "non_executors");
        REQUIRE(c.injections.size() == 1);
        CHECK(c.injections[0].group == NodeGroup::non_executors);
        CHECK(c.injections[0].model.min == c.net.latency.min + 100ms);
        apply_param(c, SweepParam::latency_group, "clients:30");
        CHECK(c.injections.back().model.mean == c.net.latency.mean + 30ms);
        CHECK_THROWS(apply_param(c, SweepParam::block_size, "0"));
        CHECK_THROWS(apply_param(c, SweepParam::latency_group, "routers"));
        CHECK(parse_sweep_param("contention") == SweepParam::contention);
        CHECK_THROWS(parse_sweep_param("speed"));
    }

    TEST_CASE("a failing sweep cell is recorded and the sweep continues") {
        auto reports = sweep(small(Paradigm::ox), SweepParam::block_size, {"0", "50"}, {Paradigm::ox});
        REQUIRE(reports.size() == 2);
        CHECK_FALSE(reports[0].valid());
        CHECK_FALSE(reports[0].peak().diagnostics.empty());
        CHECK(reports[1].valid());
        CHECK(reports[1].peak().throughput_tps > 0);
    }
}

TEST_SUITE("run verification") {
    TEST_CASE("honest runs pass the audit") {
        for (auto p : {Paradigm::oxii, Paradigm::ox, Paradigm::xov}) {
            TempDir dir("honest_" + std::string(to_string(p)));
            honest_ledgers(dir, p);
            CHECK(ledger_files(dir.path).size() >= 2);
            auto v = verify_run(p, dir.path, 20);
            CAPTURE(v.detail);
            CHECK(v.ok);
            CHECK(verify_ledger_dir(dir.path).ok);
        }
    }

    TEST_CASE("a truncated ledger fails the chain check") {
        TempDir dir("truncated");
        honest_ledgers(dir, Paradigm::oxii);
        auto f = ledger_files(dir.path).front();
        auto data = slurp(f);
        auto offsets = record_offsets(data);
        REQUIRE(offsets.size() >= 3);

        SUBCASE("mid-record") {
            spit(f, data.substr(0, data.size() - 7));
            auto v = verify_run(Paradigm::oxii, dir.path);
            CHECK_FALSE(v.ok);
            CHECK(v.check == "chain");
            CHECK(v.first_bad_block == offsets.size() - 1);
        }
        SUBCASE("at a record boundary") {
            spit(f, data.substr(0, offsets[2]));
            auto v = verify_run(Paradigm::oxii, dir.path);
            CHECK_FALSE(v.ok);
            CHECK(v.check == "chain");
            CHECK(v.first_bad_block == 2);
        }
    }

    TEST_CASE("a flipped byte fails at or after its block") {
        TempDir dir("flip");
        honest_ledgers(dir, Paradigm::oxii);
        auto files = ledger_files(dir.path);
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            auto f = files[rng() % files.size()];
            auto data = slurp(f);
            auto offsets = record_offsets(data);
            auto pos = 8 + rng() % (data.size() - 8);
            std::size_t block = std::upper_bound(offsets.begin(), offsets.end(), pos) - offsets.begin() - 1;
            auto flipped = data;
            flipped[pos] = static_cast<char>(flipped[pos] ^ (1 << (rng() % 8)));
            spit(f, flipped);
            auto v = verify_ledger_dir(dir.path);
            CHECK_FALSE(v.ok);
            REQUIRE(v.first_bad_block.has_value());
            CHECK(*v.first_bad_block >= block);
            spit(f, data);
        }
        CHECK(verify_ledger_dir(dir.path).ok);
    }

    TEST_CASE("diverging replicas fail the equality check") {
        TempDir dir("diverge");
        StepArtifacts art;
        run_step(small(Paradigm::ox), 30, &art);
        REQUIRE(art.ledgers.size() >= 2);
        auto& victim = art.ledgers.begin()->second;
        REQUIRE(victim.size() >= 2);
        victim[1].results[0] = ResultRecords::abort();
        victim[1].statuses[0] = TxnStatus::aborted;
        persist_artifacts(dir.path, art);
        auto v = verify_run(Paradigm::ox, dir.path);
        CHECK_FALSE(v.ok);
        CHECK(v.check == "equality");
        CHECK(v.first_bad_block == 1);
    }

    TEST_CASE("tampered results fail the replay") {
        TempDir dir("replay");
        StepArtifacts art;
        run_step(small(Paradigm::oxii, 0.0), 30, &art);
        for (auto& [id, entries] : art.ledgers) {
            auto& r = entries.at(0).results.at(0);
            REQUIRE_FALSE(r.aborted);
            auto& [k, v] = *r.writes.begin();
            auto acct = decode_account(v);
            REQUIRE(acct);
            acct->balance += 1;
            v = encode_account(*acct);
        }
        persist_artifacts(dir.path, art);
        CHECK(verify_ledger_dir(dir.path).ok);
        auto v = verify_run(Paradigm::oxii, dir.path, 1'000'000);
        CHECK_FALSE(v.ok);
        CHECK((v.check == "serializability" || v.check == "conservation"));
        CHECK(v.first_bad_block == 0);
    }

    TEST_CASE("missing input is reported") {
        CHECK(verify_ledger_dir("/nonexistent/parblock").check == "input");
        TempDir dir("empty");
        CHECK(verify_ledger_dir(dir.path).check == "input");
    }
}

TEST_SUITE("exactly once") {
    TEST_CASE("a replayed request is rejected and never ordered twice") {
        auto c = small(Paradigm::oxii);
        WorkloadSpec spec;
        spec.num_clients = 4;
        auto topo = assign_topology(spec, c.topology);
        auto keys = make_keyring(c.scheme, c.key_seed, topo, spec.num_clients);
        auto contracts = std::make_shared<const ContractRegistry>(accounting_contracts(spec.num_apps));
        SimDeployment dep(c, topo, workload_genesis(spec), contracts, keys);
        auto gen = std::make_shared<WorkloadGenerator>(spec, keys);
        auto issued = std::make_shared<std::vector<Transaction>>();
        dep.attach_clients({ClientId{0}, ClientId{1}, ClientId{2}, ClientId{3}},
                           [gen, issued](ClientId cl) -> std::optional<Transaction> {
                               if (issued->size() >= 40) return std::nullopt;
                               issued->push_back(gen->next(cl));
                               return issued->back();
                           });
        dep.start();
        dep.net().run_until(2s);
        auto admitted = dep.orderer(0).admitted();
        auto rejected = dep.orderer(0).rejected();
        for (const auto& t : *issued) dep.net().inject(topo.client_host, topo.orderers[0], make_request_frame({t, {}}));
        dep.net().run_until(4s);
        CHECK(dep.orderer(0).admitted() == admitted);
        CHECK(dep.orderer(0).rejected() == rejected + issued->size());
        for (auto id : dep.replicas()) {
            std::map<TxnId, int> seen;
            for (const auto& e : dep.ledger(id).entries())
                for (const auto& t : e.block.txns) ++seen[t.id];
            CHECK(seen.size() == issued->size());
            for (const auto& [tid, n] : seen) CHECK(n == 1);
        }
    }
}
