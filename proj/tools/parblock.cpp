#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "parblock/bench.hpp"
#include "parblock/config.hpp"
#include "parblock/socket_runtime.hpp"

using namespace parblock;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<Paradigm> parse_paradigms(const std::string& s) {
    std::vector<Paradigm> out;
    for (const auto& p : split_list(s)) out.push_back(parse_paradigm(p));
    return out;
}

void emit_csv(const std::vector<RunReport>& reports, const std::string& out) {
    if (out.empty() || out == "-") {
        write_csv(std::cout, reports);
        return;
    }
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    write_csv(f, reports);
}

int report_verify(const VerifyResult& r) {
    if (r.ok) {
        std::cout << "ok\n";
        return 0;
    }
    std::cout << "FAIL " << r.check;
    if (r.first_bad_block) std::cout << " at block " << *r.first_bad_block;
    std::cout << ": " << r.detail << "\n";
    return 1;
}

std::atomic<bool> interrupted{false};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"parblock: order-execute, execute-order-validate and dependency-graph execution on one harness"};
    app.require_subcommand(1);

    // gen-workload
    std::string spec_path, wl_out = "wl.bin";
    std::string scheme = "hmac";
    std::uint64_t key_seed = 7;
    auto* gen = app.add_subcommand("gen-workload", "Write a replayable signed workload file");
    gen->add_option("spec", spec_path, "Workload spec (TOML)")->required()->check(CLI::ExistingFile);
    gen->add_option("-o,--output", wl_out, "Output file");
    gen->add_option("--scheme", scheme, "Signature scheme: ed25519, hmac or noop");
    gen->add_option("--key-seed", key_seed, "Keyring seed");

    // run
    std::string paradigm = "oxii", workload_path, config_path, out_path, ledger_dir, svg_path;
    std::vector<std::size_t> clients;
    std::uint64_t seed = 0;
    auto* run_cmd = app.add_subcommand("run", "Ramp closed-loop clients until saturation and report the peak");
    run_cmd->add_option("--paradigm", paradigm, "ox, xov or oxii");
    run_cmd->add_option("--workload", workload_path, "Workload file from gen-workload")->check(CLI::ExistingFile);
    run_cmd->add_option("--config", config_path, "Run configuration (TOML)")->check(CLI::ExistingFile);
    run_cmd->add_option("-o,--output", out_path, "CSV report (default stdout)");
    run_cmd->add_option("--clients", clients, "Explicit client counts instead of the ramp")->delimiter(',');
    run_cmd->add_option("--ledgers", ledger_dir, "Persist the peak step's ledgers here");
    run_cmd->add_option("--seed", seed, "Overrides the network and workload seeds");

    // sweep
    std::string param, values, paradigms = "ox,xov,oxii";
    auto* sweep_cmd = app.add_subcommand("sweep", "Vary one parameter across paradigms");
    sweep_cmd->add_option("--param", param, "block_size, contention or latency_group")->required();
    sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
    sweep_cmd->add_option("--paradigms", paradigms, "Comma-separated paradigms");
    sweep_cmd->add_option("--config", config_path, "Run configuration (TOML)")->check(CLI::ExistingFile);
    sweep_cmd->add_option("-o,--output", out_path, "CSV report (default stdout)");
    sweep_cmd->add_option("--svg", svg_path, "Throughput-vs-parameter plot");
    sweep_cmd->add_option("--clients", clients, "Explicit client counts instead of the ramp")->delimiter(',');
    sweep_cmd->add_option("--ledgers", ledger_dir, "Persist ledgers under <dir>/<paradigm>-<value>");
    sweep_cmd->add_option("--seed", seed, "Overrides the network and workload seeds");

    // verify
    std::string dir, report_path;
    std::size_t sample = 20;
    auto* vl = app.add_subcommand("verify-ledger", "Check hash chains and cross-replica equality");
    vl->add_option("dir", dir, "Directory of *.ledger files")->required();
    auto* vr = app.add_subcommand("verify-run", "Audit a run: chains, equality, conservation, sampled re-execution");
    vr->add_option("report", report_path, "CSV report of the run")->required()->check(CLI::ExistingFile);
    vr->add_option("ledgers", dir, "Ledger directory of the run")->required();
    vr->add_option("--sample", sample, "Blocks re-executed against the sequential oracle");

    // graph dump
    std::size_t block_size = 200, block_index = 0;
    std::string dot_path;
    auto* graph_cmd = app.add_subcommand("graph", "Dump the dependency graph of one block of a workload");
    graph_cmd->add_option("workload", workload_path, "Workload file")->required()->check(CLI::ExistingFile);
    graph_cmd->add_option("--block-size", block_size, "Transactions per block");
    graph_cmd->add_option("--block", block_index, "Block index");
    graph_cmd->add_option("--dot", dot_path, "DOT output (default stdout)");

    // node
    std::uint32_t node_id = 0;
    auto* node_cmd = app.add_subcommand("node", "Run one node of a socket deployment");
    node_cmd->add_option("--config", config_path, "Cluster configuration with nodes.<id>.addr")
        ->required()
        ->check(CLI::ExistingFile);
    node_cmd->add_option("--id", node_id, "This node's id")->required();
    node_cmd->add_option("--paradigm", paradigm, "ox, xov or oxii");
    node_cmd->add_option("--workload", workload_path, "Workload replayed by the client node")
        ->check(CLI::ExistingFile);
    node_cmd->add_option("--ledgers", ledger_dir, "Persist this replica's ledger here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto spec = load_workload_spec(spec_path);
            KeyRing keys(parse_signature_scheme(scheme), key_seed);
            provision_clients(keys, spec.num_clients);
            write_workload(wl_out, spec, generate(spec, keys));
            std::cerr << "wrote " << spec.txn_budget << " transactions to " << wl_out << "\n";
            return 0;
        }

        auto load_run_config = [&]() {
            RunConfig cfg;
            if (!config_path.empty()) cfg = load_config(config_path).run;
            cfg.paradigm = parse_paradigm(paradigm);
            if (!workload_path.empty()) cfg.workload_file = workload_path;
            if (!clients.empty()) cfg.ramp = clients;
            if (seed) {
                cfg.net.seed = seed;
                cfg.workload.seed = seed;
            }
            return cfg;
        };

        if (*run_cmd) {
            auto cfg = load_run_config();
            if (!ledger_dir.empty()) cfg.ledger_dir = ledger_dir;
            auto rep = run(cfg);
            for (const auto& s : rep.steps)
                std::cerr << "clients=" << s.clients << " tps=" << s.throughput_tps << " p50=" << s.p50_ms << "ms"
                          << (s.valid ? "" : " INVALID: " + s.diagnostics) << "\n";
            emit_csv({rep}, out_path);
            return rep.valid() ? 0 : 2;
        }
        if (*sweep_cmd) {
            auto cfg = load_run_config();
            if (!ledger_dir.empty()) cfg.ledger_dir = ledger_dir;
            auto p = parse_sweep_param(param);
            auto reports = sweep(cfg, p, split_list(values), parse_paradigms(paradigms));
            emit_csv(reports, out_path);
            if (!svg_path.empty()) write_svg(svg_path, reports, std::string(to_string(p)));
            bool ok = true;
            for (const auto& r : reports)
                if (!r.valid()) {
                    ok = false;
                    std::cerr << to_string(r.paradigm) << " " << r.param << ": " << r.peak().diagnostics << "\n";
                }
            return ok ? 0 : 2;
        }
        if (*vl) return report_verify(verify_ledger_dir(dir));
        if (*vr) return report_verify(verify_run(paradigm_of_report(report_path), dir, sample));
        if (*graph_cmd) {
            auto file = read_workload(workload_path);
            auto begin = block_index * block_size;
            if (begin >= file.txns.size()) throw std::out_of_range("block index beyond the workload");
            Block b;
            b.seq = block_index;
            auto end = std::min(file.txns.size(), begin + block_size);
            b.txns.assign(file.txns.begin() + static_cast<std::ptrdiff_t>(begin),
                          file.txns.begin() + static_cast<std::ptrdiff_t>(end));
            b.apps = apps_of(b.txns);
            auto g = build_graph(b);
            std::vector<AppId> app_of;
            for (const auto& t : b.txns) app_of.push_back(t.op.app);
            auto dot = g.to_dot(&app_of);
            if (dot_path.empty()) std::cout << dot;
            else std::ofstream(dot_path) << dot;
            return 0;
        }
        if (*node_cmd) {
            auto fc = load_config(config_path);
            auto cfg = fc.run;
            cfg.paradigm = parse_paradigm(paradigm);
            WorkloadSpec spec = cfg.workload;
            std::optional<WorkloadFile> file;
            if (!workload_path.empty()) {
                file = read_workload(workload_path);
                spec = file->spec;
            }
            auto topology = assign_topology(spec, cfg.topology);
            if (!fc.acl.empty()) topology.acl = fc.acl;
            NodeId self{node_id};
            auto keys = make_keyring(cfg.scheme, cfg.key_seed, topology, spec.num_clients);
            auto genesis = workload_genesis(spec);
            auto contracts = std::make_shared<const ContractRegistry>(accounting_contracts(spec.num_apps));
            auto it = fc.addrs.find(self);
            if (it == fc.addrs.end()) throw ConfigError("nodes." + std::to_string(node_id) + ".addr missing");

            std::shared_ptr<Node> node;
            std::shared_ptr<ClientHostNode> host;
            BuiltNode built;
            std::size_t workers = 1;
            if (self == topology.client_host) {
                if (!file) throw ConfigError("the client node needs --workload");
                auto queues = std::make_shared<std::map<ClientId, std::deque<Transaction>>>();
                for (auto& t : file->txns) (*queues)[t.client].push_back(std::move(t));
                std::vector<ClientId> ids;
                for (const auto& [c, q] : *queues) ids.push_back(c);
                host = std::make_shared<ClientHostNode>(self, client_options(cfg, topology), ids,
                                                        [queues](ClientId c) -> std::optional<Transaction> {
                                                            auto& q = (*queues)[c];
                                                            if (q.empty()) return std::nullopt;
                                                            auto t = std::move(q.front());
                                                            q.pop_front();
                                                            return t;
                                                        });
                node = host;
            } else {
                built = build_node(cfg, topology, self, keys, genesis, contracts);
                node = built.node;
                workers = built.workers;
            }
            SocketRuntime rt(self, it->second, workers);
            rt.set_peers(fc.addrs);
            std::signal(SIGINT, [](int) { interrupted = true; });
            std::signal(SIGTERM, [](int) { interrupted = true; });
            rt.start(node);
            std::cerr << "node " << node_id << " listening on port " << rt.port() << "\n";
            for (;;) {
                std::this_thread::sleep_for(std::chrono::milliseconds(100));
                if (interrupted) break;
                if (host) {
                    bool done = false;
                    rt.call([&] { done = host->outstanding() == 0; });
                    if (done) break;
                }
            }
            if (host) {
                std::map<TxnOutcome, std::size_t> counts;
                rt.call([&] {
                    for (const auto& r : host->records())
                        if (r.outcome) ++counts[*r.outcome];
                });
                for (const auto& [o, n] : counts) std::cout << to_string(o) << "," << n << "\n";
            }
            if (!ledger_dir.empty()) {
                const Ledger* ledger = nullptr;
                if (built.oxii) ledger = &built.oxii->ledger();
                if (built.ox) ledger = &built.ox->ledger();
                if (built.xov) ledger = &built.xov->ledger();
                if (ledger) {
                    StepArtifacts art;
                    rt.call([&] { art.ledgers[self] = ledger->entries(); });
                    art.genesis = genesis;
                    persist_artifacts(ledger_dir, art, false);
                }
            }
            rt.stop();
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
