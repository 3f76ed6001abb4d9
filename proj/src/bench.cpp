#include "parblock/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "parblock/codec.hpp"

namespace parblock {

std::string_view to_string(NodeGroup g) {
    switch (g) {
        case NodeGroup::clients: return "clients";
        case NodeGroup::orderers: return "orderers";
        case NodeGroup::executors: return "executors";
        case NodeGroup::non_executors: return "non_executors";
    }
    return "?";
}

NodeGroup parse_node_group(std::string_view s) {
    if (s == "clients") return NodeGroup::clients;
    if (s == "orderers") return NodeGroup::orderers;
    if (s == "executors") return NodeGroup::executors;
    if (s == "non_executors" || s == "non-executors" || s == "passive") return NodeGroup::non_executors;
    throw std::invalid_argument("unknown node group: " + std::string(s));
}

std::size_t RunConfig::effective_block_size() const {
    return paradigm == Paradigm::xov && xov_block_size ? xov_block_size : block_size;
}

bool RunReport::valid() const {
    return std::all_of(steps.begin(), steps.end(), [](const StepReport& s) { return s.valid; });
}

std::shared_ptr<KeyRing> make_keyring(SignatureScheme scheme, std::uint64_t seed, const Topology& topology,
                                      std::uint32_t num_clients) {
    auto keys = std::make_shared<KeyRing>(scheme, seed);
    for (auto n : topology.all_nodes()) keys->provision(Principal::of(n));
    provision_clients(*keys, num_clients);
    return keys;
}

// ---------------------------------------------------------------------------
// SimDeployment

BuiltNode build_node(const RunConfig& config, const Topology& topology, NodeId id, std::shared_ptr<KeyRing> keys,
                     const StateStore& genesis, std::shared_ptr<const ContractRegistry> contracts) {
    const auto& c = config.costs;
    auto replicas = topology.replicas();
    BuiltNode out;

    if (std::find(topology.orderers.begin(), topology.orderers.end(), id) != topology.orderers.end()) {
        OrdererConfig ocfg;
        ocfg.orderers = topology.orderers;
        ocfg.executors = replicas;
        ocfg.acl = topology.acl;
        ocfg.max_block_bytes = config.max_block_bytes;
        ocfg.max_block_txns = config.effective_block_size();
        ocfg.max_block_interval = config.block_interval;
        ocfg.newblock_quorum = topology.newblock_quorum;
        ocfg.consensus = config.consensus;
        ocfg.multicast = config.multicast;
        ocfg.build_graph = config.paradigm == Paradigm::oxii;
        ocfg.graph = config.graph;
        OrdererCosts ocosts{c.order_verify_request, c.order_per_entry, c.order_per_block, c.graph_pair_us,
                            c.order_sign};
        out.orderer = std::make_shared<OrdererNode>(id, ocfg, keys, ocosts);
        out.node = out.orderer;
        return out;
    }
    if (std::find(replicas.begin(), replicas.end(), id) == replicas.end())
        throw std::invalid_argument("node " + std::to_string(id.value) + " has no role in the topology");

    ExecutorCosts ecosts{c.verify_newblock, c.verify_commit, c.sign,         c.replica_per_block,
                         c.apply_txn,       c.exec_txn,      c.graph_pair_us};
    std::optional<NodeId> reply_to;
    if (id == topology.observer) reply_to = topology.client_host;
    switch (config.paradigm) {
        case Paradigm::oxii: {
            ExecutorConfig ecfg;
            ecfg.agents = topology.agents;
            ecfg.tau = topology.tau;
            ecfg.orderers = topology.orderers;
            ecfg.executors = replicas;
            ecfg.newblock_quorum = topology.newblock_quorum;
            ecfg.result_timeout = config.result_timeout;
            ecfg.verify_graph = config.verify_graph;
            ecfg.graph = config.graph;
            ecfg.reply_to = reply_to;
            out.oxii = std::make_shared<ExecutorNode>(id, ecfg, keys, contracts, genesis, ecosts);
            out.node = out.oxii;
            out.workers = config.workers;
            break;
        }
        case Paradigm::ox: {
            ReplicaConfig rcfg{topology.orderers, topology.newblock_quorum, reply_to};
            out.ox = std::make_shared<OxExecutorNode>(id, rcfg, keys, contracts, genesis, ecosts);
            out.node = out.ox;
            break;
        }
        case Paradigm::xov: {
            XovConfig xcfg;
            xcfg.agents = topology.agents;
            for (const auto& [app, set] : topology.agents)
                xcfg.policy.required[app] = std::min(config.endorsement_policy, set.size());
            xcfg.replica = ReplicaConfig{topology.orderers, topology.newblock_quorum, reply_to};
            XovCosts xcosts{c.verify_client,      c.exec_txn,     c.sign,           c.verify_newblock,
                            c.verify_endorsement, c.validate_txn, c.replica_per_block};
            out.xov = std::make_shared<XovPeerNode>(id, xcfg, keys, contracts, genesis, xcosts);
            out.node = out.xov;
            out.workers = config.xov_workers;
            break;
        }
    }
    return out;
}

ClientHostNode::Options client_options(const RunConfig& config, const Topology& topology) {
    ClientHostNode::Options opts;
    opts.paradigm = config.paradigm;
    opts.orderer = topology.orderers.front();
    opts.agents = topology.agents;
    for (const auto& [app, set] : topology.agents)
        opts.policy.required[app] = std::min(config.endorsement_policy, set.size());
    opts.endorse_timeout = config.endorse_timeout;
    return opts;
}

SimDeployment::SimDeployment(const RunConfig& config, const Topology& topology, StateStore genesis,
                             std::shared_ptr<const ContractRegistry> contracts, std::shared_ptr<KeyRing> keys)
    : config_(config), topology_(topology), keys_(std::move(keys)), net_(config.net) {
    topology_.validate();
    for (auto id : topology_.orderers) {
        auto b = build_node(config_, topology_, id, keys_, genesis, contracts);
        orderers_.push_back(b.orderer);
        net_.add_node(id, b.node, b.workers);
    }
    for (auto id : topology_.replicas()) {
        auto b = build_node(config_, topology_, id, keys_, genesis, contracts);
        if (b.oxii) oxii_[id] = b.oxii;
        if (b.ox) ox_[id] = b.ox;
        if (b.xov) xov_[id] = b.xov;
        net_.add_node(id, b.node, b.workers);
    }
}

ClientHostNode& SimDeployment::attach_clients(std::vector<ClientId> clients, ClientHostNode::Source source) {
    if (client_host_) throw std::logic_error("clients already attached");
    client_host_ = std::make_shared<ClientHostNode>(topology_.client_host, client_options(config_, topology_),
                                                    std::move(clients), std::move(source));
    net_.add_node(topology_.client_host, client_host_, 1);

    auto* host = client_host_.get();
    auto decided = [host](const DecidedEvent& e) { host->note_decided(e.txn.id, e.at); };
    auto obs = topology_.observer;
    if (auto* n = oxii(obs)) n->on_decided(decided);
    if (auto* n = ox(obs)) n->on_decided(decided);
    if (auto* n = xov(obs)) n->on_decided(decided);
    return *client_host_;
}

ExecutorNode* SimDeployment::oxii(NodeId id) {
    auto it = oxii_.find(id);
    return it == oxii_.end() ? nullptr : it->second.get();
}
OxExecutorNode* SimDeployment::ox(NodeId id) {
    auto it = ox_.find(id);
    return it == ox_.end() ? nullptr : it->second.get();
}
XovPeerNode* SimDeployment::xov(NodeId id) {
    auto it = xov_.find(id);
    return it == xov_.end() ? nullptr : it->second.get();
}

Ledger& SimDeployment::ledger(NodeId id) {
    if (auto* n = oxii(id)) return n->ledger();
    if (auto* n = ox(id)) return n->ledger();
    if (auto* n = xov(id)) return n->ledger();
    throw std::out_of_range("no replica " + std::to_string(id.value));
}

const Ledger& SimDeployment::ledger(NodeId id) const { return const_cast<SimDeployment*>(this)->ledger(id); }

const StateStore& SimDeployment::state(NodeId id) const {
    auto* self = const_cast<SimDeployment*>(this);
    if (auto* n = self->oxii(id)) return n->state();
    if (auto* n = self->ox(id)) return n->state();
    if (auto* n = self->xov(id)) return n->state();
    throw std::out_of_range("no replica " + std::to_string(id.value));
}

const std::vector<BlockMetrics>& SimDeployment::metrics(NodeId id) const {
    auto* self = const_cast<SimDeployment*>(this);
    if (auto* n = self->oxii(id)) return n->metrics();
    if (auto* n = self->ox(id)) return n->metrics();
    if (auto* n = self->xov(id)) return n->metrics();
    throw std::out_of_range("no replica " + std::to_string(id.value));
}

bool SimDeployment::any_halted(std::string* why) const {
    for (const auto& [id, n] : oxii_)
        if (n->halted()) {
            if (why) *why = "executor " + std::to_string(id.value) + " halted: " + n->halt_reason();
            return true;
        }
    for (const auto& [id, n] : ox_)
        if (n->halted()) {
            if (why) *why = "replica " + std::to_string(id.value) + " halted";
            return true;
        }
    for (const auto& [id, n] : xov_)
        if (n->halted()) {
            if (why) *why = "peer " + std::to_string(id.value) + " halted";
            return true;
        }
    return false;
}

bool SimDeployment::idle() const {
    for (const auto& [id, n] : oxii_)
        if (!n->idle()) return false;
    for (const auto& [id, n] : ox_)
        if (!n->idle()) return false;
    for (const auto& [id, n] : xov_)
        if (!n->idle()) return false;
    return true;
}

void SimDeployment::start() {
    std::map<NodeGroup, std::set<NodeId>> groups;
    groups[NodeGroup::clients] = {topology_.client_host};
    groups[NodeGroup::orderers] = {topology_.orderers.begin(), topology_.orderers.end()};
    groups[NodeGroup::executors] = {topology_.executors.begin(), topology_.executors.end()};
    groups[NodeGroup::non_executors] = {topology_.passive.begin(), topology_.passive.end()};
    for (const auto& inj : config_.injections) net_.inject_latency(groups[inj.group], inj.model);
    net_.start();
}

// ---------------------------------------------------------------------------
// Runs

namespace {

double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

double ms(Micros d) { return static_cast<double>(d.count()) / 1000.0; }

double conflict_fraction_of(const DependencyGraph& g) {
    if (g.size() == 0) return 0.0;
    std::vector<bool> touched(g.size(), false);
    for (auto [a, b] : g.edges()) touched[a] = touched[b] = true;
    return static_cast<double>(std::count(touched.begin(), touched.end(), true)) / static_cast<double>(g.size());
}

}  // namespace

StepReport run_step(const RunConfig& config, std::size_t clients, StepArtifacts* artifacts) {
    if (clients == 0) throw std::invalid_argument("a run needs at least one client");
    WorkloadSpec spec = config.workload;
    std::optional<WorkloadFile> file;
    if (config.workload_file) {
        file = read_workload(*config.workload_file);
        spec = file->spec;
        clients = std::min<std::size_t>(clients, spec.num_clients);
    } else {
        spec.num_clients = static_cast<std::uint32_t>(clients);
    }
    auto topology = assign_topology(spec, config.topology);
    auto keys = make_keyring(config.scheme, config.key_seed, topology, spec.num_clients);
    auto genesis = workload_genesis(spec);
    auto contracts = std::make_shared<const ContractRegistry>(accounting_contracts(spec.num_apps));
    SimDeployment dep(config, topology, genesis, contracts, keys);

    ClientHostNode::Source source;
    std::shared_ptr<WorkloadGenerator> gen;
    std::shared_ptr<std::map<ClientId, std::deque<Transaction>>> queues;
    if (file) {
        queues = std::make_shared<std::map<ClientId, std::deque<Transaction>>>();
        for (auto& t : file->txns) (*queues)[t.client].push_back(std::move(t));
        source = [queues](ClientId c) -> std::optional<Transaction> {
            auto& q = (*queues)[c];
            if (q.empty()) return std::nullopt;
            auto t = std::move(q.front());
            q.pop_front();
            return t;
        };
    } else {
        gen = std::make_shared<WorkloadGenerator>(spec, keys);
        source = [gen](ClientId c) -> std::optional<Transaction> { return gen->next(c); };
    }

    std::vector<ClientId> ids;
    for (std::size_t i = 0; i < clients; ++i) ids.push_back(ClientId{static_cast<std::uint32_t>(i)});
    auto& host = dep.attach_clients(ids, source);

    const Micros window_start = config.warmup;
    const Micros window_end = config.warmup + config.measure;
    auto in_window = [&](Micros t) { return t >= window_start && t < window_end; };

    double fill_sum = 0, conflict_sum = 0;
    std::size_t window_blocks = 0;
    const double block_size = static_cast<double>(config.effective_block_size());
    const bool graph_built = config.paradigm == Paradigm::oxii;
    const GraphOptions graph_opts = config.graph;
    dep.orderer(0).on_cut([&](const OrdererNode::CutEvent& e) {
        for (const auto& t : e.block.txns) host.note_ordered(t.id, e.at);
        if (!in_window(e.at)) return;
        ++window_blocks;
        fill_sum += static_cast<double>(e.block.txns.size()) / block_size;
        conflict_sum += conflict_fraction_of(graph_built ? e.graph : build_graph(e.block, graph_opts));
    });

    dep.start();
    auto& net = dep.net();
    net.run_until(window_end);
    host.stop_submitting();
    const Micros deadline = window_end + config.drain;
    while (net.now() < deadline) {
        if (host.outstanding() == 0 && dep.idle()) break;
        net.run_until(std::min(deadline, net.now() + Micros{10'000}));
    }

    StepReport rep;
    rep.clients = clients;
    std::string why;
    if (dep.any_halted(&why)) {
        rep.valid = false;
        rep.diagnostics = why;
    }

    std::vector<double> latencies;
    double formation = 0, post_order = 0;
    std::size_t ordered_n = 0;
    auto buckets = static_cast<std::size_t>(std::max<std::int64_t>(1, (config.measure.count() + 999'999) / 1'000'000));
    rep.per_second.assign(buckets, 0);
    std::uint64_t unresolved = 0;
    std::uint64_t decided_in_window = 0;
    for (const auto& r : host.records()) {
        if (r.outcome == TxnOutcome::committed && r.decided && in_window(*r.decided)) {
            ++decided_in_window;
            auto b = static_cast<std::size_t>((*r.decided - window_start).count() / 1'000'000);
            ++rep.per_second[std::min(b, buckets - 1)];
        }
        if (!in_window(r.submitted)) continue;
        ++rep.submitted;
        if (!r.outcome) {
            ++unresolved;
            ++rep.failed;
            continue;
        }
        switch (*r.outcome) {
            case TxnOutcome::committed:
                ++rep.committed;
                if (r.decided) latencies.push_back(ms(*r.decided - r.submitted));
                if (r.ordered && r.decided) {
                    formation += ms(*r.ordered - r.submitted);
                    post_order += ms(*r.decided - *r.ordered);
                    ++ordered_n;
                }
                break;
            case TxnOutcome::aborted:
            case TxnOutcome::endorsement_mismatch: ++rep.aborted; break;
            case TxnOutcome::rejected_bad_sig:
            case TxnOutcome::rejected_unauthorized:
            case TxnOutcome::rejected_duplicate:
                ++rep.rejected;
                ++rep.failed;
                break;
            case TxnOutcome::failed:
            case TxnOutcome::endorsement_timeout: ++rep.failed; break;
        }
    }
    if (unresolved) {
        rep.valid = false;
        if (!rep.diagnostics.empty()) rep.diagnostics += "; ";
        rep.diagnostics += std::to_string(unresolved) + " requests unresolved after drain";
    }
    rep.throughput_tps = static_cast<double>(decided_in_window) / (static_cast<double>(config.measure.count()) / 1e6);
    std::sort(latencies.begin(), latencies.end());
    rep.p50_ms = percentile(latencies, 0.50);
    rep.p95_ms = percentile(latencies, 0.95);
    rep.p99_ms = percentile(latencies, 0.99);
    if (!latencies.empty()) {
        double sum = 0;
        for (double l : latencies) sum += l;
        rep.mean_ms = sum / static_cast<double>(latencies.size());
    }
    if (ordered_n) {
        rep.formation_wait_ms = formation / static_cast<double>(ordered_n);
        rep.post_order_ms = post_order / static_cast<double>(ordered_n);
    }
    auto resolved = rep.committed + rep.aborted + rep.failed;
    rep.abort_rate = resolved ? static_cast<double>(rep.aborted) / static_cast<double>(resolved) : 0.0;
    if (window_blocks) {
        rep.block_fill_avg = fill_sum / static_cast<double>(window_blocks);
        rep.conflict_fraction = conflict_sum / static_cast<double>(window_blocks);
    }

    if (artifacts) {
        artifacts->genesis = genesis;
        artifacts->ledgers.clear();
        for (auto id : dep.replicas()) artifacts->ledgers[id] = dep.ledger(id).entries();
    }
    return rep;
}

RunReport run(const RunConfig& config) {
    RunReport report;
    report.paradigm = config.paradigm;
    report.param = config.param;
    report.clock = std::string(to_string(config.net.clock));

    std::vector<std::size_t> schedule = config.ramp;
    if (schedule.empty()) {
        for (double c = static_cast<double>(config.ramp_start); c <= static_cast<double>(config.ramp_max) + 0.5;
             c *= config.ramp_factor) {
            schedule.push_back(static_cast<std::size_t>(std::llround(c)));
            if (config.ramp_factor <= 1.0) break;
        }
    }
    if (schedule.empty()) throw std::invalid_argument("empty client ramp");

    const bool keep = config.ledger_dir.has_value();
    StepArtifacts chosen, cur;
    double best = 0;
    std::size_t stalled = 0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        auto step = run_step(config, schedule[i], keep ? &cur : nullptr);
        report.steps.push_back(step);
        if (i == 0 || step.throughput_tps >= best * (1.0 + config.saturation_gain)) {
            report.chosen = i;
            best = step.throughput_tps;
            stalled = 0;
            if (keep) std::swap(chosen, cur);
        } else if (++stalled >= std::max<std::size_t>(1, config.ramp_patience)) {
            break;
        }
    }
    if (keep) persist_artifacts(*config.ledger_dir, chosen);
    return report;
}

// ---------------------------------------------------------------------------
// Sweeps

std::string_view to_string(SweepParam p) {
    switch (p) {
        case SweepParam::block_size: return "block_size";
        case SweepParam::contention: return "contention";
        case SweepParam::latency_group: return "latency_group";
    }
    return "?";
}

SweepParam parse_sweep_param(std::string_view s) {
    if (s == "block_size") return SweepParam::block_size;
    if (s == "contention") return SweepParam::contention;
    if (s == "latency_group") return SweepParam::latency_group;
    throw std::invalid_argument("unknown sweep parameter: " + std::string(s));
}

void apply_param(RunConfig& config, SweepParam param, const std::string& value) {
    config.param = value;
    switch (param) {
        case SweepParam::block_size: {
            auto n = std::stoul(value);
            if (n == 0) throw std::invalid_argument("block size must be positive");
            config.block_size = n;
            config.xov_block_size = 0;
            config.workload.window = static_cast<std::uint32_t>(n);
            break;
        }
        case SweepParam::contention: config.workload.contention = std::stod(value); break;
        case SweepParam::latency_group: {
            // "none", "<group>" (+100ms) or "<group>:<added ms>".
            if (value == "none" || value == "baseline") break;
            auto colon = value.find(':');
            auto group = parse_node_group(value.substr(0, colon));
            double added = colon == std::string::npos ? 100.0 : std::stod(value.substr(colon + 1));
            Micros extra{static_cast<std::int64_t>(added * 1000.0)};
            config.injections.push_back(
                LatencyInjection{group, LatencyModel{config.net.latency.min + extra, config.net.latency.mean + extra}});
            break;
        }
    }
}

std::vector<RunReport> sweep(const RunConfig& base, SweepParam param, const std::vector<std::string>& values,
                             const std::vector<Paradigm>& paradigms) {
    std::vector<RunReport> out;
    for (const auto& v : values) {
        for (auto p : paradigms) {
            RunConfig cfg = base;
            cfg.paradigm = p;
            RunReport rep;
            rep.paradigm = p;
            rep.param = v;
            rep.clock = std::string(to_string(cfg.net.clock));
            try {
                apply_param(cfg, param, v);
                if (base.ledger_dir) cfg.ledger_dir = *base.ledger_dir / (std::string(to_string(p)) + "-" + v);
                rep = run(cfg);
            } catch (const std::exception& e) {
                StepReport failed;
                failed.valid = false;
                failed.diagnostics = e.what();
                rep.steps = {failed};
                rep.chosen = 0;
            }
            out.push_back(std::move(rep));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

void write_csv(std::ostream& out, const std::vector<RunReport>& reports) {
    out << "paradigm,param,throughput_tps,p50_ms,p95_ms,p99_ms,abort_rate,failed,block_fill_avg,"
           "formation_wait_ms,post_order_ms,conflict_fraction,clock,clients,submitted,committed,aborted,rejected,valid\n";
    auto old = out.flags();
    out << std::fixed;
    for (const auto& r : reports) {
        const auto& s = r.peak();
        out << to_string(r.paradigm) << ',' << r.param << ',' << std::setprecision(1) << s.throughput_tps << ','
            << std::setprecision(3) << s.p50_ms << ',' << s.p95_ms << ',' << s.p99_ms << ',' << std::setprecision(4)
            << s.abort_rate << ',' << s.failed << ',' << s.block_fill_avg << ',' << std::setprecision(3)
            << s.formation_wait_ms << ',' << s.post_order_ms << ',' << std::setprecision(4) << s.conflict_fraction
            << ',' << r.clock << ',' << s.clients << ',' << s.submitted << ',' << s.committed << ',' << s.aborted
            << ',' << s.rejected << ',' << (r.valid() ? 1 : 0) << '\n';
    }
    out.flags(old);
}

void write_svg(const std::filesystem::path& path, const std::vector<RunReport>& reports, const std::string& x_label) {
    std::map<Paradigm, std::vector<std::pair<std::string, double>>> series;
    std::vector<std::string> xs;
    for (const auto& r : reports) {
        series[r.paradigm].push_back({r.param, r.peak().throughput_tps});
        if (std::find(xs.begin(), xs.end(), r.param) == xs.end()) xs.push_back(r.param);
    }
    double ymax = 1;
    for (const auto& [p, pts] : series)
        for (const auto& [x, y] : pts) ymax = std::max(ymax, y);
    const double W = 640, H = 400, L = 70, R = 20, T = 20, B = 50;
    auto px = [&](std::size_t i) { return L + (xs.size() < 2 ? 0.5 : static_cast<double>(i) / (xs.size() - 1)) * (W - L - R); };
    auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };
    const std::map<Paradigm, std::string> colour{{Paradigm::ox, "#d62728"}, {Paradigm::xov, "#2ca02c"},
                                                 {Paradigm::oxii, "#1f77b4"}};

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
        out << "<text x=\"" << px(i) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">" << xs[i]
            << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        double y = ymax * k / 4;
        out << "<text x=\"" << L - 6 << "\" y=\"" << py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
            << static_cast<long>(y) << "</text>\n";
    }
    out << "<text x=\"" << (W + L) / 2 << "\" y=\"" << H - 10 << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label
        << "</text>\n";
    out << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
        << ")\" text-anchor=\"middle\">throughput (tx/s)</text>\n";
    int legend = 0;
    for (const auto& [p, pts] : series) {
        std::ostringstream d;
        for (const auto& [x, y] : pts) {
            auto i = static_cast<std::size_t>(std::find(xs.begin(), xs.end(), x) - xs.begin());
            d << (d.tellp() == 0 ? "M" : " L") << px(i) << ',' << py(y);
        }
        out << "<path d=\"" << d.str() << "\" fill=\"none\" stroke=\"" << colour.at(p) << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << W - R - 60 << "\" y=\"" << T + 14 * ++legend << "\" font-size=\"12\" fill=\""
            << colour.at(p) << "\">" << to_string(p) << "</text>\n";
    }
    out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Artifacts and verification

namespace {

constexpr std::string_view kStateMagic = "PBST";

void write_state_file(const std::filesystem::path& path, const StateStore& s) {
    Writer w;
    w.raw(kStateMagic).u32(1);
    encode(w, s);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.size()));
}

StateStore read_state_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    if (r.raw(kStateMagic.size()) != kStateMagic || r.u32() != 1) throw DecodeError("not a state file");
    auto s = decode_state(r);
    r.expect_end();
    return s;
}

std::vector<std::filesystem::path> ledger_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ledger") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

VerifyResult fail(std::string check, std::optional<std::uint64_t> block, std::string detail) {
    return VerifyResult{false, std::move(check), block, std::move(detail)};
}

struct LoadedLedgers {
    VerifyResult result;
    std::vector<LedgerEntry> reference;
};

LoadedLedgers load_and_compare(const std::filesystem::path& dir) {
    LoadedLedgers out;
    if (!std::filesystem::is_directory(dir)) {
        out.result = fail("input", std::nullopt, dir.string() + " is not a directory");
        return out;
    }
    auto files = ledger_files(dir);
    if (files.empty()) {
        out.result = fail("input", std::nullopt, "no ledger files in " + dir.string());
        return out;
    }
    std::vector<std::pair<std::filesystem::path, std::vector<LedgerEntry>>> all;
    std::optional<VerifyResult> chain_failure;
    for (const auto& f : files) {
        auto loaded = Ledger::load(f);
        if (!loaded.check.ok) {
            auto r = fail("chain", loaded.check.first_bad_block, f.filename().string() + ": " + loaded.check.reason);
            if (!chain_failure || *r.first_bad_block < *chain_failure->first_bad_block) chain_failure = r;
            continue;
        }
        all.emplace_back(f, std::move(loaded.entries));
    }
    if (chain_failure) {
        out.result = *chain_failure;
        return out;
    }
    std::size_t longest = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
        if (all[i].second.size() > all[longest].second.size()) longest = i;
    const auto& ref = all[longest].second;
    for (const auto& [path, entries] : all) {
        for (std::size_t b = 0; b < entries.size(); ++b)
            if (!(entries[b] == ref[b])) {
                out.result = fail("equality", b, path.filename().string() + " diverges from " +
                                                     all[longest].first.filename().string());
                return out;
            }
        if (entries.size() < ref.size()) {
            out.result = fail("chain", entries.size(), path.filename().string() + " ends after " +
                                                           std::to_string(entries.size()) + " blocks");
            return out;
        }
    }
    out.reference = ref;
    return out;
}

}  // namespace

void persist_artifacts(const std::filesystem::path& dir, const StepArtifacts& artifacts, bool replace) {
    std::filesystem::create_directories(dir);
    if (replace)
        for (const auto& old : ledger_files(dir)) std::filesystem::remove(old);
    for (const auto& [id, entries] : artifacts.ledgers) {
        Ledger ledger;
        for (const auto& e : entries) ledger.append(e);
        ledger.persist_to(dir / ("node-" + std::to_string(id.value) + ".ledger"));
    }
    write_state_file(dir / "genesis.state", artifacts.genesis);
}

VerifyResult verify_ledger_dir(const std::filesystem::path& dir) { return load_and_compare(dir).result; }

VerifyResult verify_run(Paradigm paradigm, const std::filesystem::path& ledger_dir, std::size_t sample,
                        std::uint64_t seed) {
    auto loaded = load_and_compare(ledger_dir);
    if (!loaded.result.ok) return loaded.result;
    const auto& entries = loaded.reference;

    StateStore state;
    try {
        state = read_state_file(ledger_dir / "genesis.state");
    } catch (const std::exception& e) {
        return fail("input", std::nullopt, e.what());
    }
    const auto initial_total = total_balance(state);

    ContractRegistry contracts;
    auto contract = std::make_shared<AccountingContract>();
    for (const auto& e : entries)
        for (auto app : e.block.apps) contracts.install(app, contract);

    std::set<std::size_t> sampled;
    {
        std::vector<std::size_t> idx(entries.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(sample, idx.size()));
        sampled.insert(idx.begin(), idx.end());
    }

    for (std::size_t b = 0; b < entries.size(); ++b) {
        const auto& e = entries[b];
        const bool check = sampled.contains(b);
        for (std::size_t i = 0; i < e.block.txns.size(); ++i) {
            auto status = e.statuses[i];
            if (check && status != TxnStatus::failed &&
                !(paradigm == Paradigm::xov && status == TxnStatus::aborted)) {
                auto oracle = execute_on(e.block.txns[i], state, contracts);
                bool same = status == TxnStatus::committed ? (!oracle.aborted && oracle.writes == e.results[i].writes)
                                                           : oracle.aborted;
                if (!same)
                    return fail("serializability", e.block.seq,
                                "transaction " + std::to_string(i) + " differs from sequential re-execution");
            }
            if (status == TxnStatus::committed) state.apply(e.results[i]);
        }
        if (total_balance(state) != initial_total)
            return fail("conservation", e.block.seq, "total balance changed");
    }
    return {};
}

Paradigm paradigm_of_report(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw std::runtime_error("cannot read report " + csv.string());
    std::string header, row;
    if (!std::getline(in, header) || !std::getline(in, row)) throw std::runtime_error("report has no data rows");
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    auto h = split(header), r = split(row);
    auto it = std::find(h.begin(), h.end(), "paradigm");
    if (it == h.end()) throw std::runtime_error("report lacks a paradigm column");
    auto i = static_cast<std::size_t>(it - h.begin());
    if (i >= r.size()) throw std::runtime_error("short report row");
    return parse_paradigm(r[i]);
}

}  // namespace parblock
