#include "parblock/config.hpp"

#include <fstream>
#include <sstream>

#include "tomlplusplus/toml.hpp"

namespace parblock {

namespace {

template <typename T>
std::optional<T> get(const toml::table& t, std::string_view key, const std::string& where) {
    const auto* node = t.get(key);
    if (!node) return std::nullopt;
    if constexpr (std::is_same_v<T, bool>) {
        if (auto v = node->value<bool>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node->value<std::string>()) return *v;
    } else if constexpr (std::is_floating_point_v<T>) {
        if (auto v = node->value<double>()) return static_cast<T>(*v);
    } else {
        if (auto v = node->value<std::int64_t>()) {
            if (*v < 0) throw ConfigError(where + key.data() + " must not be negative");
            return static_cast<T>(*v);
        }
    }
    throw ConfigError("wrong type for " + where + std::string(key));
}

template <typename T>
void set(const toml::table& t, std::string_view key, T& out, const std::string& where) {
    if (auto v = get<T>(t, key, where)) out = *v;
}

void set_ms(const toml::table& t, std::string_view key, Micros& out, const std::string& where) {
    if (auto v = get<double>(t, key, where)) out = Micros{static_cast<std::int64_t>(*v * 1000.0)};
}

void set_us(const toml::table& t, std::string_view key, Micros& out, const std::string& where) {
    if (auto v = get<double>(t, key, where)) out = Micros{static_cast<std::int64_t>(*v)};
}

const toml::table* table(const toml::table& t, std::string_view key) {
    const auto* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError(std::string(key) + " must be a table");
    return n->as_table();
}

void read_workload(const toml::table& t, WorkloadSpec& s, const std::string& where) {
    set(t, "num_apps", s.num_apps, where);
    set(t, "agents_per_app", s.agents_per_app, where);
    set(t, "num_clients", s.num_clients, where);
    set(t, "accounts_per_client", s.accounts_per_client, where);
    set(t, "initial_balance", s.initial_balance, where);
    set(t, "contention", s.contention, where);
    if (auto v = get<std::string>(t, "scope", where)) s.scope = parse_conflict_scope(*v);
    set(t, "hot_keys", s.hot_keys, where);
    set(t, "transfers_per_txn", s.transfers_per_txn, where);
    set(t, "window", s.window, where);
    set(t, "txn_budget", s.txn_budget, where);
    set(t, "max_amount", s.max_amount, where);
    set(t, "overdraft_rate", s.overdraft_rate, where);
    set(t, "seed", s.seed, where);
}

toml::table parse_text(std::string_view text) {
    try {
        return toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(os.str());
    }
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::uint32_t parse_id(std::string_view s, const std::string& what) {
    try {
        std::size_t used = 0;
        auto v = std::stoul(std::string(s), &used);
        if (used != s.size()) throw std::invalid_argument(what);
        return static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("bad " + what + " id: " + std::string(s));
    }
}

}  // namespace

FileConfig parse_config(std::string_view toml_text, const RunConfig& base) {
    auto root = parse_text(toml_text);
    FileConfig out;
    out.run = base;
    auto& r = out.run;
    try {
        if (auto v = get<std::string>(root, "consensus", "")) r.consensus = parse_consensus_kind(*v);
        if (auto v = get<std::string>(root, "multicast", "")) {
            if (*v == "all_orderers") r.multicast = MulticastMode::all_orderers;
            else if (*v == "leader_only") r.multicast = MulticastMode::leader_only;
            else throw ConfigError("unknown multicast mode: " + *v);
        }
        if (auto v = get<std::string>(root, "paradigm", "")) r.paradigm = parse_paradigm(*v);
        if (const auto* arr = root.get_as<toml::array>("orderers")) {
            for (const auto& e : *arr) {
                auto id = e.value<std::int64_t>();
                if (!id || *id <= 0) throw ConfigError("orderers must be positive integers");
                out.orderer_ids.push_back(NodeId{static_cast<std::uint32_t>(*id)});
            }
            r.topology.orderers = static_cast<std::uint32_t>(out.orderer_ids.size());
        }
        if (const auto* t = table(root, "block")) {
            set(*t, "max_txns", r.block_size, "block.");
            set(*t, "xov_max_txns", r.xov_block_size, "block.");
            set(*t, "max_bytes", r.max_block_bytes, "block.");
            set_ms(*t, "max_interval_ms", r.block_interval, "block.");
        }
        if (const auto* t = table(root, "quorum")) {
            set(*t, "newblock", r.topology.newblock_quorum, "quorum.");
            set(*t, "tau", r.topology.tau, "quorum.");
            set(*t, "endorsement", r.endorsement_policy, "quorum.");
        }
        if (const auto* t = table(root, "topology")) {
            set(*t, "orderers", r.topology.orderers, "topology.");
            set(*t, "executors", r.topology.executors, "topology.");
            set(*t, "non_executors", r.topology.non_executors, "topology.");
        }
        if (const auto* t = table(root, "net")) {
            set_ms(*t, "latency_min_ms", r.net.latency.min, "net.");
            set_ms(*t, "latency_mean_ms", r.net.latency.mean, "net.");
            set(*t, "loss_rate", r.net.loss_rate, "net.");
            set(*t, "seed", r.net.seed, "net.");
            if (auto v = get<std::string>(*t, "clock", "net.")) {
                if (*v == "virtual") r.net.clock = ClockMode::virtual_clock;
                else if (*v == "wall") r.net.clock = ClockMode::wall_clock;
                else throw ConfigError("unknown clock: " + *v);
            }
            if (const auto* inj = t->get_as<toml::array>("inject")) {
                for (const auto& e : *inj) {
                    const auto* it = e.as_table();
                    if (!it) throw ConfigError("net.inject entries must be tables");
                    LatencyInjection li;
                    auto g = get<std::string>(*it, "group", "net.inject.");
                    if (!g) throw ConfigError("net.inject entry without group");
                    li.group = parse_node_group(*g);
                    double add = get<double>(*it, "add_ms", "net.inject.").value_or(100.0);
                    Micros extra{static_cast<std::int64_t>(add * 1000.0)};
                    li.model = LatencyModel{r.net.latency.min + extra, r.net.latency.mean + extra};
                    r.injections.push_back(li);
                }
            }
        }
        if (const auto* t = table(root, "run")) {
            set_ms(*t, "warmup_ms", r.warmup, "run.");
            set_ms(*t, "measure_ms", r.measure, "run.");
            set_ms(*t, "drain_ms", r.drain, "run.");
            if (const auto* arr = t->get_as<toml::array>("ramp")) {
                r.ramp.clear();
                for (const auto& e : *arr) {
                    auto v = e.value<std::int64_t>();
                    if (!v || *v <= 0) throw ConfigError("run.ramp must hold positive integers");
                    r.ramp.push_back(static_cast<std::size_t>(*v));
                }
            }
            set(*t, "ramp_start", r.ramp_start, "run.");
            set(*t, "ramp_max", r.ramp_max, "run.");
            set(*t, "ramp_factor", r.ramp_factor, "run.");
            set(*t, "saturation_gain", r.saturation_gain, "run.");
            set(*t, "ramp_patience", r.ramp_patience, "run.");
            set(*t, "workers", r.workers, "run.");
            set(*t, "xov_workers", r.xov_workers, "run.");
            if (auto v = get<std::string>(*t, "scheme", "run.")) r.scheme = parse_signature_scheme(*v);
            set(*t, "key_seed", r.key_seed, "run.");
            set_ms(*t, "result_timeout_ms", r.result_timeout, "run.");
            set_ms(*t, "endorse_timeout_ms", r.endorse_timeout, "run.");
            set(*t, "verify_graph", r.verify_graph, "run.");
            set(*t, "transitive_reduction", r.graph.transitive_reduction, "run.");
        }
        if (const auto* t = table(root, "costs")) {
            auto& c = r.costs;
            set_us(*t, "order_verify_request", c.order_verify_request, "costs.");
            set_us(*t, "order_per_entry", c.order_per_entry, "costs.");
            set_us(*t, "order_per_block", c.order_per_block, "costs.");
            set_us(*t, "order_sign", c.order_sign, "costs.");
            set(*t, "graph_pair_us", c.graph_pair_us, "costs.");
            set_us(*t, "verify_newblock", c.verify_newblock, "costs.");
            set_us(*t, "verify_commit", c.verify_commit, "costs.");
            set_us(*t, "sign", c.sign, "costs.");
            set_us(*t, "replica_per_block", c.replica_per_block, "costs.");
            set_us(*t, "apply_txn", c.apply_txn, "costs.");
            set_us(*t, "exec_txn", c.exec_txn, "costs.");
            set_us(*t, "verify_client", c.verify_client, "costs.");
            set_us(*t, "verify_endorsement", c.verify_endorsement, "costs.");
            set_us(*t, "validate_txn", c.validate_txn, "costs.");
        }
        if (const auto* t = table(root, "workload")) {
            read_workload(*t, r.workload, "workload.");
            out.has_workload = true;
        }
        if (const auto* t = table(root, "acl")) {
            for (const auto& [k, v] : *t) {
                ClientId c{parse_id(k.str(), "client")};
                const auto* arr = v.as_array();
                if (!arr) throw ConfigError("acl entries must be arrays of app ids");
                auto& apps = out.acl[c];
                for (const auto& e : *arr) {
                    auto a = e.value<std::int64_t>();
                    if (!a || *a < 0) throw ConfigError("acl app ids must be non-negative integers");
                    apps.insert(AppId{static_cast<std::uint32_t>(*a)});
                }
            }
        }
        if (const auto* t = table(root, "nodes")) {
            for (const auto& [k, v] : *t) {
                NodeId id{parse_id(k.str(), "node")};
                const auto* nt = v.as_table();
                auto addr = nt ? get<std::string>(*nt, "addr", "nodes." + std::string(k.str()) + ".") : std::nullopt;
                if (!addr) throw ConfigError("nodes." + std::string(k.str()) + ".addr is required");
                out.addrs[id] = *addr;
            }
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return out;
}

FileConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
    return parse_config(slurp(path), base);
}

WorkloadSpec parse_workload_spec(std::string_view toml_text) {
    auto root = parse_text(toml_text);
    WorkloadSpec s;
    try {
        if (const auto* t = table(root, "workload")) read_workload(*t, s, "workload.");
        else read_workload(root, s, "");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    s.validate();
    return s;
}

WorkloadSpec load_workload_spec(const std::filesystem::path& path) { return parse_workload_spec(slurp(path)); }

}  // namespace parblock
