#include "parblock/workload.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "parblock/codec.hpp"
#include "parblock/messages.hpp"

namespace parblock {

std::string_view to_string(ConflictScope s) { return s == ConflictScope::intra_app ? "intra_app" : "cross_app"; }

ConflictScope parse_conflict_scope(std::string_view s) {
    if (s == "intra_app" || s == "intra") return ConflictScope::intra_app;
    if (s == "cross_app" || s == "cross") return ConflictScope::cross_app;
    throw std::invalid_argument("unknown conflict scope: " + std::string(s));
}

void WorkloadSpec::validate() const {
    if (num_apps == 0) throw InfeasibleWorkload("num_apps must be at least 1");
    if (agents_per_app == 0) throw InfeasibleWorkload("agents_per_app must be at least 1");
    if (num_clients == 0) throw InfeasibleWorkload("num_clients must be at least 1");
    if (transfers_per_txn == 0) throw InfeasibleWorkload("transfers_per_txn must be at least 1");
    if (accounts_per_client < 1 + 2 * transfers_per_txn)
        throw InfeasibleWorkload("accounts_per_client must be at least 1 + 2 * transfers_per_txn");
    if (!(contention >= 0.0 && contention <= 1.0)) throw InfeasibleWorkload("contention must lie in [0, 1]");
    if (contention > 0.0 && hot_keys == 0) throw InfeasibleWorkload("contention above 0 needs at least one hot key");
    if (scope == ConflictScope::cross_app && contention > 0.0 && num_apps < 2)
        throw InfeasibleWorkload("cross-application contention needs at least two applications");
    if (window == 0) throw InfeasibleWorkload("window must be at least 1");
    if (max_amount == 0) throw InfeasibleWorkload("max_amount must be at least 1");
    if (!(overdraft_rate >= 0.0 && overdraft_rate <= 1.0)) throw InfeasibleWorkload("overdraft_rate must lie in [0, 1]");
}

Key account_key(ClientId c, std::uint32_t index) {
    return "acct:" + std::to_string(c.value) + ":" + std::to_string(index);
}

Key hot_key(std::uint32_t index) { return "hot:" + std::to_string(index); }

StateStore workload_genesis(const WorkloadSpec& spec) {
    StateStore s;
    for (std::uint32_t c = 0; c < spec.num_clients; ++c)
        for (std::uint32_t a = 0; a < spec.accounts_per_client; ++a)
            s.seed(account_key(ClientId{c}, a), encode_account(Account{ClientId{c}, spec.initial_balance}));
    for (std::uint32_t h = 0; h < spec.hot_keys; ++h)
        s.seed(hot_key(h), encode_account(Account{ClientId{0}, spec.initial_balance}));
    return s;
}

std::uint64_t total_balance(const StateStore& state) {
    std::uint64_t total = 0;
    for (const auto& [k, e] : state.entries())
        if (auto a = decode_account(e.value)) total += a->balance;
    return total;
}

ContractRegistry accounting_contracts(std::uint32_t num_apps) {
    ContractRegistry reg;
    auto contract = std::make_shared<AccountingContract>();
    for (std::uint32_t a = 0; a < num_apps; ++a) reg.install(AppId{a}, contract);
    return reg;
}

WorkloadGenerator::WorkloadGenerator(WorkloadSpec spec, std::shared_ptr<const KeyRing> keys)
    : spec_(std::move(spec)), keys_(std::move(keys)), rng_(spec_.seed) {
    spec_.validate();
    hot_per_window_ = static_cast<std::uint32_t>(std::llround(spec_.contention * spec_.window));
}

bool WorkloadGenerator::hot_at(std::uint64_t position) const {
    std::uint64_t w = spec_.window, h = hot_per_window_, q = position % w;
    return (q + 1) * h / w > q * h / w;
}

Operation WorkloadGenerator::next_op(ClientId c) {
    auto pos = position_++;
    bool hot = hot_at(pos);
    std::vector<Transfer> transfers;
    auto amount = [&]() -> std::uint64_t {
        if (spec_.overdraft_rate > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < spec_.overdraft_rate)
            return spec_.initial_balance * 4 + 1;
        return 1 + rng_() % spec_.max_amount;
    };

    AppId app{c.value % spec_.num_apps};
    std::uint32_t cold_transfers = spec_.transfers_per_txn;
    if (hot) {
        auto h = static_cast<std::uint32_t>(hot_count_ % spec_.hot_keys);
        transfers.push_back(Transfer{account_key(c, 0), hot_key(h), amount()});
        app = spec_.scope == ConflictScope::intra_app ? AppId{h % spec_.num_apps}
                                                      : AppId{static_cast<std::uint32_t>(hot_count_ % spec_.num_apps)};
        ++hot_count_;
        --cold_transfers;
    }
    std::uint32_t pairs = (spec_.accounts_per_client - 1) / 2;
    auto& round = cold_round_[c];
    for (std::uint32_t i = 0; i < cold_transfers; ++i, ++round) {
        auto j = static_cast<std::uint32_t>(round % pairs);
        bool forward = (round / pairs) % 2 == 0;
        auto a = account_key(c, 1 + 2 * j), b = account_key(c, 2 + 2 * j);
        transfers.push_back(forward ? Transfer{a, b, amount()} : Transfer{b, a, amount()});
    }
    return make_transfer_op(app, transfers);
}

Transaction WorkloadGenerator::next(ClientId c) {
    auto op = next_op(c);
    auto ts = ++ts_[c];
    return make_transaction(*keys_, c, ts, std::move(op));
}

std::vector<Transaction> generate(const WorkloadSpec& spec, const KeyRing& keys) {
    spec.validate();
    // Non-owning alias: the generator only signs through it during this call.
    std::shared_ptr<const KeyRing> alias(std::shared_ptr<const KeyRing>{}, &keys);
    WorkloadGenerator gen(spec, alias);
    std::vector<Transaction> out;
    out.reserve(spec.txn_budget);
    for (std::uint64_t i = 0; i < spec.txn_budget; ++i)
        out.push_back(gen.next(ClientId{static_cast<std::uint32_t>(i % spec.num_clients)}));
    return out;
}

void provision_clients(KeyRing& keys, std::uint32_t num_clients) {
    for (std::uint32_t c = 0; c < num_clients; ++c) keys.provision(Principal::of(ClientId{c}));
}

namespace {

constexpr std::string_view kMagic = "PBWL";
constexpr std::uint32_t kFormatVersion = 1;

void encode_spec(Writer& w, const WorkloadSpec& s) {
    w.u32(s.num_apps).u32(s.agents_per_app).u32(s.num_clients).u32(s.accounts_per_client);
    w.u64(s.initial_balance).u64(std::bit_cast<std::uint64_t>(s.contention));
    w.u8(static_cast<std::uint8_t>(s.scope)).u32(s.hot_keys).u32(s.transfers_per_txn).u32(s.window);
    w.u64(s.txn_budget).u32(s.max_amount).u64(std::bit_cast<std::uint64_t>(s.overdraft_rate)).u64(s.seed);
}

WorkloadSpec decode_spec(Reader& r) {
    WorkloadSpec s;
    s.num_apps = r.u32();
    s.agents_per_app = r.u32();
    s.num_clients = r.u32();
    s.accounts_per_client = r.u32();
    s.initial_balance = r.u64();
    s.contention = std::bit_cast<double>(r.u64());
    auto scope = r.u8();
    if (scope > 1) throw DecodeError("unknown conflict scope");
    s.scope = static_cast<ConflictScope>(scope);
    s.hot_keys = r.u32();
    s.transfers_per_txn = r.u32();
    s.window = r.u32();
    s.txn_budget = r.u64();
    s.max_amount = r.u32();
    s.overdraft_rate = std::bit_cast<double>(r.u64());
    s.seed = r.u64();
    return s;
}

}  // namespace

void write_workload(const std::filesystem::path& path, const WorkloadSpec& spec, const std::vector<Transaction>& txns) {
    Writer w;
    w.raw(kMagic).u32(kFormatVersion);
    encode_spec(w, spec);
    w.u64(txns.size());
    for (const auto& t : txns) w.bytes(canonical_bytes(t));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write workload file " + path.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.size()));
}

WorkloadFile read_workload(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read workload file " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    if (r.raw(kMagic.size()) != kMagic) throw DecodeError("not a workload file");
    if (r.u32() != kFormatVersion) throw DecodeError("unsupported workload format");
    WorkloadFile file;
    file.spec = decode_spec(r);
    auto n = r.u64();
    if (n > r.remaining() / 4) throw DecodeError("workload count exceeds file size");
    file.txns.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) file.txns.push_back(decode_all<Transaction>(r.bytes(), decode_transaction));
    r.expect_end();
    return file;
}

// ---------------------------------------------------------------------------
// Topology

void Topology::validate() const {
    if (orderers.empty()) throw std::invalid_argument("topology has no orderers");
    if (executors.empty()) throw std::invalid_argument("topology has no executors");
    if (newblock_quorum == 0 || newblock_quorum > orderers.size())
        throw std::invalid_argument("newblock quorum must be within [1, |orderers|]");
    for (const auto& [app, set] : agents) {
        if (set.empty()) throw std::invalid_argument("application without agents");
        auto it = tau.find(app);
        auto t = it == tau.end() ? 1 : it->second;
        if (t == 0 || t > set.size()) throw std::invalid_argument("tau exceeds the number of agents");
    }
}

std::vector<NodeId> Topology::all_nodes() const {
    std::vector<NodeId> out = orderers;
    auto reps = replicas();
    out.insert(out.end(), reps.begin(), reps.end());
    out.push_back(client_host);
    return out;
}

std::vector<NodeId> Topology::replicas() const {
    std::vector<NodeId> out = executors;
    out.insert(out.end(), passive.begin(), passive.end());
    return out;
}

Topology assign_topology(const WorkloadSpec& spec, const TopologyOptions& options) {
    spec.validate();
    Topology t;
    std::uint32_t executors = options.executors ? options.executors : spec.num_apps * spec.agents_per_app;
    if (spec.agents_per_app > executors)
        throw std::invalid_argument("agents_per_app exceeds the number of executors");
    if (options.orderers == 0) throw std::invalid_argument("at least one orderer is required");
    for (std::uint32_t i = 0; i < options.orderers; ++i) t.orderers.push_back(NodeId{1 + i});
    for (std::uint32_t i = 0; i < executors; ++i) t.executors.push_back(NodeId{101 + i});
    for (std::uint32_t i = 0; i < options.non_executors; ++i) t.passive.push_back(NodeId{201 + i});
    for (std::uint32_t a = 0; a < spec.num_apps; ++a) {
        auto& set = t.agents[AppId{a}];
        for (std::uint32_t j = 0; j < spec.agents_per_app; ++j)
            set.insert(t.executors[(a * spec.agents_per_app + j) % executors]);
        t.tau[AppId{a}] = options.tau;
    }
    std::set<AppId> all_apps;
    for (std::uint32_t a = 0; a < spec.num_apps; ++a) all_apps.insert(AppId{a});
    for (std::uint32_t c = 0; c < spec.num_clients; ++c) t.acl[ClientId{c}] = all_apps;
    t.newblock_quorum = std::min<std::size_t>(options.newblock_quorum, t.orderers.size());
    t.observer = t.executors.front();
    t.validate();
    return t;
}

}  // namespace parblock
