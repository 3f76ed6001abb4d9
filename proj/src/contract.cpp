#include "parblock/contract.hpp"

#include <stdexcept>

#include "parblock/codec.hpp"
#include "parblock/crypto.hpp"

namespace parblock {

const std::optional<Value>& ReadView::get(const Key& k) const {
    auto it = values_.find(k);
    if (it == values_.end()) throw std::out_of_range("read of undeclared key " + k);
    return it->second;
}

ResultRecords run_contract(const SmartContract& contract, const ContractCall& call) {
    ResultRecords r;
    try {
        r = contract.execute(call);
    } catch (const std::exception&) {
        return ResultRecords::abort();
    }
    if (r.aborted) return ResultRecords::abort();
    for (const auto& [k, v] : r.writes)
        if (!call.op.write_set.contains(k)) return ResultRecords::abort();
    return r;
}

void ContractRegistry::install(AppId app, std::shared_ptr<const SmartContract> contract) {
    contracts_[app] = std::move(contract);
}

const SmartContract* ContractRegistry::find(AppId app) const {
    auto it = contracts_.find(app);
    return it == contracts_.end() ? nullptr : it->second.get();
}

std::vector<AppId> ContractRegistry::apps() const {
    std::vector<AppId> out;
    for (const auto& [a, c] : contracts_) out.push_back(a);
    return out;
}

Value encode_account(const Account& a) {
    Writer w;
    w.id(a.owner).u64(a.balance);
    return std::move(w).take();
}

std::optional<Account> decode_account(std::string_view v) {
    if (v.size() != 12) return std::nullopt;
    Reader r(v);
    Account a;
    a.owner = r.id<ClientId>();
    a.balance = r.u64();
    return a;
}

Bytes encode_transfers(const std::vector<Transfer>& transfers) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(transfers.size()));
    for (const auto& t : transfers) w.bytes(t.from).bytes(t.to).u64(t.amount);
    return std::move(w).take();
}

std::vector<Transfer> decode_transfers(std::string_view payload) {
    return decode_all<std::vector<Transfer>>(payload, [](Reader& r) {
        std::vector<Transfer> out;
        auto n = r.count(16);
        for (std::uint32_t i = 0; i < n; ++i) {
            Transfer t;
            t.from = r.bytes();
            t.to = r.bytes();
            t.amount = r.u64();
            out.push_back(std::move(t));
        }
        return out;
    });
}

Operation make_transfer_op(AppId app, const std::vector<Transfer>& transfers) {
    Operation op;
    op.app = app;
    op.payload = encode_transfers(transfers);
    for (const auto& t : transfers) {
        op.read_set.insert(t.from);
        op.write_set.insert(t.from);
        op.write_set.insert(t.to);
    }
    return op;
}

ResultRecords AccountingContract::execute(const ContractCall& call) const {
    std::vector<Transfer> transfers;
    try {
        transfers = decode_transfers(call.op.payload);
    } catch (const DecodeError&) {
        return ResultRecords::abort();
    }
    if (transfers.empty()) return ResultRecords::abort();

    std::map<Key, Account> accounts;
    std::map<Key, std::uint64_t> outgoing;
    auto load = [&](const Key& k) -> bool {
        if (accounts.contains(k)) return true;
        if (!call.view.declared(k)) return false;
        const auto& raw = call.view.get(k);
        if (!raw) return false;
        auto acct = decode_account(*raw);
        if (!acct) return false;
        accounts.emplace(k, *acct);
        return true;
    };
    for (const auto& t : transfers) {
        if (!call.op.read_set.contains(t.from) || !call.op.write_set.contains(t.from) ||
            !call.op.write_set.contains(t.to))
            return ResultRecords::abort();
        if (!load(t.from) || !load(t.to)) return ResultRecords::abort();
        if (accounts.at(t.from).owner != call.client) return ResultRecords::abort();
        auto& out = outgoing[t.from];
        if (out > UINT64_MAX - t.amount) return ResultRecords::abort();
        out += t.amount;
    }
    for (const auto& [k, total] : outgoing)
        if (accounts.at(k).balance < total) return ResultRecords::abort();

    for (const auto& t : transfers) {
        auto& dst = accounts.at(t.to);
        accounts.at(t.from).balance -= t.amount;
        if (dst.balance > UINT64_MAX - t.amount) return ResultRecords::abort();
        dst.balance += t.amount;
    }
    ResultRecords r;
    for (const auto& [k, a] : accounts) r.writes.emplace(k, encode_account(a));
    return r;
}

ResultRecords DigestContract::execute(const ContractCall& call) const {
    if (call.op.payload == "abort") return ResultRecords::abort();
    if (call.op.payload == "throw") throw std::runtime_error("contract failure");
    Writer base;
    base.bytes(call.op.payload);
    for (const auto& k : call.op.read_set) {
        const auto& v = call.view.get(k);
        base.bytes(k).boolean(v.has_value()).bytes(v.value_or(""));
    }
    ResultRecords r;
    for (const auto& k : call.op.write_set) {
        Writer w;
        w.raw(base.data()).bytes(k);
        r.writes.emplace(k, sha256(w.data()).short_hex());
    }
    return r;
}

}  // namespace parblock
