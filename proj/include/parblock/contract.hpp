#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "parblock/types.hpp"

namespace parblock {

// Values visible to one execution: a snapshot of the declared keys.
// Absent keys map to nullopt.
class ReadView {
  public:
    ReadView() = default;
    explicit ReadView(std::map<Key, std::optional<Value>> values) : values_(std::move(values)) {}

    // Throws std::out_of_range for a key outside the declared sets.
    const std::optional<Value>& get(const Key& k) const;
    bool declared(const Key& k) const { return values_.contains(k); }
    void set(const Key& k, std::optional<Value> v) { values_[k] = std::move(v); }
    const std::map<Key, std::optional<Value>>& values() const { return values_; }

  private:
    std::map<Key, std::optional<Value>> values_;
};

struct ContractCall {
    ClientId client;
    const Operation& op;
    const ReadView& view;
};

// Deterministic: equal payloads over equal views give byte-identical results.
// Implementations must be safe to call concurrently.
class SmartContract {
  public:
    virtual ~SmartContract() = default;
    virtual std::string name() const = 0;
    virtual ResultRecords execute(const ContractCall& call) const = 0;
};

// Runs a contract, turning exceptions and writes outside the declared write
// set into an abort.
ResultRecords run_contract(const SmartContract& contract, const ContractCall& call);

class ContractRegistry {
  public:
    void install(AppId app, std::shared_ptr<const SmartContract> contract);
    // nullptr if the application has no contract.
    const SmartContract* find(AppId app) const;
    std::vector<AppId> apps() const;

  private:
    std::map<AppId, std::shared_ptr<const SmartContract>> contracts_;
};

// ---------------------------------------------------------------------------
// Accounting

struct Account {
    ClientId owner;
    std::uint64_t balance = 0;
    bool operator==(const Account&) const = default;
};

Value encode_account(const Account& a);
// nullopt if the bytes are not an account record.
std::optional<Account> decode_account(std::string_view v);

struct Transfer {
    Key from;
    Key to;
    std::uint64_t amount = 0;
    bool operator==(const Transfer&) const = default;
};

Bytes encode_transfers(const std::vector<Transfer>& transfers);
std::vector<Transfer> decode_transfers(std::string_view payload);

// Declares ρ = sources and ω = sources ∪ destinations.
Operation make_transfer_op(AppId app, const std::vector<Transfer>& transfers);

// Moves balances between accounts. A transfer list is valid iff the caller
// owns every source and each source's balance covers its total outgoing
// amount; every touched account is rewritten.
class AccountingContract final : public SmartContract {
  public:
    std::string name() const override { return "accounting"; }
    ResultRecords execute(const ContractCall& call) const override;
};

// Test contract: writes each declared write key with a digest of the payload,
// the key, and every value in the read set. Payload "abort" aborts and
// "throw" raises.
class DigestContract final : public SmartContract {
  public:
    std::string name() const override { return "digest"; }
    ResultRecords execute(const ContractCall& call) const override;
};

}  // namespace parblock
