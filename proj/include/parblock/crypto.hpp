#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "parblock/types.hpp"

namespace parblock {

Digest sha256(std::string_view data);

TxnId make_txn_id(ClientId client, std::uint64_t client_ts);

Digest hash_block(const Block& b);

// Signing identities: nodes and clients live in separate id spaces.
struct Principal {
    enum class Kind : std::uint8_t { node = 0, client = 1 } kind = Kind::node;
    std::uint32_t id = 0;

    static Principal of(NodeId n) { return {Kind::node, n.value}; }
    static Principal of(ClientId c) { return {Kind::client, c.value}; }
    auto operator<=>(const Principal&) const = default;
};

enum class SignatureScheme {
    ed25519,
    hmac,  // keyed SHA-256 MAC, key known to the verifying keyring
    noop,  // accepts everything; benchmark ablation only
};

std::string_view to_string(SignatureScheme s);
SignatureScheme parse_signature_scheme(std::string_view s);

// Holds key material for a set of principals. Keys are derived
// deterministically from a seed so every process of a deployment (and every
// replay of a benchmark) reconstructs the same keyring.
class KeyRing {
  public:
    KeyRing(SignatureScheme scheme, std::uint64_t seed);
    ~KeyRing();
    KeyRing(KeyRing&&) noexcept;
    KeyRing& operator=(KeyRing&&) noexcept;

    SignatureScheme scheme() const { return scheme_; }

    void provision(Principal p);
    bool knows(Principal p) const;

    // Throws std::out_of_range for a principal without provisioned keys.
    Signature sign(Principal signer, std::string_view bytes) const;

    // Unknown principal or altered bytes verify false.
    bool verify(Principal signer, std::string_view bytes, const Signature& sig) const;

  private:
    struct Keys;
    SignatureScheme scheme_;
    std::uint64_t seed_;
    std::map<Principal, std::unique_ptr<Keys>> keys_;
};

}  // namespace parblock
