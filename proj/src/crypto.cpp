#include "parblock/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <stdexcept>

#include "parblock/codec.hpp"

namespace parblock {

Digest sha256(std::string_view data) {
    Digest d;
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw std::runtime_error("sha256 failed");
    return d;
}

TxnId make_txn_id(ClientId client, std::uint64_t client_ts) {
    Writer w;
    w.raw("TXN").id(client).u64(client_ts);
    return sha256(w.data());
}

Digest hash_block(const Block& b) { return sha256(canonical_bytes(b)); }

std::string_view to_string(SignatureScheme s) {
    switch (s) {
        case SignatureScheme::ed25519: return "ed25519";
        case SignatureScheme::hmac: return "hmac";
        case SignatureScheme::noop: return "noop";
    }
    return "unknown";
}

SignatureScheme parse_signature_scheme(std::string_view s) {
    if (s == "ed25519") return SignatureScheme::ed25519;
    if (s == "hmac") return SignatureScheme::hmac;
    if (s == "noop") return SignatureScheme::noop;
    throw std::invalid_argument("unknown signature scheme: " + std::string(s));
}

struct KeyRing::Keys {
    std::array<std::uint8_t, 32> secret{};
    EVP_PKEY* priv = nullptr;
    EVP_PKEY* pub = nullptr;

    ~Keys() {
        EVP_PKEY_free(priv);
        EVP_PKEY_free(pub);
    }
};

KeyRing::KeyRing(SignatureScheme scheme, std::uint64_t seed) : scheme_(scheme), seed_(seed) {}
KeyRing::~KeyRing() = default;
KeyRing::KeyRing(KeyRing&&) noexcept = default;
KeyRing& KeyRing::operator=(KeyRing&&) noexcept = default;

void KeyRing::provision(Principal p) {
    if (keys_.contains(p)) return;
    Writer w;
    w.raw("KEY").u64(seed_).u8(static_cast<std::uint8_t>(p.kind)).u32(p.id);
    auto keys = std::make_unique<Keys>();
    keys->secret = sha256(w.data()).bytes;
    if (scheme_ == SignatureScheme::ed25519) {
        keys->priv = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, keys->secret.data(), 32);
        if (!keys->priv) throw std::runtime_error("ed25519 key generation failed");
        std::array<std::uint8_t, 32> pub{};
        std::size_t publen = pub.size();
        if (EVP_PKEY_get_raw_public_key(keys->priv, pub.data(), &publen) != 1)
            throw std::runtime_error("ed25519 public key extraction failed");
        keys->pub = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.data(), publen);
    }
    keys_.emplace(p, std::move(keys));
}

bool KeyRing::knows(Principal p) const { return keys_.contains(p); }

namespace {

Bytes hmac_sha256(const std::array<std::uint8_t, 32>& key, std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
              reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), out.data(), &len))
        throw std::runtime_error("hmac failed");
    return Bytes(reinterpret_cast<const char*>(out.data()), len);
}

}  // namespace

Signature KeyRing::sign(Principal signer, std::string_view bytes) const {
    const auto& keys = *keys_.at(signer);
    switch (scheme_) {
        case SignatureScheme::noop: return Signature{};
        case SignatureScheme::hmac: return Signature{hmac_sha256(keys.secret, bytes)};
        case SignatureScheme::ed25519: {
            EVP_MD_CTX* ctx = EVP_MD_CTX_new();
            Bytes sig(64, '\0');
            std::size_t siglen = sig.size();
            bool ok = EVP_DigestSignInit(ctx, nullptr, nullptr, nullptr, keys.priv) == 1 &&
                      EVP_DigestSign(ctx, reinterpret_cast<unsigned char*>(sig.data()), &siglen,
                                     reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()) == 1;
            EVP_MD_CTX_free(ctx);
            if (!ok) throw std::runtime_error("ed25519 sign failed");
            sig.resize(siglen);
            return Signature{std::move(sig)};
        }
    }
    return Signature{};
}

bool KeyRing::verify(Principal signer, std::string_view bytes, const Signature& sig) const {
    auto it = keys_.find(signer);
    if (it == keys_.end()) return false;
    const auto& keys = *it->second;
    switch (scheme_) {
        case SignatureScheme::noop: return true;
        case SignatureScheme::hmac: return hmac_sha256(keys.secret, bytes) == sig.bytes;
        case SignatureScheme::ed25519: {
            if (sig.bytes.size() != 64) return false;
            EVP_MD_CTX* ctx = EVP_MD_CTX_new();
            bool ok = EVP_DigestVerifyInit(ctx, nullptr, nullptr, nullptr, keys.pub) == 1 &&
                      EVP_DigestVerify(ctx, reinterpret_cast<const unsigned char*>(sig.bytes.data()),
                                       sig.bytes.size(), reinterpret_cast<const unsigned char*>(bytes.data()),
                                       bytes.size()) == 1;
            EVP_MD_CTX_free(ctx);
            return ok;
        }
    }
    return false;
}

}  // namespace parblock
