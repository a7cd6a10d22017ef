#pragma once

#include <compare>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "medledger/bytes.hpp"
#include "medledger/codec.hpp"

namespace medledger {

using Digest = FixedBytes<32>;
using PublicKey = FixedBytes<32>;
// Ed25519 seed; the expanded signing key is derived from it.
using PrivateKey = FixedBytes<32>;
using Signature = FixedBytes<64>;

enum class CryptoErrc {
    SeedTooShort,
    MalformedKey,
    MalformedSignature,
    EmptyRecipients,
    NotARecipient,
    CiphertextTampered,
};

std::string_view to_string(CryptoErrc code);

class CryptoError : public std::runtime_error {
public:
    explicit CryptoError(CryptoErrc code, const std::string& detail = {})
        : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}
    CryptoErrc code() const { return code_; }

private:
    CryptoErrc code_;
};

// 20-byte account identifier, rendered as lowercase hex with a 0x prefix.
struct Address {
    FixedBytes<20> bytes;

    std::string str() const { return "0x" + bytes.hex(); }
    bool is_zero() const { return bytes.is_zero(); }

    // Requires the 0x prefix and exactly 40 hex digits.
    static Address parse(std::string_view text);
    static Address zero() { return {}; }

    auto operator<=>(const Address&) const = default;
    bool operator==(const Address&) const = default;
};

Digest sha256(ByteView data);
inline Digest sha256(std::string_view s) { return sha256(as_view(s)); }

// First 20 bytes of SHA-256(public_key).
Address address_of(const PublicKey& public_key);

struct KeyAccess;

class KeyPair {
public:
    // Deterministic for a given seed. Seeds longer than 32 bytes are
    // compressed with SHA-256; shorter seeds are rejected. With no seed,
    // fresh entropy is drawn from the OS.
    static KeyPair generate(std::optional<ByteView> seed = std::nullopt);
    static KeyPair from_private_key(const PrivateKey& key) { return generate(key.view()); }

    const PublicKey& public_key() const { return public_key_; }
    const PrivateKey& private_key() const { return private_key_; }
    const Address& address() const { return address_; }

    Signature sign(ByteView message) const;

private:
    PublicKey public_key_;
    PrivateKey private_key_;
    Address address_;
    std::array<std::uint8_t, 64> signing_key_{};

    friend struct KeyAccess;
};

bool verify(const PublicKey& public_key, ByteView message, const Signature& signature);
// Throws CryptoError(MalformedKey / MalformedSignature) on wrong lengths.
bool verify(ByteView public_key, ByteView message, ByteView signature);

struct SealedEnvelope {
    Bytes ciphertext;
    std::map<Address, Bytes> wrapped_keys;
    Digest plaintext_digest;
    Bytes nonce_material;

    bool has_recipient(const Address& a) const { return wrapped_keys.contains(a); }
    bool operator==(const SealedEnvelope&) const = default;
};

void encode(Writer& w, const SealedEnvelope& env);
SealedEnvelope decode_envelope(Reader& r);

// Per-envelope random key, XChaCha20-Poly1305 with the plaintext digest as
// associated data, key wrapped to each recipient with an X25519 sealed box.
SealedEnvelope seal(ByteView plaintext, const std::vector<PublicKey>& recipients);
Bytes open(const SealedEnvelope& envelope, const KeyPair& recipient);
SealedEnvelope rewrap(const SealedEnvelope& envelope, const KeyPair& granter, const PublicKey& new_recipient);

Bytes random_bytes(std::size_t n);

}  // namespace medledger
