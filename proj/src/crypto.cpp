#include "medledger/crypto.hpp"

#include <sodium.h>

#include <cstring>

namespace medledger {

namespace {

void ensure_sodium() {
    static const bool ready = [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
        return true;
    }();
    (void)ready;
}

using CurveKey = std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES>;

CurveKey curve_public(const PublicKey& ed_pk) {
    CurveKey out{};
    if (crypto_sign_ed25519_pk_to_curve25519(out.data(), ed_pk.data.data()) != 0)
        throw CryptoError(CryptoErrc::MalformedKey, "public key is not a valid curve point");
    return out;
}

constexpr std::size_t kWrapKeyBytes = crypto_aead_xchacha20poly1305_ietf_KEYBYTES;
constexpr std::size_t kWrappedBlobBytes = kWrapKeyBytes + crypto_box_SEALBYTES;

}  // namespace

struct KeyAccess {
    static CurveKey curve_secret(const KeyPair& k) {
        CurveKey out{};
        crypto_sign_ed25519_sk_to_curve25519(out.data(), k.signing_key_.data());
        return out;
    }
};

std::string_view to_string(CryptoErrc code) {
    switch (code) {
        case CryptoErrc::SeedTooShort: return "SeedTooShort";
        case CryptoErrc::MalformedKey: return "MalformedKey";
        case CryptoErrc::MalformedSignature: return "MalformedSignature";
        case CryptoErrc::EmptyRecipients: return "EmptyRecipients";
        case CryptoErrc::NotARecipient: return "NotARecipient";
        case CryptoErrc::CiphertextTampered: return "CiphertextTampered";
    }
    return "Unknown";
}

Address Address::parse(std::string_view text) {
    if (text.size() != 42 || !(text.starts_with("0x")))
        throw std::invalid_argument("address must be 0x followed by 40 hex digits: '" + std::string(text) + "'");
    Address a;
    a.bytes = FixedBytes<20>::from_hex(text.substr(2));
    return a;
}

Digest sha256(ByteView data) {
    ensure_sodium();
    Digest d;
    crypto_hash_sha256(d.data.data(), data.data(), data.size());
    return d;
}

Address address_of(const PublicKey& public_key) {
    auto h = sha256(public_key.view());
    Address a;
    std::memcpy(a.bytes.data.data(), h.data.data(), 20);
    return a;
}

Bytes random_bytes(std::size_t n) {
    ensure_sodium();
    Bytes out(n);
    randombytes_buf(out.data(), n);
    return out;
}

KeyPair KeyPair::generate(std::optional<ByteView> seed) {
    ensure_sodium();
    PrivateKey sk_seed;
    if (seed) {
        if (seed->size() < PrivateKey::size())
            throw CryptoError(CryptoErrc::SeedTooShort, "need at least 32 bytes, got " + std::to_string(seed->size()));
        if (seed->size() == PrivateKey::size())
            sk_seed = PrivateKey::from_view(*seed);
        else
            sk_seed = sha256(*seed);
    } else {
        randombytes_buf(sk_seed.data.data(), sk_seed.size());
    }
    KeyPair kp;
    kp.private_key_ = sk_seed;
    crypto_sign_seed_keypair(kp.public_key_.data.data(), kp.signing_key_.data(), sk_seed.data.data());
    kp.address_ = address_of(kp.public_key_);
    return kp;
}

Signature KeyPair::sign(ByteView message) const {
    Signature sig;
    crypto_sign_detached(sig.data.data(), nullptr, message.data(), message.size(), signing_key_.data());
    return sig;
}

bool verify(const PublicKey& public_key, ByteView message, const Signature& signature) {
    ensure_sodium();
    return crypto_sign_verify_detached(signature.data.data(), message.data(), message.size(),
                                       public_key.data.data()) == 0;
}

bool verify(ByteView public_key, ByteView message, ByteView signature) {
    if (public_key.size() != PublicKey::size())
        throw CryptoError(CryptoErrc::MalformedKey, "public key must be 32 bytes");
    if (signature.size() != Signature::size())
        throw CryptoError(CryptoErrc::MalformedSignature, "signature must be 64 bytes");
    return verify(PublicKey::from_view(public_key), message, Signature::from_view(signature));
}

void encode(Writer& w, const SealedEnvelope& env) {
    w.bytes(env.ciphertext);
    w.u32(static_cast<std::uint32_t>(env.wrapped_keys.size()));
    for (const auto& [addr, blob] : env.wrapped_keys) {
        w.fixed(addr.bytes);
        w.bytes(blob);
    }
    w.fixed(env.plaintext_digest);
    w.bytes(env.nonce_material);
}

SealedEnvelope decode_envelope(Reader& r) {
    SealedEnvelope env;
    env.ciphertext = r.bytes();
    auto n = r.u32();
    std::optional<Address> prev;
    for (std::uint32_t i = 0; i < n; ++i) {
        Address a;
        a.bytes = r.fixed<20>();
        if (prev && !(*prev < a)) throw DecodeError("envelope recipients not in canonical order");
        prev = a;
        env.wrapped_keys.emplace(a, r.bytes());
    }
    env.plaintext_digest = r.fixed<32>();
    env.nonce_material = r.bytes();
    return env;
}

SealedEnvelope seal(ByteView plaintext, const std::vector<PublicKey>& recipients) {
    ensure_sodium();
    if (recipients.empty()) throw CryptoError(CryptoErrc::EmptyRecipients);

    SealedEnvelope env;
    env.plaintext_digest = sha256(plaintext);
    env.nonce_material.resize(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
    randombytes_buf(env.nonce_material.data(), env.nonce_material.size());

    std::array<std::uint8_t, kWrapKeyBytes> key{};
    crypto_aead_xchacha20poly1305_ietf_keygen(key.data());

    env.ciphertext.resize(plaintext.size() + crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(env.ciphertext.data(), &clen, plaintext.data(), plaintext.size(),
                                               env.plaintext_digest.data.data(), env.plaintext_digest.size(),
                                               nullptr, env.nonce_material.data(), key.data());
    env.ciphertext.resize(clen);

    for (const auto& pk : recipients) {
        auto curve = curve_public(pk);
        Bytes blob(kWrappedBlobBytes);
        crypto_box_seal(blob.data(), key.data(), key.size(), curve.data());
        env.wrapped_keys[address_of(pk)] = std::move(blob);
    }
    sodium_memzero(key.data(), key.size());
    return env;
}

namespace {

std::array<std::uint8_t, kWrapKeyBytes> unwrap(const SealedEnvelope& env, const KeyPair& holder) {
    auto it = env.wrapped_keys.find(holder.address());
    if (it == env.wrapped_keys.end()) throw CryptoError(CryptoErrc::NotARecipient, holder.address().str());
    const Bytes& blob = it->second;
    if (blob.size() != kWrappedBlobBytes) throw CryptoError(CryptoErrc::CiphertextTampered, "wrapped key length");
    auto curve_pk = curve_public(holder.public_key());
    auto curve_sk = KeyAccess::curve_secret(holder);
    std::array<std::uint8_t, kWrapKeyBytes> key{};
    int rc = crypto_box_seal_open(key.data(), blob.data(), blob.size(), curve_pk.data(), curve_sk.data());
    sodium_memzero(curve_sk.data(), curve_sk.size());
    if (rc != 0) throw CryptoError(CryptoErrc::CiphertextTampered, "wrapped key does not open");
    return key;
}

}  // namespace

Bytes open(const SealedEnvelope& envelope, const KeyPair& recipient) {
    auto key = unwrap(envelope, recipient);
    if (envelope.nonce_material.size() != crypto_aead_xchacha20poly1305_ietf_NPUBBYTES ||
        envelope.ciphertext.size() < crypto_aead_xchacha20poly1305_ietf_ABYTES)
        throw CryptoError(CryptoErrc::CiphertextTampered, "malformed envelope");

    Bytes plain(envelope.ciphertext.size() - crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long plen = 0;
    int rc = crypto_aead_xchacha20poly1305_ietf_decrypt(
        plain.data(), &plen, nullptr, envelope.ciphertext.data(), envelope.ciphertext.size(),
        envelope.plaintext_digest.data.data(), envelope.plaintext_digest.size(), envelope.nonce_material.data(),
        key.data());
    sodium_memzero(key.data(), key.size());
    if (rc != 0) throw CryptoError(CryptoErrc::CiphertextTampered, "authentication failed");
    plain.resize(plen);
    if (sha256(plain) != envelope.plaintext_digest)
        throw CryptoError(CryptoErrc::CiphertextTampered, "plaintext digest mismatch");
    return plain;
}

SealedEnvelope rewrap(const SealedEnvelope& envelope, const KeyPair& granter, const PublicKey& new_recipient) {
    auto key = unwrap(envelope, granter);
    auto curve = curve_public(new_recipient);
    Bytes blob(kWrappedBlobBytes);
    crypto_box_seal(blob.data(), key.data(), key.size(), curve.data());
    sodium_memzero(key.data(), key.size());

    SealedEnvelope out = envelope;
    out.wrapped_keys[address_of(new_recipient)] = std::move(blob);
    return out;
}

}  // namespace medledger
