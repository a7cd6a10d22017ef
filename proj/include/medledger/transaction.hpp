#pragma once

#include <cstdint>
#include <string_view>

#include "medledger/command.hpp"
#include "medledger/crypto.hpp"
#include "medledger/verdict.hpp"

namespace medledger {

struct SignedTransaction {
    Address sender;
    std::uint64_t nonce = 0;
    Bytes command;  // encode_command output
    std::int64_t timestamp = 0;  // unix ms
    Signature signature;
    Digest tx_hash;

    bool operator==(const SignedTransaction&) const = default;
};

// Canonical bytes covered by both the signature and tx_hash.
Bytes transaction_signing_bytes(const Address& sender, std::uint64_t nonce, ByteView command, std::int64_t timestamp);
Digest compute_tx_hash(const SignedTransaction& tx);

SignedTransaction build_transaction(const KeyPair& key, std::uint64_t nonce, const Command& command,
                                    std::int64_t timestamp);
SignedTransaction build_transaction(const KeyPair& key, std::uint64_t nonce, Bytes command, std::int64_t timestamp);

enum class TxReject { BadSignature, BadHash, NonceMismatch, UnknownSender };
std::string_view to_string(TxReject r);

// The signature/hash part of validation, independent of nonce state.
Verdict<TxReject> check_transaction_integrity(const SignedTransaction& tx, const PublicKey& sender_key);

Verdict<TxReject> validate_transaction(const SignedTransaction& tx, const PublicKey& sender_key,
                                       std::uint64_t expected_nonce);

void encode(Writer& w, const SignedTransaction& tx);
SignedTransaction decode_transaction(Reader& r);

}  // namespace medledger
