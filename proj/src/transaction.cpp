#include "medledger/transaction.hpp"

namespace medledger {

std::string_view to_string(TxReject r) {
    switch (r) {
        case TxReject::BadSignature: return "BadSignature";
        case TxReject::BadHash: return "BadHash";
        case TxReject::NonceMismatch: return "NonceMismatch";
        case TxReject::UnknownSender: return "UnknownSender";
    }
    return "Unknown";
}

Bytes transaction_signing_bytes(const Address& sender, std::uint64_t nonce, ByteView command,
                                std::int64_t timestamp) {
    Writer w;
    w.str("medledger.tx.v1").fixed(sender.bytes).u64(nonce).bytes(command).i64(timestamp);
    return std::move(w).take();
}

Digest compute_tx_hash(const SignedTransaction& tx) {
    return sha256(transaction_signing_bytes(tx.sender, tx.nonce, tx.command, tx.timestamp));
}

SignedTransaction build_transaction(const KeyPair& key, std::uint64_t nonce, const Command& command,
                                    std::int64_t timestamp) {
    return build_transaction(key, nonce, encode_command(command), timestamp);
}

SignedTransaction build_transaction(const KeyPair& key, std::uint64_t nonce, Bytes command, std::int64_t timestamp) {
    SignedTransaction tx;
    tx.sender = key.address();
    tx.nonce = nonce;
    tx.command = std::move(command);
    tx.timestamp = timestamp;
    auto msg = transaction_signing_bytes(tx.sender, tx.nonce, tx.command, tx.timestamp);
    tx.signature = key.sign(msg);
    tx.tx_hash = sha256(msg);
    return tx;
}

Verdict<TxReject> check_transaction_integrity(const SignedTransaction& tx, const PublicKey& sender_key) {
    using V = Verdict<TxReject>;
    auto msg = transaction_signing_bytes(tx.sender, tx.nonce, tx.command, tx.timestamp);
    if (address_of(sender_key) != tx.sender) return V::reject(TxReject::BadSignature);
    if (!verify(sender_key, msg, tx.signature)) return V::reject(TxReject::BadSignature);
    if (sha256(msg) != tx.tx_hash) return V::reject(TxReject::BadHash);
    return V::accept();
}

Verdict<TxReject> validate_transaction(const SignedTransaction& tx, const PublicKey& sender_key,
                                       std::uint64_t expected_nonce) {
    auto integrity = check_transaction_integrity(tx, sender_key);
    if (!integrity) return integrity;
    if (tx.nonce != expected_nonce) return Verdict<TxReject>::reject(TxReject::NonceMismatch);
    return Verdict<TxReject>::accept();
}

void encode(Writer& w, const SignedTransaction& tx) {
    w.fixed(tx.sender.bytes).u64(tx.nonce).bytes(tx.command).i64(tx.timestamp).fixed(tx.signature).fixed(tx.tx_hash);
}

SignedTransaction decode_transaction(Reader& r) {
    SignedTransaction tx;
    tx.sender.bytes = r.fixed<20>();
    tx.nonce = r.u64();
    tx.command = r.bytes();
    tx.timestamp = r.i64();
    tx.signature = r.fixed<64>();
    tx.tx_hash = r.fixed<32>();
    return tx;
}

}  // namespace medledger
