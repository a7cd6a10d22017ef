#pragma once

// Pending transactions in arrival order, keyed by tx_hash.

#include <cstddef>
#include <list>
#include <unordered_map>
#include <vector>

#include "medledger/ehr_state.hpp"
#include "medledger/ledger.hpp"

namespace medledger {

class Mempool {
public:
    bool contains(const Digest& tx_hash) const { return index_.contains(tx_hash); }
    // False when a transaction with the same hash is already queued.
    bool add(SignedTransaction tx);
    bool remove(const Digest& tx_hash);
    void remove_block(const Block& block);
    // Drops transactions whose nonce the state has already consumed.
    void prune(const EhrState& state);

    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const std::list<SignedTransaction>& items() const { return items_; }

    // Up to `max` transactions that form a valid nonce sequence on top of
    // `state`, in arrival order. Senders without a known key are skipped.
    std::vector<SignedTransaction> select(const EhrState& state, std::size_t max) const;

private:
    std::list<SignedTransaction> items_;
    std::unordered_map<Digest, std::list<SignedTransaction>::iterator, FixedBytesHash> index_;
};

}  // namespace medledger
