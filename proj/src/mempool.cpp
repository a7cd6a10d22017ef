#include "medledger/mempool.hpp"

#include <map>

namespace medledger {

bool Mempool::add(SignedTransaction tx) {
    if (index_.contains(tx.tx_hash)) return false;
    auto hash = tx.tx_hash;
    items_.push_back(std::move(tx));
    index_.emplace(hash, std::prev(items_.end()));
    return true;
}

bool Mempool::remove(const Digest& tx_hash) {
    auto it = index_.find(tx_hash);
    if (it == index_.end()) return false;
    items_.erase(it->second);
    index_.erase(it);
    return true;
}

void Mempool::remove_block(const Block& block) {
    for (const auto& tx : block.transactions) remove(tx.tx_hash);
}

void Mempool::prune(const EhrState& state) {
    for (auto it = items_.begin(); it != items_.end();) {
        if (it->nonce < state.next_nonce(it->sender)) {
            index_.erase(it->tx_hash);
            it = items_.erase(it);
        } else {
            ++it;
        }
    }
}

std::vector<SignedTransaction> Mempool::select(const EhrState& state, std::size_t max) const {
    std::vector<SignedTransaction> out;
    std::map<Address, std::uint64_t> expected;
    std::map<Address, PublicKey> keys;
    // Later transactions of a sender may become eligible once an earlier
    // one is taken, so sweep until nothing changes.
    std::vector<bool> taken(items_.size(), false);
    bool progress = true;
    while (progress && out.size() < max) {
        progress = false;
        std::size_t i = 0;
        for (auto it = items_.begin(); it != items_.end() && out.size() < max; ++it, ++i) {
            if (taken[i]) continue;
            const auto& tx = *it;
            auto [e, fresh] = expected.try_emplace(tx.sender, 0);
            if (fresh) e->second = state.next_nonce(tx.sender);
            if (tx.nonce != e->second) continue;
            if (!keys.contains(tx.sender)) {
                auto key = state.sender_key(tx);
                if (!key) continue;
                keys.emplace(tx.sender, *key);
            }
            out.push_back(tx);
            taken[i] = true;
            ++e->second;
            progress = true;
        }
    }
    return out;
}

}  // namespace medledger
