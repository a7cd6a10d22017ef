#pragma once

// A single ledger node: mempool, durable block production and receipts.
// One producer thread writes; readers take immutable state snapshots.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "medledger/ehr_state.hpp"
#include "medledger/ledger.hpp"
#include "medledger/mempool.hpp"
#include "medledger/storage.hpp"

namespace medledger {

enum class ReceiptStatus { Pending, Committed, Rejected };
std::string_view to_string(ReceiptStatus s);

struct TxReceipt {
    Digest tx_hash;
    ReceiptStatus status = ReceiptStatus::Pending;
    std::uint64_t height = 0;  // Committed and apply-time rejections
    std::string reason;        // Rejected
};

using Clock = std::function<std::int64_t()>;  // unix ms
std::int64_t system_clock_ms();

struct NodeOptions {
    std::filesystem::path data_dir;
    KeyPair producer;
    std::uint64_t snapshot_every = 10;
    std::size_t max_block_txs = 100;
    bool sync = true;
    Clock clock = system_clock_ms;
};

class LedgerNode {
public:
    // Writes the genesis block into an empty (or missing) directory.
    // Throws StorageError(AlreadyInitialized) if it is not empty.
    static Block initialize(const std::filesystem::path& data_dir, const GenesisSpec& spec);

    // Recovers chain and state from disk. Throws StorageError.
    explicit LedgerNode(NodeOptions options);
    ~LedgerNode();
    LedgerNode(const LedgerNode&) = delete;
    LedgerNode& operator=(const LedgerNode&) = delete;

    // Validates against committed state plus pending nonces. The receipt
    // is Pending on acceptance and Rejected(reason) otherwise; resubmitting
    // a known hash returns its current receipt.
    TxReceipt submit(const SignedTransaction& tx);
    std::optional<TxReceipt> receipt(const Digest& tx_hash) const;

    std::shared_ptr<const EhrState> state() const;
    std::uint64_t height() const;
    Digest tip_hash() const;
    std::optional<Block> block(std::uint64_t height) const;
    std::size_t mempool_size() const;
    // Next nonce for `sender` counting queued transactions.
    std::uint64_t pending_nonce(const Address& sender) const;
    const RecoveryReport& recovery() const { return recovery_info_; }
    const Address& producer() const { return options_.producer.address(); }

    // Builds, persists and applies one block if the mempool is non-empty.
    // Waits for the producer's slot in PoS/DPoS. Storage failures throw.
    std::optional<std::uint64_t> produce_block();

    // Background production; a storage failure stops the loop and is
    // reported by fatal_error().
    void start();
    void stop();
    bool running() const { return running_; }
    std::optional<std::string> fatal_error() const;
    // Blocks until the tip reaches `height` or the timeout passes.
    bool wait_for_height(std::uint64_t height, std::chrono::milliseconds timeout) const;

private:
    void run_loop();
    // Returns the earliest round this node may claim at the next height.
    std::optional<std::uint64_t> own_round(const Block& tip, const ConsensusConfig& config) const;

    NodeOptions options_;
    ChainStore store_;
    RecoveryReport recovery_info_;

    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    Chain chain_;
    std::shared_ptr<const EhrState> state_;
    Mempool mempool_;
    std::map<Address, std::uint64_t> queued_;  // pending txs per sender
    std::map<Digest, TxReceipt> receipts_;
    SignatureCache sig_cache_;
    std::optional<std::string> fatal_;

    std::atomic<bool> running_{false};
    std::atomic<bool> stopping_{false};
    std::thread worker_;
};

}  // namespace medledger
