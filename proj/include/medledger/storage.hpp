#pragma once

// Durable chain log and state snapshots.
//
// <dir>/chain.log             records of [u32 length][u32 crc32][block bytes]
// <dir>/snapshots/height-N.snap
//
// Snapshot layout: "MLSNAP01", u64 height, state root (32), tip hash (32),
// u32-prefixed serialized state, SHA-256 over all preceding bytes (32).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "medledger/ehr_state.hpp"
#include "medledger/ledger.hpp"

namespace medledger {

enum class StorageErrc { Io, CorruptRecord, ReplayMismatch, InvalidBlock, NotInitialized, AlreadyInitialized };
std::string_view to_string(StorageErrc e);

class StorageError : public std::runtime_error {
public:
    StorageError(StorageErrc code, const std::string& what, std::optional<std::uint64_t> height = std::nullopt)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), height_(height) {}
    StorageErrc code() const { return code_; }
    // Height of the offending record for CorruptRecord / InvalidBlock.
    std::optional<std::uint64_t> height() const { return height_; }

private:
    StorageErrc code_;
    std::optional<std::uint64_t> height_;
};

// Places where a write can be interrupted. Tests install a hook that throws
// at one of them to simulate a crash.
enum class WriteSite {
    RecordPartial,   // half of the record bytes written
    RecordWritten,   // full record written, not yet synced
    RecordSynced,    // record durable, append not yet acknowledged
    SnapshotTemp,    // temp snapshot written, not yet renamed
    SnapshotRenamed,
};
using WriteHook = std::function<void(WriteSite)>;

struct LogScan {
    std::vector<Block> blocks;
    std::uint64_t valid_bytes = 0;  // file offset after the last good record
    bool dropped_tail = false;
};

// Reads a chain log. A damaged final record is dropped; damage before the
// final record throws CorruptRecord with the height of the bad record.
LogScan scan_chain_log(const std::filesystem::path& file);

struct SnapshotInfo {
    std::uint64_t height = 0;
    Digest state_root;
    Digest tip_hash;
};

Bytes encode_snapshot(std::uint64_t height, const Digest& tip_hash, const EhrState& state);
// Throws DecodeError on a bad magic, digest or payload.
std::pair<SnapshotInfo, EhrState> decode_snapshot(ByteView bytes);

struct RecoveryReport {
    Chain chain;
    EhrState state;
    std::optional<std::uint64_t> snapshot_height;  // empty: cold replay from genesis
    std::uint64_t replayed_blocks = 0;
    bool dropped_tail = false;
};

struct StoreOptions {
    std::uint64_t snapshot_every = 0;  // 0 disables snapshots
    bool sync = true;
    WriteHook hook;
};

class ChainStore {
public:
    explicit ChainStore(std::filesystem::path dir, StoreOptions options = {});

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path log_path() const { return dir_ / "chain.log"; }
    std::filesystem::path snapshot_dir() const { return dir_ / "snapshots"; }

    bool has_chain() const;

    // Writes the genesis record. Throws AlreadyInitialized if a log exists.
    void initialize(const Block& genesis);

    // Appends a validated block; returns once the record is flushed.
    // `state_after` is the state with the block applied, used for snapshots.
    void append(const Block& block, const EhrState& state_after);

    void write_snapshot(std::uint64_t height, const Digest& tip_hash, const EhrState& state);
    std::vector<std::uint64_t> snapshot_heights() const;

    // Loads the newest usable snapshot and replays the remaining blocks,
    // validating each. With verify_full_replay the chain is also replayed
    // from genesis and a differing StateRoot throws ReplayMismatch.
    // A dropped tail record is truncated from the log.
    RecoveryReport recover(bool verify_full_replay = false);

private:
    void hook(WriteSite s) const {
        if (options_.hook) options_.hook(s);
    }

    std::filesystem::path dir_;
    StoreOptions options_;
};

}  // namespace medledger
