#include "medledger/storage.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

namespace medledger {

namespace fs = std::filesystem;

std::string_view to_string(StorageErrc e) {
    switch (e) {
        case StorageErrc::Io: return "Io";
        case StorageErrc::CorruptRecord: return "CorruptRecord";
        case StorageErrc::ReplayMismatch: return "ReplayMismatch";
        case StorageErrc::InvalidBlock: return "InvalidBlock";
        case StorageErrc::NotInitialized: return "NotInitialized";
        case StorageErrc::AlreadyInitialized: return "AlreadyInitialized";
    }
    return "Unknown";
}

namespace {

constexpr std::string_view kSnapshotMagic = "MLSNAP01";

std::uint32_t crc32_of(ByteView b) {
    return static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

[[noreturn]] void io_fail(const std::string& what, const fs::path& p) {
    throw StorageError(StorageErrc::Io, what + " " + p.string() + ": " + std::strerror(errno));
}

Bytes read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) io_fail("cannot open", p);
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

class Fd {
public:
    Fd(const fs::path& p, int flags) : path_(p), fd_(::open(p.c_str(), flags | O_CLOEXEC, 0644)) {
        if (fd_ < 0) io_fail("cannot open", p);
    }
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;

    void write_all(ByteView b) {
        std::size_t off = 0;
        while (off < b.size()) {
            auto n = ::write(fd_, b.data() + off, b.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                io_fail("write failed on", path_);
            }
            off += static_cast<std::size_t>(n);
        }
    }
    void sync() {
        if (::fsync(fd_) != 0) io_fail("fsync failed on", path_);
    }

private:
    fs::path path_;
    int fd_;
};

void sync_dir(const fs::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

std::optional<std::uint64_t> snapshot_height_of(const fs::path& p) {
    auto name = p.filename().string();
    constexpr std::string_view prefix = "height-", suffix = ".snap";
    if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) || !name.ends_with(suffix))
        return std::nullopt;
    auto digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (digits.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    try {
        return std::stoull(digits);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

LogScan scan_chain_log(const fs::path& file) {
    LogScan scan;
    if (!fs::exists(file)) return scan;
    auto data = read_file(file);
    std::size_t pos = 0;
    while (pos < data.size()) {
        std::uint64_t height = scan.blocks.size();
        auto remaining = data.size() - pos;
        bool is_last = false;
        bool damaged = false;
        std::uint32_t len = 0;
        if (remaining < 8) {
            damaged = is_last = true;
        } else {
            Reader hdr(ByteView(data).subspan(pos, 8));
            len = hdr.u32();
            auto crc = hdr.u32();
            if (len > remaining - 8) {
                damaged = is_last = true;
            } else {
                is_last = pos + 8 + len == data.size();
                auto body = ByteView(data).subspan(pos + 8, len);
                if (crc32_of(body) != crc) {
                    damaged = true;
                } else {
                    try {
                        auto b = decode_block(body);
                        if (b.header.height != height) damaged = true;
                        else scan.blocks.push_back(std::move(b));
                    } catch (const DecodeError&) {
                        damaged = true;
                    }
                }
            }
        }
        if (damaged) {
            if (is_last) {
                scan.dropped_tail = true;
                break;
            }
            throw StorageError(StorageErrc::CorruptRecord, "chain log record for height " + std::to_string(height) +
                                                               " is damaged",
                               height);
        }
        pos += 8 + len;
        scan.valid_bytes = pos;
    }
    return scan;
}

Bytes encode_snapshot(std::uint64_t height, const Digest& tip_hash, const EhrState& state) {
    Writer w;
    w.raw(as_view(kSnapshotMagic)).u64(height).fixed(state.state_root()).fixed(tip_hash).bytes(state.serialize());
    auto digest = sha256(w.data());
    w.fixed(digest);
    return std::move(w).take();
}

std::pair<SnapshotInfo, EhrState> decode_snapshot(ByteView bytes) {
    if (bytes.size() < kSnapshotMagic.size() + 32) throw DecodeError("snapshot too short");
    auto body = bytes.first(bytes.size() - 32);
    if (sha256(body) != Digest::from_view(bytes.last(32))) throw DecodeError("snapshot digest mismatch");
    Reader r(body);
    auto magic = r.raw(kSnapshotMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kSnapshotMagic.begin())) throw DecodeError("bad snapshot magic");
    SnapshotInfo info;
    info.height = r.u64();
    info.state_root = r.fixed<32>();
    info.tip_hash = r.fixed<32>();
    auto payload = r.bytes();
    r.expect_end();
    auto state = EhrState::deserialize(payload);
    if (state.state_root() != info.state_root) throw DecodeError("snapshot state root mismatch");
    return {info, std::move(state)};
}

ChainStore::ChainStore(fs::path dir, StoreOptions options) : dir_(std::move(dir)), options_(std::move(options)) {}

bool ChainStore::has_chain() const { return fs::exists(log_path()) && fs::file_size(log_path()) > 0; }

void ChainStore::initialize(const Block& genesis) {
    if (has_chain()) throw StorageError(StorageErrc::AlreadyInitialized, dir_.string() + " already holds a chain");
    if (genesis.header.height != 0) throw StorageError(StorageErrc::InvalidBlock, "first block must be genesis", 0);
    fs::create_directories(dir_);
    append(genesis, EhrState{});
}

void ChainStore::append(const Block& block, const EhrState& state_after) {
    auto body = encode_block(block);
    Writer w;
    w.u32(static_cast<std::uint32_t>(body.size())).u32(crc32_of(body)).raw(body);
    auto record = std::move(w).take();
    {
        Fd fd(log_path(), O_WRONLY | O_APPEND | O_CREAT);
        if (options_.hook) {
            auto half = record.size() / 2;
            fd.write_all(ByteView(record).first(half));
            hook(WriteSite::RecordPartial);
            fd.write_all(ByteView(record).subspan(half));
        } else {
            fd.write_all(record);
        }
        hook(WriteSite::RecordWritten);
        if (options_.sync) fd.sync();
    }
    hook(WriteSite::RecordSynced);
    auto h = block.header.height;
    if (h > 0 && options_.snapshot_every > 0 && h % options_.snapshot_every == 0)
        write_snapshot(h, block.block_hash, state_after);
}

void ChainStore::write_snapshot(std::uint64_t height, const Digest& tip_hash, const EhrState& state) {
    fs::create_directories(snapshot_dir());
    auto final_path = snapshot_dir() / ("height-" + std::to_string(height) + ".snap");
    auto tmp_path = snapshot_dir() / ("height-" + std::to_string(height) + ".snap.tmp");
    {
        Fd fd(tmp_path, O_WRONLY | O_CREAT | O_TRUNC);
        fd.write_all(encode_snapshot(height, tip_hash, state));
        if (options_.sync) fd.sync();
    }
    hook(WriteSite::SnapshotTemp);
    fs::rename(tmp_path, final_path);
    if (options_.sync) sync_dir(snapshot_dir());
    hook(WriteSite::SnapshotRenamed);
}

std::vector<std::uint64_t> ChainStore::snapshot_heights() const {
    std::vector<std::uint64_t> out;
    if (!fs::exists(snapshot_dir())) return out;
    for (const auto& e : fs::directory_iterator(snapshot_dir()))
        if (auto h = snapshot_height_of(e.path())) out.push_back(*h);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

void replay(const Chain& chain, std::uint64_t from, EhrState& state) {
    const auto& blocks = chain.blocks();
    for (std::uint64_t h = from; h < blocks.size(); ++h) {
        const Block* parent = h == 0 ? nullptr : &blocks[h - 1];
        auto v = validate_block(blocks[h], parent, state.consensus(), state);
        if (!v) throw StorageError(StorageErrc::InvalidBlock, "block " + std::to_string(h) + " rejected on replay: " +
                                                                  v.reason().describe(),
                                   h);
        apply_block(state, blocks[h]);
    }
}

}  // namespace

RecoveryReport ChainStore::recover(bool verify_full_replay) {
    RecoveryReport report;
    auto scan = scan_chain_log(log_path());
    if (scan.dropped_tail) {
        fs::resize_file(log_path(), scan.valid_bytes);
        report.dropped_tail = true;
    }
    if (scan.blocks.empty()) return report;

    for (auto& b : scan.blocks) {
        auto h = b.header.height;
        try {
            report.chain.append(std::move(b));
        } catch (const LedgerError& e) {
            throw StorageError(StorageErrc::InvalidBlock, e.what(), h);
        }
    }

    auto heights = snapshot_heights();
    for (auto it = heights.rbegin(); it != heights.rend(); ++it) {
        if (*it > report.chain.height()) continue;
        try {
            auto [info, state] =
                decode_snapshot(read_file(snapshot_dir() / ("height-" + std::to_string(*it) + ".snap")));
            if (info.height != *it || info.tip_hash != report.chain.at(*it).block_hash) continue;
            report.state = std::move(state);
            report.snapshot_height = *it;
            break;
        } catch (const DecodeError&) {
            continue;
        } catch (const StorageError&) {
            continue;
        }
    }

    std::uint64_t from = report.snapshot_height ? *report.snapshot_height + 1 : 0;
    replay(report.chain, from, report.state);
    report.replayed_blocks = report.chain.size() - from;

    if (verify_full_replay && report.snapshot_height) {
        EhrState fresh;
        replay(report.chain, 0, fresh);
        if (fresh.state_root() != report.state.state_root())
            throw StorageError(StorageErrc::ReplayMismatch,
                               "full replay StateRoot " + fresh.state_root().hex() + " differs from snapshot replay " +
                                   report.state.state_root().hex());
    }
    return report;
}

}  // namespace medledger
