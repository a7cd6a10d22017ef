#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace medledger {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);

// Accepts an optional "0x" prefix; throws std::invalid_argument on odd length
// or non-hex characters.
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline ByteView as_view(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Fixed-size byte value with value semantics (digests, keys).
template <std::size_t N>
struct FixedBytes {
    std::array<std::uint8_t, N> data{};

    static constexpr std::size_t size() { return N; }
    ByteView view() const { return {data.data(), N}; }
    std::string hex() const { return to_hex(view()); }
    bool is_zero() const {
        for (auto b : data)
            if (b != 0) return false;
        return true;
    }

    static FixedBytes from_view(ByteView v) {
        if (v.size() != N) throw std::invalid_argument("wrong byte length: expected " + std::to_string(N) +
                                                       ", got " + std::to_string(v.size()));
        FixedBytes out;
        std::copy(v.begin(), v.end(), out.data.begin());
        return out;
    }
    static FixedBytes from_hex(std::string_view h) {
        auto b = medledger::from_hex(h);
        return from_view(b);
    }

    auto operator<=>(const FixedBytes&) const = default;
    bool operator==(const FixedBytes&) const = default;
};

// For unordered containers keyed by digests; uses the leading bytes.
struct FixedBytesHash {
    template <std::size_t N>
    std::size_t operator()(const FixedBytes<N>& b) const {
        std::size_t h = 0;
        for (std::size_t i = 0; i < std::min<std::size_t>(N, sizeof(h)); ++i) h = (h << 8) | b.data[i];
        return h;
    }
};

}  // namespace medledger
