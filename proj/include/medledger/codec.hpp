#pragma once

// Canonical binary encoding shared by hashing, signing, storage and snapshots.
//
// All integers are big-endian and fixed width. Variable-length values
// (byte strings, UTF-8 strings) carry a u32 length prefix. Booleans are a
// single byte that must be 0 or 1. Decoders reject trailing bytes, so every
// value has exactly one encoding.

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "medledger/bytes.hpp"

namespace medledger {

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Writer {
public:
    Writer& u8(std::uint8_t v) {
        out_.push_back(v);
        return *this;
    }
    Writer& u32(std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
        return *this;
    }
    Writer& u64(std::uint64_t v) {
        for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
        return *this;
    }
    Writer& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
    Writer& i32(std::int32_t v) { return u32(static_cast<std::uint32_t>(v)); }
    Writer& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }
    Writer& boolean(bool v) { return u8(v ? 1 : 0); }
    Writer& bytes(ByteView v) {
        u32(static_cast<std::uint32_t>(v.size()));
        out_.insert(out_.end(), v.begin(), v.end());
        return *this;
    }
    Writer& str(std::string_view s) { return bytes(as_view(s)); }
    // No length prefix; for fixed-size values whose width is implied by type.
    Writer& raw(ByteView v) {
        out_.insert(out_.end(), v.begin(), v.end());
        return *this;
    }
    template <std::size_t N>
    Writer& fixed(const FixedBytes<N>& v) {
        return raw(v.view());
    }

    const Bytes& data() const& { return out_; }
    Bytes take() && { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(ByteView in) : in_(in) {}

    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    bool boolean() {
        auto b = u8();
        if (b > 1) throw DecodeError("invalid boolean byte");
        return b == 1;
    }
    Bytes bytes() {
        auto n = u32();
        need(n);
        Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    std::string str() {
        auto b = bytes();
        return std::string(b.begin(), b.end());
    }
    Bytes raw(std::size_t n) {
        need(n);
        Bytes out(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }
    template <std::size_t N>
    FixedBytes<N> fixed() {
        need(N);
        auto out = FixedBytes<N>::from_view(in_.subspan(pos_, N));
        pos_ += N;
        return out;
    }

    std::size_t remaining() const { return in_.size() - pos_; }
    std::size_t position() const { return pos_; }
    void expect_end() const {
        if (remaining() != 0) throw DecodeError("trailing bytes after value");
    }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw DecodeError("unexpected end of input");
    }

    ByteView in_;
    std::size_t pos_ = 0;
};

}  // namespace medledger
