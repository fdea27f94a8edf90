#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "avgann/errors.hpp"

namespace avgann::detail {

/// Appends little-endian fixed-width values to a byte buffer.
class ByteWriter {
public:
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
        }
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
        }
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    [[nodiscard]] std::size_t size() const noexcept { return buf_.size(); }
    [[nodiscard]] std::vector<char>& buffer() noexcept { return buf_; }
    [[nodiscard]] const std::vector<char>& buffer() const noexcept { return buf_; }

    /// Overwrites a previously written u64 at `pos`.
    void patch_u64(std::size_t pos, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_[pos + i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
        }
    }

private:
    std::vector<char> buf_;
};

/// Bounds-checked little-endian reader; running past the end throws Truncated.
class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, std::string what)
        : data_(data), size_(size), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (size_ - pos_ < n) {
            throw Truncated(what_ + ": truncated, expected " + std::to_string(pos_ + n) + " bytes but file has " +
                            std::to_string(size_));
        }
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        std::string_view s(data_ + pos_, n);
        pos_ += n;
        return s;
    }

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const auto n = u32();
        return std::string(bytes(n));
    }

    [[nodiscard]] std::size_t position() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return size_ - pos_; }
    [[nodiscard]] const std::string& what() const noexcept { return what_; }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidInput("cannot open '" + path + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InvalidInput("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw InvalidInput("write to '" + path + "' failed");
    }
}

} // namespace avgann::detail
