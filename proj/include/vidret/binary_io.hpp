#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "vidret/error.hpp"

namespace vidret::io {

// Little-endian encode/decode independent of host byte order.
class ByteWriter {
public:
    void raw(std::string_view bytes) { buf_.append(bytes); }

    template <typename T>
    void le(T value) {
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf_.push_back(static_cast<char>(u & 0xFF));
            u = static_cast<U>(u >> 8);
        }
    }

    void f32(float value) { le(std::bit_cast<std::uint32_t>(value)); }

    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

    std::string_view raw(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    template <typename T>
    T le() {
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }

    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) {
            fail(ErrorCode::FormatError, source_ + ": truncated at byte " + std::to_string(pos_));
        }
    }

    std::string_view data_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::IoError, "cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot write " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(ErrorCode::IoError, "short write to " + path);
    }
}

} // namespace vidret::io
