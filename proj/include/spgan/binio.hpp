#pragma once

// Little-endian primitive streams for the checkpoint and feature-file formats.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "spgan/error.hpp"

namespace spgan::binio {

class Writer {
   public:
    template <typename T>
    void put(T v) {
        static_assert(std::is_arithmetic_v<T>);
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        buf_.insert(buf_.end(), b, b + sizeof(T));
    }
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void str(const std::string& s) {
        put<uint32_t>(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    const std::vector<unsigned char>& buffer() const { return buf_; }
    // Writes atomically enough for our purposes: temp file then rename.
    void save(const std::string& path) const;

   private:
    std::vector<unsigned char> buf_;
};

class Reader {
   public:
    Reader(std::vector<unsigned char> data, std::string path) : buf_(std::move(data)), path_(std::move(path)) {}
    static Reader open(const std::string& path);

    template <typename T>
    T get() {
        static_assert(std::is_arithmetic_v<T>);
        need(sizeof(T));
        unsigned char b[sizeof(T)];
        std::memcpy(b, buf_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
    std::string str(size_t max_len = 1u << 24) {
        const auto n = get<uint32_t>();
        if (n > max_len) fail("string length " + std::to_string(n) + " is implausible");
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::string raw(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == buf_.size(); }
    size_t remaining() const { return buf_.size() - pos_; }
    [[noreturn]] void fail(const std::string& msg) const { throw IoError(path_ + ": " + msg); }

   private:
    void need(size_t n) const {
        if (buf_.size() - pos_ < n) fail("truncated file");
    }
    std::vector<unsigned char> buf_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace spgan::binio
