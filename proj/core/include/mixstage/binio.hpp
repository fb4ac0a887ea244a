#pragma once

// Little-endian binary helpers shared by the file formats.

#include "mixstage/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mixstage::binio {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void magic(std::string_view m) { buf_.append(m.data(), m.size()); }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void i64(std::int64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void f32s(const float* p, std::size_t n) { bytes(p, n * sizeof(float)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s.data(), s.size());
    }

    const std::string& buffer() const { return buf_; }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::string_view data, std::string origin) : data_(data), origin_(std::move(origin)) {}

    void expect_magic(std::string_view m) {
        need(m.size(), "magic");
        if (data_.substr(pos_, m.size()) != m) fail("bad magic, expected \"" + std::string(m) + "\"");
        pos_ += m.size();
    }
    std::uint32_t u32() { return pod<std::uint32_t>("u32"); }
    std::uint64_t u64() { return pod<std::uint64_t>("u64"); }
    std::int64_t i64() { return pod<std::int64_t>("i64"); }
    double f64() { return pod<double>("f64"); }
    void f32s(float* out, std::size_t n) {
        need(n * sizeof(float), "float32 payload");
        std::memcpy(out, data_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n, "string");
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    void skip(std::size_t n) {
        need(n, "skipped bytes");
        pos_ += n;
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    const std::string& origin() const { return origin_; }

    [[noreturn]] void fail(const std::string& what) const { throw FormatError(origin_, pos_, what); }

private:
    template <typename T>
    T pod(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    void need(std::size_t n, const char* what) const {
        if (data_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
    }

    std::string_view data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

std::array<unsigned char, 32> sha256(std::string_view data);
std::string hex(const std::array<unsigned char, 32>& digest);

/// Whole-file read; throws FormatError (offset 0) when the file cannot be opened.
std::string read_file(const std::string& path);
/// Writes via a temporary sibling and renames, so readers never see partial files.
void write_file_atomic(const std::string& path, std::string_view data);

}  // namespace mixstage::binio
