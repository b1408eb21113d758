// Copyright 2026 The knnd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knnd/error.hpp"

namespace knnd {

using Bytes = std::vector<std::uint8_t>;

namespace detail {

/// Appends little-endian fields to a growing byte buffer.
class ByteWriter {
public:
    void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }

    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }

    void f32s(std::span<const float> vs) {
        out_.reserve(out_.size() + vs.size() * 4);
        for (float v : vs) f32(v);
    }

    void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

    Bytes take() && { return std::move(out_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    Bytes out_;
};

/// Bounds-checked little-endian reader; any overrun is a CorruptFormat error.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    void expect_magic(std::string_view m) {
        need(m.size(), "magic");
        if (std::memcmp(in_.data() + pos_, m.data(), m.size()) != 0) {
            fail(ErrorCode::CorruptFormat, "bad magic, expected " + std::string(m));
        }
        pos_ += m.size();
    }

    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
    std::uint64_t u64() { return get(8, "u64"); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, "f32"))); }

    void f32s(std::span<float> out) {
        need_elems(out.size(), 4, "f32 payload");
        for (float& v : out) v = f32();
    }

    std::string raw(std::size_t n) {
        need(n, "string");
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const noexcept { return in_.size() - pos_; }

    /// Fails unless at least `count * width` bytes remain; guards allocations
    /// driven by untrusted length fields.
    void need_elems(std::uint64_t count, std::uint64_t width, const char* what) const {
        if (width != 0 && count > remaining() / width) {
            fail(ErrorCode::CorruptFormat, std::string("truncated ") + what);
        }
    }

    void expect_end() const {
        if (remaining() != 0) fail(ErrorCode::CorruptFormat, "trailing bytes");
    }

private:
    void need(std::size_t n, const char* what) const {
        if (remaining() < n) fail(ErrorCode::CorruptFormat, std::string("truncated ") + what);
    }

    std::uint64_t get(int n, const char* what) {
        need(static_cast<std::size_t>(n), what);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::Io, "read failed: " + path.string());
    return data;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

} // namespace knnd
