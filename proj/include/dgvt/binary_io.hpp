// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgvt/error.hpp"

namespace dgvt {

/// Little-endian encoder independent of host byte order.
class ByteWriter {
public:
    void u8(std::uint8_t v) {
        m_buf.push_back(v);
    }
    void u32(std::uint32_t v) {
        put(v, 4);
    }
    void u64(std::uint64_t v) {
        put(v, 8);
    }
    void i64(std::int64_t v) {
        put(static_cast<std::uint64_t>(v), 8);
    }
    void f32(float v) {
        put(std::bit_cast<std::uint32_t>(v), 4);
    }
    void f64(double v) {
        put(std::bit_cast<std::uint64_t>(v), 8);
    }
    void bytes(std::string_view s) {
        m_buf.insert(m_buf.end(), s.begin(), s.end());
    }
    void string(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    const std::vector<std::uint8_t>& buffer() const {
        return m_buf;
    }
    std::vector<std::uint8_t> take() {
        return std::move(m_buf);
    }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            m_buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> m_buf;
};

/// Bounds-checked little-endian decoder. Truncation raises `error_code`.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, ErrorCode error_code = ErrorCode::MalformedLog)
        : m_data(data), m_code(error_code) {}

    std::uint8_t u8() {
        need(1);
        return m_data[m_pos++];
    }
    std::uint32_t u32() {
        return static_cast<std::uint32_t>(get(4));
    }
    std::uint64_t u64() {
        return get(8);
    }
    std::int64_t i64() {
        return static_cast<std::int64_t>(get(8));
    }
    float f32() {
        return std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    }
    double f64() {
        return std::bit_cast<double>(get(8));
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(m_data.data() + m_pos), n);
        m_pos += n;
        return s;
    }
    std::string string() {
        return bytes(u32());
    }

    std::size_t remaining() const {
        return m_data.size() - m_pos;
    }
    /// Throws unless `count` items of `item_size` bytes can still be read.
    void expect(std::uint64_t count, std::size_t item_size) const {
        if (item_size != 0 && count > remaining() / item_size) {
            throw Error(m_code, "declared size exceeds payload");
        }
    }

private:
    void need(std::size_t n) const {
        if (n > remaining()) {
            throw Error(m_code, "unexpected end of data");
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(m_data[m_pos + static_cast<std::size_t>(i)]) << (8 * i);
        }
        m_pos += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> m_data;
    std::size_t m_pos = 0;
    ErrorCode m_code;
};

}  // namespace dgvt
