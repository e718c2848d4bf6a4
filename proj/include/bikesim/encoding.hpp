#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bikesim {

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    static const char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back(tbl[v & 63]);
    }
    if (i < len) {
        std::uint32_t v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? tbl[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = val(c);
        if (v < 0) throw std::invalid_argument("invalid base64 input");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

/// Little-endian float64 array <-> base64, used by the demand-model JSON.
inline std::string doubles_to_base64(const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    return base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * 8);
}

inline std::vector<double> doubles_from_base64(std::string_view s) {
    const auto bytes = base64_decode(s);
    if (bytes.size() % 8 != 0) throw std::invalid_argument("base64 float array has odd length");
    std::vector<double> out(bytes.size() / 8);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

inline std::string ints_to_base64(const std::vector<std::int32_t>& v) {
    return base64_encode(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * 4);
}

inline std::vector<std::int32_t> ints_from_base64(std::string_view s) {
    const auto bytes = base64_decode(s);
    if (bytes.size() % 4 != 0) throw std::invalid_argument("base64 int array has odd length");
    std::vector<std::int32_t> out(bytes.size() / 4);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

/// FNV-1a 64-bit; the content hash recorded in results metadata.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace bikesim
