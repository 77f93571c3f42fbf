// chainscan - sequential malware detection pipeline
// Byte buffer helpers shared by every module.

#ifndef CHAINSCAN_BYTES_HPP
#define CHAINSCAN_BYTES_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chainscan {

using byte_vector = std::vector<std::uint8_t>;
using byte_view = std::span<const std::uint8_t>;

inline byte_view as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline byte_vector to_bytes(std::string_view s) {
    auto v = as_bytes(s);
    return {v.begin(), v.end()};
}

inline std::uint16_t read_u16(byte_view d, std::size_t off) {
    return static_cast<std::uint16_t>(d[off] | (d[off + 1] << 8));
}

inline std::uint32_t read_u32(byte_view d, std::size_t off) {
    return static_cast<std::uint32_t>(d[off]) | (static_cast<std::uint32_t>(d[off + 1]) << 8) |
           (static_cast<std::uint32_t>(d[off + 2]) << 16) | (static_cast<std::uint32_t>(d[off + 3]) << 24);
}

inline std::uint64_t read_u64(byte_view d, std::size_t off) {
    return static_cast<std::uint64_t>(read_u32(d, off)) | (static_cast<std::uint64_t>(read_u32(d, off + 4)) << 32);
}

inline void write_u16(byte_vector& d, std::size_t off, std::uint16_t v) {
    d[off] = static_cast<std::uint8_t>(v);
    d[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

inline void write_u32(byte_vector& d, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) d[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void write_u64(byte_vector& d, std::size_t off, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) d[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

/// Reads a whole file; throws std::runtime_error when it cannot be opened.
byte_vector read_file(const std::filesystem::path& path);

void write_file(const std::filesystem::path& path, byte_view data);

std::string read_text_file(const std::filesystem::path& path);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(byte_view data);

}  // namespace chainscan

#endif  // CHAINSCAN_BYTES_HPP
