// chainscan - sequential malware detection pipeline
// Feature hashing: 64-bit FNV-1a over the lowercased name, modulo bucket count.

#ifndef CHAINSCAN_HASHING_HPP
#define CHAINSCAN_HASHING_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace chainscan {

inline constexpr std::uint64_t fnv1a64_offset_basis = 14695981039346656037ULL;
inline constexpr std::uint64_t fnv1a64_prime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = fnv1a64_offset_basis) {
    std::uint64_t h = basis;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= fnv1a64_prime;
    }
    return h;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    return out;
}

/// Bucket index of `name` (lowercased) among `buckets`; `seed` replaces the FNV offset basis.
inline std::size_t hash_bucket(std::string_view name, std::size_t buckets, std::uint64_t seed = fnv1a64_offset_basis) {
    return static_cast<std::size_t>(fnv1a64(ascii_lower(name), seed) % buckets);
}

}  // namespace chainscan

#endif  // CHAINSCAN_HASHING_HPP
