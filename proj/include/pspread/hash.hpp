#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace pspread {

// Seeds of the two independent hash roles. Element hashes pick the register
// and rank; the master hash places virtual slots in a physical array.
inline constexpr std::uint64_t kElementHashSeed = 0x9e3779b97f4a7c15ULL;
inline constexpr std::uint64_t kMasterHashSeed = 0xc2b2ae3d27d4eb4fULL;

// 64-bit finalizer (MurmurHash3 fmix64). Bijective on uint64.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

/// Seeded 64-bit hash of an arbitrary byte string. Output bits are assumed
/// uniform; every estimator in this library relies on that assumption.
std::uint64_t hash_bytes(std::span<const std::byte> data, std::uint64_t seed) noexcept;

inline std::uint64_t hash_bytes(std::string_view data, std::uint64_t seed) noexcept {
    return hash_bytes(std::as_bytes(std::span(data.data(), data.size())), seed);
}

/// Hash of a 64-bit integer identifier. Equal to hash_bytes over its 8-byte
/// little-endian encoding, so integer and byte-string elements agree.
std::uint64_t hash_u64(std::uint64_t value, std::uint64_t seed) noexcept;

}  // namespace pspread
