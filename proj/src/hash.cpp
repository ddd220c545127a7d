#include "pspread/hash.hpp"

#include <cstring>

namespace pspread {

namespace {

constexpr std::uint64_t kMulA = 0x87c37b91114253d5ULL;
constexpr std::uint64_t kMulB = 0x4cf5ad432745937fULL;

constexpr std::uint64_t rotl(std::uint64_t x, int r) noexcept {
    return (x << r) | (x >> (64 - r));
}

constexpr std::uint64_t absorb(std::uint64_t state, std::uint64_t word) noexcept {
    word *= kMulA;
    word = rotl(word, 31);
    word *= kMulB;
    state ^= word;
    state = rotl(state, 27);
    return state * 5 + 0x52dce729;
}

std::uint64_t load_le(const std::byte* p, std::size_t n) noexcept {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

}  // namespace

std::uint64_t hash_bytes(std::span<const std::byte> data, std::uint64_t seed) noexcept {
    std::uint64_t state = mix64(seed ^ (data.size() * kMulB));
    std::size_t i = 0;
    for (; i + 8 <= data.size(); i += 8) {
        state = absorb(state, load_le(data.data() + i, 8));
    }
    if (i < data.size()) {
        // tail word tagged with its length so "a" and "a\0" differ
        const std::size_t rest = data.size() - i;
        state = absorb(state, load_le(data.data() + i, rest) ^ (static_cast<std::uint64_t>(rest) << 56));
    }
    return mix64(state ^ seed);
}

std::uint64_t hash_u64(std::uint64_t value, std::uint64_t seed) noexcept {
    std::uint64_t state = mix64(seed ^ (8 * kMulB));
    state = absorb(state, value);
    return mix64(state ^ seed);
}

}  // namespace pspread
