#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pspread/errors.hpp"
#include "pspread/hash.hpp"

namespace pspread {

inline constexpr unsigned kHashBits = 64;
inline constexpr unsigned kDefaultRegisterWidth = 5;

// A 64-bit element hash split into a register index (leading b bits) and
// the remaining 64 - b bits, stored left-aligned in `rest`.
struct HashSplit {
    std::uint32_t index;
    std::uint64_t rest;
    unsigned rest_bits;
};

HashSplit split_hash(std::uint64_t hash, unsigned index_bits) noexcept;

/// Position of the leftmost 1 among the top `length` bits of `bits`
/// (one plus the number of leading zeros). An all-zero prefix yields
/// length + 1.
unsigned rho(std::uint64_t bits, unsigned length) noexcept;

/// Largest value an h-bit register can hold, 2^h - 1.
constexpr std::uint8_t register_cap(unsigned register_width) noexcept {
    return static_cast<std::uint8_t>((1u << register_width) - 1u);
}

/// Register update value for an element hash: min(rho(q), H).
std::uint8_t rank_of(const HashSplit& split, std::uint8_t cap) noexcept;

/// HyperLogLog sketch of s = 2^b registers, each clamped to 2^h - 1.
/// Registers are held one per byte; the h-bit budget is enforced by clamping.
class HllSketch {
public:
    explicit HllSketch(std::uint32_t size, unsigned register_width = kDefaultRegisterWidth);

    /// Adopts existing register values. Throws ParameterError when the size
    /// is not a power of two >= 16 or a value exceeds the register cap.
    static HllSketch from_registers(std::vector<std::uint8_t> registers,
                                    unsigned register_width = kDefaultRegisterWidth);

    std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(registers_.size()); }
    unsigned index_bits() const noexcept { return index_bits_; }
    unsigned register_width() const noexcept { return register_width_; }
    std::uint8_t cap() const noexcept { return register_cap(register_width_); }

    std::span<const std::uint8_t> registers() const noexcept { return registers_; }
    std::uint8_t operator[](std::size_t i) const noexcept { return registers_[i]; }

    void record_hash(std::uint64_t hash) noexcept;
    void record(std::uint64_t element, std::uint64_t seed = kElementHashSeed) noexcept {
        record_hash(hash_u64(element, seed));
    }
    void record(std::span<const std::byte> element, std::uint64_t seed = kElementHashSeed) noexcept {
        record_hash(hash_bytes(element, seed));
    }
    void record(std::string_view element, std::uint64_t seed = kElementHashSeed) noexcept {
        record_hash(hash_bytes(element, seed));
    }

    bool operator==(const HllSketch&) const = default;

private:
    HllSketch(std::vector<std::uint8_t> registers, unsigned index_bits, unsigned register_width)
        : registers_(std::move(registers)), index_bits_(index_bits), register_width_(register_width) {}

    std::vector<std::uint8_t> registers_;
    unsigned index_bits_;
    unsigned register_width_;
};

/// Bias-correction constant: tabulated for 16, 32, 64 and 0.7213/(1+1.079/s)
/// for s >= 128. Any other size is rejected.
double alpha(std::uint64_t register_count);

double raw_estimate(std::span<const std::uint8_t> registers);

/// Harmonic-mean estimate with the linear-counting switch below 2.5 s. Works
/// on any register array whose size alpha() accepts, including whole
/// physical arrays of non power-of-two size.
double estimate_cardinality(std::span<const std::uint8_t> registers);

inline double estimate_cardinality(const HllSketch& sketch) {
    return estimate_cardinality(sketch.registers());
}

// Register-wise max / min. All inputs must share size and register width.
HllSketch union_of(std::span<const HllSketch> sketches);
HllSketch intersect(std::span<const HllSketch> sketches);

}  // namespace pspread
