#include "pspread/hll.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

namespace pspread {

namespace {

void check_width(unsigned register_width) {
    if (register_width < 1 || register_width > 8) {
        throw ParameterError(fmt::format("register width {} outside [1, 8]", register_width));
    }
}

void check_size(std::uint64_t size) {
    if (size < 16 || !std::has_single_bit(size) || size > (1ULL << 31)) {
        throw ParameterError(fmt::format("sketch size {} is not a power of two in [16, 2^31]", size));
    }
}

void check_compatible(std::span<const HllSketch> sketches) {
    if (sketches.empty()) {
        throw ParameterError("register-wise merge of zero sketches");
    }
    const auto& first = sketches.front();
    for (const auto& other : sketches.subspan(1)) {
        if (other.size() != first.size() || other.register_width() != first.register_width()) {
            throw ParameterError(fmt::format("sketch mismatch: s={} h={} vs s={} h={}", first.size(),
                                             first.register_width(), other.size(), other.register_width()));
        }
    }
}

template <typename Op>
HllSketch merge(std::span<const HllSketch> sketches, Op op) {
    check_compatible(sketches);
    std::vector<std::uint8_t> out(sketches.front().registers().begin(), sketches.front().registers().end());
    for (const auto& sk : sketches.subspan(1)) {
        const auto regs = sk.registers();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = op(out[i], regs[i]);
        }
    }
    return HllSketch::from_registers(std::move(out), sketches.front().register_width());
}

}  // namespace

HashSplit split_hash(std::uint64_t hash, unsigned index_bits) noexcept {
    if (index_bits == 0) {
        return {0, hash, kHashBits};
    }
    return {static_cast<std::uint32_t>(hash >> (kHashBits - index_bits)), hash << index_bits,
            kHashBits - index_bits};
}

unsigned rho(std::uint64_t bits, unsigned length) noexcept {
    // bits beyond `length` are ignored
    const std::uint64_t masked = length >= 64 ? bits : bits & ~(~0ULL >> length);
    if (masked == 0) {
        return length + 1;
    }
    return static_cast<unsigned>(std::countl_zero(masked)) + 1;
}

std::uint8_t rank_of(const HashSplit& split, std::uint8_t cap) noexcept {
    return static_cast<std::uint8_t>(std::min<unsigned>(rho(split.rest, split.rest_bits), cap));
}

HllSketch::HllSketch(std::uint32_t size, unsigned register_width)
    : index_bits_(0), register_width_(register_width) {
    check_size(size);
    check_width(register_width);
    registers_.assign(size, 0);
    index_bits_ = static_cast<unsigned>(std::countr_zero(size));
}

HllSketch HllSketch::from_registers(std::vector<std::uint8_t> registers, unsigned register_width) {
    check_size(registers.size());
    check_width(register_width);
    const std::uint8_t cap = register_cap(register_width);
    for (std::size_t i = 0; i < registers.size(); ++i) {
        if (registers[i] > cap) {
            throw ParameterError(fmt::format("register {} holds {} above cap {}", i, registers[i], cap));
        }
    }
    const auto bits = static_cast<unsigned>(std::countr_zero(registers.size()));
    return HllSketch(std::move(registers), bits, register_width);
}

void HllSketch::record_hash(std::uint64_t hash) noexcept {
    const HashSplit split = split_hash(hash, index_bits_);
    auto& reg = registers_[split.index];
    reg = std::max(reg, rank_of(split, cap()));
}

double alpha(std::uint64_t register_count) {
    switch (register_count) {
        case 16: return 0.673;
        case 32: return 0.697;
        case 64: return 0.709;
        default: break;
    }
    if (register_count < 128) {
        throw ParameterError(fmt::format("no bias-correction constant for {} registers", register_count));
    }
    return 0.7213 / (1.0 + 1.079 / static_cast<double>(register_count));
}

double raw_estimate(std::span<const std::uint8_t> registers) {
    const auto s = static_cast<double>(registers.size());
    double sum = 0.0;
    for (const std::uint8_t r : registers) {
        sum += std::ldexp(1.0, -static_cast<int>(r));
    }
    return alpha(registers.size()) * s * s / sum;
}

double estimate_cardinality(std::span<const std::uint8_t> registers) {
    const double raw = raw_estimate(registers);
    const auto s = static_cast<double>(registers.size());
    if (raw >= 2.5 * s) {
        return raw;
    }
    const auto zeros = std::count(registers.begin(), registers.end(), std::uint8_t{0});
    if (zeros == 0) {
        return raw;
    }
    // -s ln V written as s ln(1/V) so an empty sketch yields +0
    return s * std::log(s / static_cast<double>(zeros));
}

HllSketch union_of(std::span<const HllSketch> sketches) {
    return merge(sketches, [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

HllSketch intersect(std::span<const HllSketch> sketches) {
    return merge(sketches, [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

}  // namespace pspread
