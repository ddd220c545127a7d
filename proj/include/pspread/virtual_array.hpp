#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pspread/hll.hpp"
#include "pspread/persistent_estimator.hpp"

namespace pspread {

/// s pairwise-distinct 64-bit seeds R[0..s-1], shared by every period and
/// every flow. Regenerated deterministically from a master seed.
class SeedTable {
public:
    static SeedTable generate(std::size_t size, std::uint64_t master_seed);
    static SeedTable from_seeds(std::vector<std::uint64_t> seeds);

    std::size_t size() const noexcept { return seeds_.size(); }
    std::span<const std::uint64_t> seeds() const noexcept { return seeds_; }
    std::uint64_t operator[](std::size_t i) const noexcept { return seeds_[i]; }

    /// Order-sensitive digest used to check that snapshots share a table.
    std::uint64_t digest() const noexcept;

    bool operator==(const SeedTable&) const = default;

private:
    explicit SeedTable(std::vector<std::uint64_t> seeds) : seeds_(std::move(seeds)) {}
    std::vector<std::uint64_t> seeds_;
};

/// Pool of m shared h-bit registers recording every flow of one period.
class PhysicalRegisterArray {
public:
    PhysicalRegisterArray(std::uint64_t size, unsigned register_width, std::uint64_t period_id);

    static PhysicalRegisterArray from_registers(std::vector<std::uint8_t> registers, unsigned register_width,
                                                std::uint64_t period_id);

    std::uint64_t size() const noexcept { return registers_.size(); }
    unsigned register_width() const noexcept { return register_width_; }
    std::uint8_t cap() const noexcept { return register_cap(register_width_); }
    std::uint64_t period_id() const noexcept { return period_id_; }
    std::span<const std::uint8_t> registers() const noexcept { return registers_; }
    std::uint8_t operator[](std::size_t i) const noexcept { return registers_[i]; }

    void raise(std::uint64_t index, std::uint8_t value) noexcept {
        auto& reg = registers_[index];
        if (value > reg) {
            reg = value;
        }
    }

    bool operator==(const PhysicalRegisterArray&) const = default;

private:
    std::vector<std::uint8_t> registers_;
    unsigned register_width_;
    std::uint64_t period_id_;
};

// 64-bit flow fingerprint; labels of any length reduce to this before seeding.
std::uint64_t flow_fingerprint(std::string_view flow) noexcept;

// H(fingerprint XOR R[i]) mod m.
std::uint64_t physical_index(std::uint64_t fingerprint, std::uint64_t seed, std::uint64_t m) noexcept;

/// The s physical indices backing a flow's virtual sketch.
std::vector<std::uint64_t> virtual_indices(std::string_view flow, const SeedTable& seeds, std::uint64_t m);

/// Shared configuration of a VI-HLL deployment: virtual size s, physical size
/// m, register width h and the seed table.
class VirtualSketchLayout {
public:
    VirtualSketchLayout(std::uint32_t virtual_size, std::uint64_t physical_size, unsigned register_width,
                        SeedTable seeds);

    /// m = floor(memory_bits / h); seeds generated from master_seed.
    static VirtualSketchLayout from_memory_bits(std::uint64_t memory_bits, std::uint32_t virtual_size,
                                                unsigned register_width, std::uint64_t master_seed);

    std::uint32_t virtual_size() const noexcept { return virtual_size_; }
    std::uint64_t physical_size() const noexcept { return physical_size_; }
    unsigned register_width() const noexcept { return register_width_; }
    unsigned index_bits() const noexcept { return index_bits_; }
    const SeedTable& seeds() const noexcept { return seeds_; }

    std::uint64_t slot(std::uint64_t fingerprint, std::uint32_t virtual_index) const noexcept {
        return physical_index(fingerprint, seeds_[virtual_index], physical_size_);
    }

    PhysicalRegisterArray make_array(std::uint64_t period_id) const {
        return PhysicalRegisterArray(physical_size_, register_width_, period_id);
    }

    /// Throws ParameterError when the array's m or h differ from the layout.
    void check_array(const PhysicalRegisterArray& array) const;

private:
    std::uint32_t virtual_size_;
    std::uint64_t physical_size_;
    unsigned register_width_;
    unsigned index_bits_;
    SeedTable seeds_;
};

/// Records one <flow, element> pair: one physical register is raised to
/// min(rho(q), H), at A[H(flow XOR R[p])].
void record(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::string_view flow,
            std::uint64_t element);
void record(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::string_view flow,
            std::span<const std::byte> element);

// Hot-path form for callers that cache the flow fingerprint.
void record_hashed(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::uint64_t fingerprint,
                   std::uint64_t element_hash) noexcept;

HllSketch extract_virtual_sketch(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                 std::string_view flow);
HllSketch extract_virtual_sketch(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                 std::span<const std::uint64_t> indices);

/// Single-period spread of a flow with the shared-register noise removed:
/// (ms/(m-s)) (n_view/s - n_array/m), clamped at 0.
double per_period_flow_cardinality(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                   std::string_view flow);

/// Persistent spread of all flows together, f_t(m, A_cap, {A_j}). Identical
/// for every queried flow, so callers compute it once per period set.
struct BackgroundEstimate {
    PersistentEstimate persistent;
    std::vector<double> period_totals;
    IntersectionModel model;
};

BackgroundEstimate estimate_background(std::span<const PhysicalRegisterArray> arrays,
                                       const VirtualSketchLayout& layout);

// Source of the per-period n_j fed to the per-flow intersection model.
enum class ViewCardinality {
    view_sketch,     // estimate_cardinality of the extracted virtual sketch
    noise_corrected, // per_period_flow_cardinality
};

struct VirtualEstimate {
    PersistentEstimate estimate;
    double raw = 0.0;              // noise-removed value before clamping
    double view_persistent = 0.0;  // n^_s*
    double background_persistent = 0.0;  // n^_u*
    double noise_sd = 0.0;         // predicted sd of raw for a flow with n* = 0
};

/// Three-step VI-HLL query: per-flow intersection estimate, whole-array
/// intersection estimate, and noise removal. The result is clamped at 0
/// (estimate.clamped set); its stderr and interval come from the closed-form
/// variance at the plug-in values.
VirtualEstimate vi_hll_estimate(std::span<const PhysicalRegisterArray> arrays, const VirtualSketchLayout& layout,
                                std::string_view flow, const BackgroundEstimate& background,
                                ViewCardinality source = ViewCardinality::view_sketch,
                                double confidence = kDefaultConfidence);

VirtualEstimate vi_hll_estimate(std::span<const PhysicalRegisterArray> arrays, const VirtualSketchLayout& layout,
                                std::string_view flow);

/// ms/(m-s) (n_s/s - n_u/m), unclamped.
double remove_noise(std::uint64_t m, std::uint32_t s, double view_persistent, double background_persistent);

/// Closed-form Var(n^*) for the noise-removed estimator. Valid for n* >= 0.
/// Throws ModelError when the expression is negative.
double vi_hll_variance(std::uint64_t m, std::uint32_t s, double n_star, double n_union_star, double psi_s,
                       double psi_m);

/// sqrt(Var(n^*)) / n*. Requires m > s and n* > 0.
double vi_hll_theoretical_stderr(std::uint64_t m, std::uint32_t s, double n_star, double n_union_star,
                                 double psi_s, double psi_m);

}  // namespace pspread
