#include "pspread/virtual_array.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

#include <fmt/format.h>

namespace pspread {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

IntersectionModel view_model(std::span<const HllSketch> sketches, ViewCardinality source,
                             std::span<const PhysicalRegisterArray> arrays, const VirtualSketchLayout& layout,
                             std::string_view flow) {
    IntersectionModel model;
    model.registers = layout.virtual_size();
    model.cap = register_cap(layout.register_width());
    for (std::size_t j = 0; j < sketches.size(); ++j) {
        model.period_cardinalities.push_back(source == ViewCardinality::view_sketch
                                                 ? estimate_cardinality(sketches[j])
                                                 : per_period_flow_cardinality(arrays[j], layout, flow));
    }
    return model;
}

double psi_or_floor(const IntersectionModel& model, double n) {
    // psi is undefined at n = 0; evaluate one element in
    return std::sqrt(psi_squared(model, std::max(n, 1.0)));
}

}  // namespace

SeedTable SeedTable::generate(std::size_t size, std::uint64_t master_seed) {
    if (size == 0) {
        throw ParameterError("seed table needs at least one seed");
    }
    std::mt19937_64 rng(master_seed);
    std::vector<std::uint64_t> seeds;
    seeds.reserve(size);
    std::unordered_set<std::uint64_t> seen;
    while (seeds.size() < size) {
        const std::uint64_t v = rng();
        if (seen.insert(v).second) {
            seeds.push_back(v);
        }
    }
    return SeedTable(std::move(seeds));
}

SeedTable SeedTable::from_seeds(std::vector<std::uint64_t> seeds) {
    if (seeds.empty()) {
        throw ParameterError("seed table needs at least one seed");
    }
    std::unordered_set<std::uint64_t> seen(seeds.begin(), seeds.end());
    if (seen.size() != seeds.size()) {
        throw ParameterError("seed table entries must be pairwise distinct");
    }
    return SeedTable(std::move(seeds));
}

std::uint64_t SeedTable::digest() const noexcept {
    std::uint64_t h = hash_u64(seeds_.size(), kMasterHashSeed);
    for (const std::uint64_t s : seeds_) {
        h = hash_u64(h ^ s, kMasterHashSeed);
    }
    return h;
}

PhysicalRegisterArray::PhysicalRegisterArray(std::uint64_t size, unsigned register_width, std::uint64_t period_id)
    : registers_(size, 0), register_width_(register_width), period_id_(period_id) {
    if (size == 0) {
        throw ParameterError("physical array needs at least one register");
    }
    if (register_width < 1 || register_width > 8) {
        throw ParameterError(fmt::format("register width {} outside [1, 8]", register_width));
    }
}

PhysicalRegisterArray PhysicalRegisterArray::from_registers(std::vector<std::uint8_t> registers,
                                                            unsigned register_width, std::uint64_t period_id) {
    PhysicalRegisterArray out(registers.size(), register_width, period_id);
    const std::uint8_t cap = out.cap();
    for (std::size_t i = 0; i < registers.size(); ++i) {
        if (registers[i] > cap) {
            throw ParameterError(fmt::format("register {} holds {} above cap {}", i, registers[i], cap));
        }
    }
    out.registers_ = std::move(registers);
    return out;
}

std::uint64_t flow_fingerprint(std::string_view flow) noexcept {
    return hash_bytes(flow, kMasterHashSeed);
}

std::uint64_t physical_index(std::uint64_t fingerprint, std::uint64_t seed, std::uint64_t m) noexcept {
    return hash_u64(fingerprint ^ seed, kMasterHashSeed) % m;
}

std::vector<std::uint64_t> virtual_indices(std::string_view flow, const SeedTable& seeds, std::uint64_t m) {
    if (seeds.size() > m) {
        throw ParameterError(fmt::format("virtual size {} exceeds physical size {}", seeds.size(), m));
    }
    const std::uint64_t fp = flow_fingerprint(flow);
    std::vector<std::uint64_t> out(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        out[i] = physical_index(fp, seeds[i], m);
    }
    return out;
}

VirtualSketchLayout::VirtualSketchLayout(std::uint32_t virtual_size, std::uint64_t physical_size,
                                         unsigned register_width, SeedTable seeds)
    : virtual_size_(virtual_size),
      physical_size_(physical_size),
      register_width_(register_width),
      index_bits_(0),
      seeds_(std::move(seeds)) {
    if (virtual_size < 16 || !std::has_single_bit(virtual_size)) {
        throw ParameterError(fmt::format("virtual size {} is not a power of two >= 16", virtual_size));
    }
    if (physical_size <= virtual_size) {
        throw ParameterError(fmt::format("physical size m = {} must exceed virtual size s = {}", physical_size,
                                         virtual_size));
    }
    if (physical_size < 128) {
        throw ParameterError(fmt::format("physical size m = {} below 128", physical_size));
    }
    if (register_width < 1 || register_width > 8) {
        throw ParameterError(fmt::format("register width {} outside [1, 8]", register_width));
    }
    if (seeds_.size() != virtual_size) {
        throw ParameterError(fmt::format("seed table has {} seeds, virtual size is {}", seeds_.size(),
                                         virtual_size));
    }
    index_bits_ = static_cast<unsigned>(std::countr_zero(virtual_size));
}

VirtualSketchLayout VirtualSketchLayout::from_memory_bits(std::uint64_t memory_bits, std::uint32_t virtual_size,
                                                          unsigned register_width, std::uint64_t master_seed) {
    if (register_width == 0) {
        throw ParameterError("register width must be positive");
    }
    return VirtualSketchLayout(virtual_size, memory_bits / register_width, register_width,
                               SeedTable::generate(virtual_size, master_seed));
}

void VirtualSketchLayout::check_array(const PhysicalRegisterArray& array) const {
    if (array.size() != physical_size_ || array.register_width() != register_width_) {
        throw ParameterError(fmt::format("array m={} h={} does not match layout m={} h={}", array.size(),
                                         array.register_width(), physical_size_, register_width_));
    }
}

void record_hashed(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::uint64_t fingerprint,
                   std::uint64_t element_hash) noexcept {
    const HashSplit split = split_hash(element_hash, layout.index_bits());
    array.raise(layout.slot(fingerprint, split.index), rank_of(split, array.cap()));
}

void record(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::string_view flow,
            std::uint64_t element) {
    layout.check_array(array);
    record_hashed(array, layout, flow_fingerprint(flow), hash_u64(element, kElementHashSeed));
}

void record(PhysicalRegisterArray& array, const VirtualSketchLayout& layout, std::string_view flow,
            std::span<const std::byte> element) {
    layout.check_array(array);
    record_hashed(array, layout, flow_fingerprint(flow), hash_bytes(element, kElementHashSeed));
}

HllSketch extract_virtual_sketch(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                 std::span<const std::uint64_t> indices) {
    layout.check_array(array);
    if (indices.size() != layout.virtual_size()) {
        throw ParameterError(fmt::format("view has {} indices, layout needs {}", indices.size(),
                                         layout.virtual_size()));
    }
    std::vector<std::uint8_t> regs(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        regs[i] = array[indices[i]];
    }
    return HllSketch::from_registers(std::move(regs), layout.register_width());
}

HllSketch extract_virtual_sketch(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                 std::string_view flow) {
    const auto indices = virtual_indices(flow, layout.seeds(), layout.physical_size());
    return extract_virtual_sketch(array, layout, indices);
}

double remove_noise(std::uint64_t m, std::uint32_t s, double view_persistent, double background_persistent) {
    const double md = static_cast<double>(m);
    const double sd = static_cast<double>(s);
    return md * sd / (md - sd) * (view_persistent / sd - background_persistent / md);
}

double per_period_flow_cardinality(const PhysicalRegisterArray& array, const VirtualSketchLayout& layout,
                                   std::string_view flow) {
    const HllSketch view = extract_virtual_sketch(array, layout, flow);
    const double n_view = estimate_cardinality(view);
    const double n_array = estimate_cardinality(array.registers());
    return std::max(0.0, remove_noise(layout.physical_size(), layout.virtual_size(), n_view, n_array));
}

BackgroundEstimate estimate_background(std::span<const PhysicalRegisterArray> arrays,
                                       const VirtualSketchLayout& layout) {
    if (arrays.size() < 2) {
        throw ParameterError(fmt::format("persistent query needs t >= 2 arrays, got {}", arrays.size()));
    }
    for (const auto& a : arrays) {
        layout.check_array(a);
    }
    std::vector<std::uint8_t> cap_regs(arrays.front().registers().begin(), arrays.front().registers().end());
    for (const auto& a : arrays.subspan(1)) {
        const auto regs = a.registers();
        for (std::size_t i = 0; i < cap_regs.size(); ++i) {
            cap_regs[i] = std::min(cap_regs[i], regs[i]);
        }
    }
    BackgroundEstimate out;
    out.model.registers = layout.physical_size();
    out.model.cap = register_cap(layout.register_width());
    for (const auto& a : arrays) {
        out.period_totals.push_back(estimate_cardinality(a.registers()));
    }
    out.model.period_cardinalities = out.period_totals;
    out.persistent = mle_estimate(out.model, histogram(cap_regs, out.model.cap));
    return out;
}

VirtualEstimate vi_hll_estimate(std::span<const PhysicalRegisterArray> arrays, const VirtualSketchLayout& layout,
                                std::string_view flow, const BackgroundEstimate& background,
                                ViewCardinality source, double confidence) {
    if (arrays.size() < 2) {
        throw ParameterError(fmt::format("persistent query needs t >= 2 arrays, got {}", arrays.size()));
    }
    if (background.period_totals.size() != arrays.size()) {
        throw ParameterError("background estimate covers a different number of periods");
    }
    const auto indices = virtual_indices(flow, layout.seeds(), layout.physical_size());
    std::vector<HllSketch> views;
    views.reserve(arrays.size());
    for (const auto& a : arrays) {
        views.push_back(extract_virtual_sketch(a, layout, indices));
    }

    const IntersectionModel model_s = view_model(views, source, arrays, layout, flow);
    const PersistentEstimate view_est = mle_estimate(model_s, histogram(intersect(views)), confidence);

    const std::uint64_t m = layout.physical_size();
    const std::uint32_t s = layout.virtual_size();
    VirtualEstimate out;
    out.view_persistent = view_est.n_star_hat;
    out.background_persistent = background.persistent.n_star_hat;
    out.raw = remove_noise(m, s, out.view_persistent, out.background_persistent);

    PersistentEstimate& est = out.estimate;
    est.iterations = view_est.iterations;
    est.bracket_low = view_est.bracket_low;
    est.bracket_high = view_est.bracket_high;
    est.boundary = view_est.boundary;
    est.clamped = out.raw < 0.0;
    est.n_star_hat = std::max(0.0, out.raw);

    const double psi_s = psi_or_floor(model_s, out.view_persistent);
    const double psi_m = psi_or_floor(background.model, out.background_persistent);
    try {
        out.noise_sd = std::sqrt(vi_hll_variance(m, s, 0.0, out.background_persistent, psi_s, psi_m));
    } catch (const ModelError&) {
        out.noise_sd = kNaN;
    }
    double sd = kNaN;
    try {
        sd = std::sqrt(vi_hll_variance(m, s, est.n_star_hat, out.background_persistent, psi_s, psi_m));
    } catch (const ModelError&) {
    }
    est.rel_stderr = est.n_star_hat > 0.0 ? sd / est.n_star_hat : std::numeric_limits<double>::infinity();
    const double half = normal_quantile_two_sided(confidence) * sd;
    est.ci_low = est.n_star_hat - half;
    est.ci_high = est.n_star_hat + half;
    return out;
}

VirtualEstimate vi_hll_estimate(std::span<const PhysicalRegisterArray> arrays, const VirtualSketchLayout& layout,
                                std::string_view flow) {
    return vi_hll_estimate(arrays, layout, flow, estimate_background(arrays, layout));
}

double vi_hll_variance(std::uint64_t m, std::uint32_t s, double n_star, double n_union_star, double psi_s,
                       double psi_m) {
    if (m <= s) {
        throw ParameterError(fmt::format("m = {} must exceed s = {}", m, s));
    }
    const double md = static_cast<double>(m);
    const double sd = static_cast<double>(s);
    const double share = sd / md;
    const double noise = share * (n_union_star - n_star);  // E(Y)
    const double rel_s = 1.0 / (sd * psi_s * psi_s);
    const double view = n_star + noise;
    const double inside = rel_s * view * view + (rel_s + 1.0) * noise * (1.0 - share) -
                          share * share * n_union_star * n_union_star / (md * psi_m * psi_m);
    if (inside < 0.0) {
        throw ModelError(fmt::format("variance radicand {} is negative (m={}, s={}, n*={}, n_u*={})", inside, m, s,
                                     n_star, n_union_star));
    }
    const double factor = md / (md - sd);
    return factor * factor * inside;
}

double vi_hll_theoretical_stderr(std::uint64_t m, std::uint32_t s, double n_star, double n_union_star,
                                 double psi_s, double psi_m) {
    if (!(n_star > 0.0)) {
        throw ParameterError(fmt::format("relative stderr needs n* > 0, got {}", n_star));
    }
    return std::sqrt(vi_hll_variance(m, s, n_star, n_union_star, psi_s, psi_m)) / n_star;
}

}  // namespace pspread
