#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pspread {

// Truncated discrete power law: n = min(floor(minimum * u^(-1/exponent)), maximum).
struct PowerLawSpreads {
    double exponent = 1.5;
    std::uint64_t minimum = 1;
    std::uint64_t maximum = 1000;

    double expected_value() const;
};

/// Parameters of a synthetic multi-period trace. Flow i < persistent_spreads.size()
/// gets the listed persistent spread; remaining flows draw theirs from power_law.
struct TraceSpec {
    std::size_t flow_count = 1;
    std::size_t periods = 2;
    std::vector<std::uint64_t> persistent_spreads;
    std::optional<PowerLawSpreads> power_law;
    // one entry (applied to every period) or one per period; +inf means no transients
    std::vector<double> snr{1.0};
    unsigned element_bits = 32;
    std::uint64_t master_seed = 1;

    void validate() const;
    double snr_at(std::size_t period) const;
    /// round(n*/SNR_j), the transient count of a flow in period j (1-based).
    std::uint64_t transient_count(std::uint64_t persistent, std::size_t period) const;

    /// One-hundredth of the reference population: 114,530 flows averaging
    /// about 10.9 distinct elements per period, with `probe_spreads` flows
    /// listed first and a power-law background tuned to the element budget.
    static TraceSpec desk_scale(std::uint64_t master_seed, std::size_t periods, double snr,
                                std::vector<std::uint64_t> probe_spreads);
};

inline constexpr std::size_t kDeskScaleFlows = 114'530;
inline constexpr double kDeskScaleMeanCardinality = 10.90;

struct TraceRecord {
    std::size_t period;  // 1-based
    std::string flow;
    std::uint64_t element;

    bool operator==(const TraceRecord&) const = default;
};

struct FlowTruth {
    std::string flow;
    std::uint64_t n_star = 0;
    std::vector<std::uint64_t> period_spreads;

    bool operator==(const FlowTruth&) const = default;
};

using GroundTruth = std::vector<FlowTruth>;

// Element sets of one flow: the persistent set and each period's transients.
struct FlowSets {
    std::vector<std::uint64_t> persistent;
    std::vector<std::vector<std::uint64_t>> transient;  // index j-1 for period j
};

std::string synthetic_flow_label(std::size_t flow_index);

/// Deterministic generator. Every flow's sets derive from (master_seed, flow,
/// period) alone, so flows can be materialized independently.
class TraceGenerator {
public:
    explicit TraceGenerator(TraceSpec spec);

    const TraceSpec& spec() const noexcept { return spec_; }
    std::size_t flow_count() const noexcept { return targets_.size(); }
    const std::string& label(std::size_t flow) const { return labels_[flow]; }
    std::uint64_t target_spread(std::size_t flow) const { return targets_[flow]; }

    FlowSets flow_sets(std::size_t flow) const;

    /// Visits every <flow, element> pair of one period (1-based) in shuffled order.
    void for_each_record(std::size_t period,
                         const std::function<void(std::size_t flow, std::uint64_t element)>& visit) const;

    /// Exact n* and n_j of one flow, computed from its materialized sets.
    FlowTruth flow_truth(std::size_t flow) const;
    GroundTruth ground_truth() const;

    void write_trace(std::ostream& out) const;

private:
    TraceSpec spec_;
    std::vector<std::uint64_t> targets_;
    std::vector<std::string> labels_;
};

// Trace file: header "#spread-trace v1 t=<t>", then "period\tflow\telement" lines.
void write_trace_header(std::ostream& out, std::size_t periods);

/// Streams records from a trace file, checking the header and that periods are
/// contiguous and ascending. Returns t. Throws std::runtime_error on malformed input.
std::size_t read_trace(std::istream& in, const std::function<void(const TraceRecord&)>& visit);

// Truth sidecar: "flow\tn_star\tn_1,...,n_t" per line.
void write_truth(std::ostream& out, const GroundTruth& truth);
GroundTruth read_truth(std::istream& in);

/// |S_1 ∩ ... ∩ S_t| of one flow over the given records.
std::uint64_t exact_persistent_spread(std::span<const TraceRecord> records, std::string_view flow,
                                      std::size_t periods);

struct AccuracySummary {
    double bias = 0.0;
    double stderr_ratio = 0.0;
    std::size_t used = 0;
    std::size_t excluded_zero_truth = 0;
};

/// Sample mean of n^/n minus one and sample standard deviation of n^/n over
/// pairs with nonzero truth. Throws ParameterError on empty or unequal inputs
/// or when every truth is zero.
AccuracySummary accuracy(std::span<const double> estimates, std::span<const double> truths);
double relative_bias(std::span<const double> estimates, std::span<const double> truths);
double relative_stderr(std::span<const double> estimates, std::span<const double> truths);

}  // namespace pspread
