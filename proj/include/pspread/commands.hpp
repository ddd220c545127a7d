#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pspread/persistent_estimator.hpp"
#include "pspread/sketch_store.hpp"
#include "pspread/traffic_sim.hpp"
#include "pspread/virtual_array.hpp"

namespace pspread {

// Failure reported by a command, tagged with a machine-parsable class:
// missing-file, parameter-mismatch, infeasible-config or invalid-input.
class CommandError : public std::runtime_error {
public:
    CommandError(std::string error_class, const std::string& what)
        : std::runtime_error(what), error_class_(std::move(error_class)) {}

    const std::string& error_class() const noexcept { return error_class_; }

private:
    std::string error_class_;
};

enum class EstimatorKind {
    vi_hll,
    i_hll_dedicated,
    union_baseline,
};

EstimatorKind parse_estimator(std::string_view name);
const char* to_string(EstimatorKind kind) noexcept;

// Two-sided 98% normal quantile: a flow with no persistent elements is
// flagged as noise unless its raw estimate exceeds this many noise sds.
inline constexpr double kDefaultNoiseZ = 2.326;

struct ExperimentConfig {
    std::uint64_t memory_bits = 167'772;
    std::uint32_t s = 512;
    unsigned h = kDefaultRegisterWidth;
    std::uint64_t seed = 1;
    EstimatorKind estimator = EstimatorKind::vi_hll;
    double confidence = kDefaultConfidence;
    double noise_z = kDefaultNoiseZ;

    std::uint64_t physical_size() const noexcept { return memory_bits / h; }
    /// Throws CommandError(infeasible-config) unless m = floor(M/h) > s and
    /// the layout parameters are valid.
    VirtualSketchLayout layout() const;
};

// Parameters a caller pinned explicitly; checked against stored snapshots.
struct ExpectedParameters {
    std::optional<std::uint64_t> m;
    std::optional<std::uint32_t> s;
    std::optional<unsigned> h;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> t;
};

struct GenerateOutput {
    std::filesystem::path trace;
    std::filesystem::path truth;
};

/// Writes <out>/trace.tsv and <out>/truth.tsv.
GenerateOutput cmd_generate(const TraceSpec& spec, const std::filesystem::path& out_dir);

/// One streaming pass over the trace. vi-hll writes one physical array per
/// period plus <out>/manifest.json; the dedicated estimators keep one sketch
/// per listed flow and write <out>/flow-<k>/ manifests indexed by
/// <out>/flows.tsv. Returns the manifest (vi-hll) or index path.
std::filesystem::path cmd_record(const std::filesystem::path& trace, const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir, std::span<const std::string> flows = {});

struct QueryRow {
    std::string flow;
    PersistentEstimate estimate;
    double raw = 0.0;      // unsuppressed, clamped estimate used by evaluation
    bool noise = false;
};

/// Per-flow estimates from a manifest (vi-hll) or flow index (dedicated).
/// A vi-hll flow whose noise-removed value is below noise_z noise sds is
/// flagged as noise and reported as 0.
std::vector<QueryRow> query_flows(const std::filesystem::path& manifest_or_index, std::span<const std::string> flows,
                                  const ExperimentConfig& config, const ExpectedParameters& expected = {});

/// CSV: flow,n_star_hat,stderr,ci_low,ci_high,flags. stderr is relative.
void write_query_csv(std::ostream& out, std::span<const QueryRow> rows);

void cmd_query(const std::filesystem::path& manifest_or_index, std::span<const std::string> flows,
               const ExperimentConfig& config, const ExpectedParameters& expected, std::ostream& csv);

struct ScatterPoint {
    std::string flow;
    double n_star = 0.0;
    double n_star_hat = 0.0;
};

struct BucketMetrics {
    double low = 0.0;   // inclusive
    double high = 0.0;  // exclusive
    std::size_t count = 0;
    std::size_t excluded_zero_truth = 0;
    double bias = 0.0;
    double stderr_ratio = 0.0;
};

inline const std::vector<double> kDefaultBucketEdges{1, 10, 100, 500, 1000, 5000, 20000, 1e300};

/// Groups points by true n* into [edge_i, edge_{i+1}). Empty buckets report
/// NaN metrics.
std::vector<BucketMetrics> bucket_metrics(std::span<const ScatterPoint> points, std::span<const double> edges);

// CSV: bucket_low,bucket_high,count,excluded_zero_truth,relative_bias,relative_stderr
void write_metrics_csv(std::ostream& out, std::span<const BucketMetrics> rows);
// CSV: flow,n_star,n_star_hat
void write_scatter_csv(std::ostream& out, std::span<const ScatterPoint> points);

// Which truth rows to evaluate: all, the first `count`, or listed labels.
struct FlowSelection {
    std::optional<std::size_t> first;
    std::vector<std::string> labels;
};

/// Joins estimates with truth and writes <out>/metrics.csv and
/// <out>/scatter.csv. `estimates` is a manifest or flow index (queried here,
/// unsuppressed), a query CSV, or a truth file read as estimates. Without a
/// selection, a query CSV is evaluated on the flows it lists.
std::vector<BucketMetrics> cmd_evaluate(const std::filesystem::path& estimates, const std::filesystem::path& truth,
                                        const ExperimentConfig& config, const FlowSelection& selection,
                                        std::span<const double> bucket_edges, const std::filesystem::path& out_dir);

/// Records a generated trace into every layout with one generation pass per
/// period, then queries flows [0, query_flows) in each layout.
std::vector<std::vector<ScatterPoint>> simulate_vi_hll(const TraceGenerator& generator,
                                                       std::span<const VirtualSketchLayout> layouts,
                                                       std::size_t query_flows);

/// Dedicated per-flow sketches for flows [0, query_flows), estimated with
/// the intersection MLE or the union baseline.
std::vector<ScatterPoint> simulate_dedicated(const TraceGenerator& generator, std::uint32_t s, unsigned h,
                                             EstimatorKind estimator, std::size_t query_flows);

struct SweepGrid {
    std::vector<std::uint64_t> memory_bits{167'772};
    std::vector<std::uint32_t> s{512};
    std::vector<std::size_t> t{10};
    std::vector<double> snr{1.0};
    unsigned h = kDefaultRegisterWidth;
    std::uint64_t seed = 1;
    EstimatorKind estimator = EstimatorKind::vi_hll;
    std::size_t trials = 1;
    std::vector<std::uint64_t> probe_spreads{500, 1000, 5000, 20000};
    std::size_t probes_per_spread = 1;
    std::optional<std::size_t> flow_count;  // defaults to the desk-scale population
    std::vector<double> bucket_edges = kDefaultBucketEdges;
};

/// Desk-scale sweep over the grid. Writes <out>/point-<i>.csv (metrics) and
/// <out>/point-<i>-scatter.csv per grid point and <out>/sweep.csv indexing
/// them. Returns the number of grid points.
std::size_t cmd_sweep(const SweepGrid& grid, const std::filesystem::path& out_dir);

}  // namespace pspread
