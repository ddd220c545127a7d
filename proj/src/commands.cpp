#include "pspread/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "pspread/errors.hpp"
#include "pspread/hash.hpp"

namespace pspread {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw CommandError("missing-file", fmt::format("no such file: {}", path.string()));
    }
}

void create_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw CommandError("invalid-input", fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw CommandError("invalid-input", fmt::format("cannot write {}", path.string()));
    }
    return out;
}

std::string csv_field(std::string_view text) {
    if (text.find_first_of(",\"\n") == std::string_view::npos) {
        return std::string(text);
    }
    std::string out = "\"";
    for (const char c : text) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string first_line(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

Snapshot load_snapshot(const std::filesystem::path& path) {
    require_file(path);
    try {
        return load(path);
    } catch (const SnapshotError& e) {
        throw CommandError("invalid-input", fmt::format("{}: {} ({})", path.string(), e.what(), to_string(e.code())));
    }
}

Manifest load_manifest(const std::filesystem::path& path) {
    require_file(path);
    try {
        return read_manifest(path);
    } catch (const ParameterError& e) {
        throw CommandError("invalid-input", e.what());
    } catch (const SnapshotError& e) {
        throw CommandError("invalid-input", e.what());
    }
}

void check_expected(const Manifest& m, const ExpectedParameters& expected) {
    const auto mismatch = [](std::string_view what, auto want, auto got) {
        throw CommandError("parameter-mismatch", fmt::format("{} is {} in the snapshots but {} was requested", what,
                                                             got, want));
    };
    if (expected.m && *expected.m != m.register_count) {
        mismatch("m", *expected.m, m.register_count);
    }
    if (expected.s && *expected.s != m.virtual_size) {
        mismatch("s", *expected.s, m.virtual_size);
    }
    if (expected.h && *expected.h != m.register_width) {
        mismatch("h", *expected.h, m.register_width);
    }
    if (expected.seed && *expected.seed != m.master_seed) {
        mismatch("seed", *expected.seed, m.master_seed);
    }
    if (expected.t && *expected.t != m.periods()) {
        mismatch("t", *expected.t, m.periods());
    }
}

// Loads the snapshots of a manifest, checking each against its header fields.
std::vector<Snapshot> load_periods(const Manifest& m) {
    std::vector<Snapshot> out;
    for (std::size_t i = 0; i < m.periods(); ++i) {
        Snapshot snap = load_snapshot(m.paths[i]);
        if (snap.kind != m.kind || snap.registers.size() != m.register_count ||
            snap.register_width != m.register_width || snap.seed_digest != m.seed_digest ||
            snap.period_id != m.period_ids[i]) {
            throw CommandError("parameter-mismatch",
                               fmt::format("{} does not match its manifest entry", m.paths[i].string()));
        }
        out.push_back(std::move(snap));
    }
    return out;
}

PersistentEstimate estimate_dedicated(std::span<const HllSketch> sketches, EstimatorKind estimator,
                                      double confidence) {
    if (estimator == EstimatorKind::i_hll_dedicated) {
        return mle_estimate(sketches, confidence);
    }
    PersistentEstimate est;
    const double raw = union_baseline_estimate(sketches);
    est.clamped = raw < 0.0;
    est.n_star_hat = std::max(0.0, raw);
    est.rel_stderr = kNaN;
    est.ci_low = kNaN;
    est.ci_high = kNaN;
    return est;
}

void check_dedicated_periods(EstimatorKind estimator, std::size_t t) {
    if (t < 2) {
        throw CommandError("infeasible-config", fmt::format("persistent queries need t >= 2, got {}", t));
    }
    if (estimator == EstimatorKind::union_baseline && t > kUnionBaselineMaxPeriods) {
        throw CommandError("infeasible-config", fmt::format("the union baseline supports t <= {}, got {}",
                                                            kUnionBaselineMaxPeriods, t));
    }
}

QueryRow query_sketch_manifest(const Manifest& m, const ExperimentConfig& config) {
    check_dedicated_periods(config.estimator, m.periods());
    std::vector<HllSketch> sketches;
    for (const auto& snap : load_periods(m)) {
        try {
            sketches.push_back(snap.to_sketch());
        } catch (const ParameterError& e) {
            throw CommandError("invalid-input", e.what());
        }
    }
    QueryRow row;
    row.flow = m.flow;
    row.estimate = estimate_dedicated(sketches, config.estimator, config.confidence);
    row.raw = row.estimate.n_star_hat;
    return row;
}

std::vector<std::pair<std::string, std::filesystem::path>> read_flow_index(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::pair<std::string, std::filesystem::path>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw CommandError("invalid-input", fmt::format("{}:{}: expected flow<TAB>manifest", path.string(),
                                                            line_no));
        }
        const std::filesystem::path rel = line.substr(tab + 1);
        out.emplace_back(line.substr(0, tab), rel.is_absolute() ? rel : path.parent_path() / rel);
    }
    return out;
}

enum class InputKind { manifest, flow_index, query_csv, truth };

InputKind classify(const std::filesystem::path& path) {
    const std::string line = first_line(path);
    if (line.starts_with("{")) {
        return InputKind::manifest;
    }
    if (line.starts_with("flow,n_star_hat")) {
        return InputKind::query_csv;
    }
    const auto tabs = std::count(line.begin(), line.end(), '\t');
    if (tabs == 1) {
        return InputKind::flow_index;
    }
    if (tabs == 2) {
        return InputKind::truth;
    }
    throw CommandError("invalid-input", fmt::format("cannot tell what kind of file {} is", path.string()));
}

std::string join_flags(const QueryRow& row) {
    std::vector<std::string_view> flags;
    if (row.noise) {
        flags.emplace_back("noise");
    }
    if (row.estimate.clamped) {
        flags.emplace_back("clamped");
    }
    if (row.estimate.boundary) {
        flags.emplace_back("boundary");
    }
    return flags.empty() ? std::string("none") : fmt::format("{}", fmt::join(flags, ";"));
}

}  // namespace

EstimatorKind parse_estimator(std::string_view name) {
    if (name == "vi-hll") {
        return EstimatorKind::vi_hll;
    }
    if (name == "i-hll-dedicated") {
        return EstimatorKind::i_hll_dedicated;
    }
    if (name == "union-baseline") {
        return EstimatorKind::union_baseline;
    }
    throw CommandError("infeasible-config", fmt::format("unknown estimator '{}'", name));
}

const char* to_string(EstimatorKind kind) noexcept {
    switch (kind) {
    case EstimatorKind::vi_hll: return "vi-hll";
    case EstimatorKind::i_hll_dedicated: return "i-hll-dedicated";
    case EstimatorKind::union_baseline: return "union-baseline";
    }
    return "unknown";
}

VirtualSketchLayout ExperimentConfig::layout() const {
    if (h < 1 || h > 8) {
        throw CommandError("infeasible-config", fmt::format("register width {} outside [1, 8]", h));
    }
    if (physical_size() <= s) {
        throw CommandError("infeasible-config", fmt::format("m = floor({} / {}) = {} must exceed s = {}", memory_bits,
                                                            h, physical_size(), s));
    }
    try {
        return VirtualSketchLayout::from_memory_bits(memory_bits, s, h, seed);
    } catch (const ParameterError& e) {
        throw CommandError("infeasible-config", e.what());
    }
}

GenerateOutput cmd_generate(const TraceSpec& spec, const std::filesystem::path& out_dir) {
    std::optional<TraceGenerator> gen;
    try {
        gen.emplace(spec);
    } catch (const ParameterError& e) {
        throw CommandError("infeasible-config", e.what());
    }
    create_dir(out_dir);
    GenerateOutput out{out_dir / "trace.tsv", out_dir / "truth.tsv"};
    {
        auto trace = open_out(out.trace);
        gen->write_trace(trace);
    }
    {
        auto truth = open_out(out.truth);
        write_truth(truth, gen->ground_truth());
    }
    return out;
}

std::filesystem::path cmd_record(const std::filesystem::path& trace, const ExperimentConfig& config,
                                 const std::filesystem::path& out_dir, std::span<const std::string> flows) {
    require_file(trace);
    std::ifstream in(trace);
    const bool dedicated = config.estimator != EstimatorKind::vi_hll;

    std::optional<VirtualSketchLayout> layout;
    std::unordered_map<std::string, std::size_t> tracked;
    if (dedicated) {
        if (flows.empty()) {
            throw CommandError("infeasible-config", "dedicated sketches need the list of flows to track");
        }
        try {
            (void)HllSketch(config.s, config.h);
        } catch (const ParameterError& e) {
            throw CommandError("infeasible-config", e.what());
        }
        for (std::size_t k = 0; k < flows.size(); ++k) {
            if (!tracked.emplace(flows[k], k).second) {
                throw CommandError("invalid-input", fmt::format("flow '{}' listed twice", flows[k]));
            }
        }
    } else {
        layout.emplace(config.layout());
    }
    create_dir(out_dir);

    std::optional<PhysicalRegisterArray> array;
    std::vector<HllSketch> sketches;
    std::vector<std::filesystem::path> array_paths;
    std::vector<std::vector<std::filesystem::path>> sketch_paths(flows.size());
    std::size_t current = 0;

    const auto flush = [&] {
        if (current == 0) {
            return;
        }
        const auto name = fmt::format("period-{}.snap", current);
        if (dedicated) {
            for (std::size_t k = 0; k < sketches.size(); ++k) {
                const auto dir = out_dir / fmt::format("flow-{}", k);
                create_dir(dir);
                save(sketches[k], current, dir / name);
                sketch_paths[k].push_back(dir / name);
            }
        } else {
            save(*array, layout->seeds().digest(), out_dir / name);
            array_paths.push_back(out_dir / name);
        }
    };

    std::size_t periods = 0;
    try {
        periods = read_trace(in, [&](const TraceRecord& rec) {
            if (rec.period != current) {
                flush();
                current = rec.period;
                if (dedicated) {
                    sketches.assign(flows.size(), HllSketch(config.s, config.h));
                } else {
                    array.emplace(layout->make_array(current));
                }
            }
            if (dedicated) {
                const auto it = tracked.find(rec.flow);
                if (it != tracked.end()) {
                    sketches[it->second].record(rec.element);
                }
            } else {
                record_hashed(*array, *layout, flow_fingerprint(rec.flow), hash_u64(rec.element, kElementHashSeed));
            }
        });
    } catch (const SnapshotError& e) {
        throw CommandError("invalid-input", e.what());
    } catch (const std::runtime_error& e) {
        throw CommandError("invalid-input", fmt::format("{}: {}", trace.string(), e.what()));
    }
    flush();
    if (current != periods) {
        throw CommandError("invalid-input", fmt::format("{} declares t={} but its records end at period {}",
                                                        trace.string(), periods, current));
    }

    if (!dedicated) {
        Manifest m = manifest(array_paths);
        m.virtual_size = config.s;
        m.master_seed = config.seed;
        const auto path = out_dir / "manifest.json";
        write_manifest(m, path);
        return path;
    }
    const auto index_path = out_dir / "flows.tsv";
    auto index = open_out(index_path);
    for (std::size_t k = 0; k < flows.size(); ++k) {
        Manifest m = manifest(sketch_paths[k]);
        m.virtual_size = config.s;
        m.master_seed = config.seed;
        m.flow = flows[k];
        const auto rel = std::filesystem::path(fmt::format("flow-{}", k)) / "manifest.json";
        write_manifest(m, out_dir / rel);
        index << flows[k] << '\t' << rel.generic_string() << '\n';
    }
    return index_path;
}

std::vector<QueryRow> query_flows(const std::filesystem::path& source, std::span<const std::string> flows,
                                  const ExperimentConfig& config, const ExpectedParameters& expected) {
    require_file(source);
    const InputKind kind = classify(source);
    std::vector<QueryRow> rows;

    if (kind == InputKind::flow_index) {
        if (config.estimator == EstimatorKind::vi_hll) {
            throw CommandError("parameter-mismatch", "a dedicated-sketch index cannot answer vi-hll queries");
        }
        const auto index = read_flow_index(source);
        std::map<std::string, std::filesystem::path> lookup(index.begin(), index.end());
        std::vector<std::string> wanted(flows.begin(), flows.end());
        if (wanted.empty()) {
            for (const auto& [flow, path] : index) {
                wanted.push_back(flow);
            }
        }
        for (const auto& flow : wanted) {
            const auto it = lookup.find(flow);
            if (it == lookup.end()) {
                throw CommandError("invalid-input", fmt::format("flow '{}' has no dedicated sketches", flow));
            }
            const Manifest m = load_manifest(it->second);
            check_expected(m, expected);
            rows.push_back(query_sketch_manifest(m, config));
            rows.back().flow = flow;
        }
        return rows;
    }
    if (kind != InputKind::manifest) {
        throw CommandError("invalid-input", fmt::format("{} is neither a manifest nor a flow index", source.string()));
    }

    const Manifest m = load_manifest(source);
    check_expected(m, expected);
    if (m.kind == SnapshotKind::sketch) {
        if (config.estimator == EstimatorKind::vi_hll) {
            throw CommandError("parameter-mismatch", "dedicated-sketch snapshots cannot answer vi-hll queries");
        }
        for (const auto& flow : flows) {
            if (flow != m.flow) {
                throw CommandError("invalid-input", fmt::format("manifest holds flow '{}', not '{}'", m.flow, flow));
            }
        }
        rows.push_back(query_sketch_manifest(m, config));
        return rows;
    }

    if (config.estimator != EstimatorKind::vi_hll) {
        throw CommandError("parameter-mismatch",
                           fmt::format("physical-array snapshots need --estimator vi-hll, not {}",
                                       to_string(config.estimator)));
    }
    if (m.periods() < 2) {
        throw CommandError("infeasible-config", fmt::format("persistent queries need t >= 2, got {}", m.periods()));
    }
    std::optional<VirtualSketchLayout> layout;
    try {
        layout.emplace(m.virtual_size, m.register_count, m.register_width, SeedTable::generate(m.virtual_size,
                                                                                              m.master_seed));
    } catch (const ParameterError& e) {
        throw CommandError("infeasible-config", e.what());
    }
    if (layout->seeds().digest() != m.seed_digest) {
        throw CommandError("parameter-mismatch",
                           fmt::format("seed table of (s={}, seed={}) does not match the snapshots' digest",
                                       m.virtual_size, m.master_seed));
    }
    std::vector<PhysicalRegisterArray> arrays;
    for (const auto& snap : load_periods(m)) {
        try {
            arrays.push_back(snap.to_array());
        } catch (const ParameterError& e) {
            throw CommandError("invalid-input", e.what());
        }
    }
    const BackgroundEstimate background = estimate_background(arrays, *layout);
    const double z = normal_quantile_two_sided(config.confidence);
    for (const auto& flow : flows) {
        const VirtualEstimate ve =
            vi_hll_estimate(arrays, *layout, flow, background, ViewCardinality::view_sketch, config.confidence);
        QueryRow row;
        row.flow = flow;
        row.estimate = ve.estimate;
        row.raw = ve.estimate.n_star_hat;
        row.noise = ve.raw <= 0.0 || ve.raw < config.noise_z * ve.noise_sd;
        if (row.noise) {
            row.estimate.n_star_hat = 0.0;
            row.estimate.rel_stderr = std::numeric_limits<double>::infinity();
            row.estimate.ci_low = -z * ve.noise_sd;
            row.estimate.ci_high = z * ve.noise_sd;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_query_csv(std::ostream& out, std::span<const QueryRow> rows) {
    out << "flow,n_star_hat,stderr,ci_low,ci_high,flags\n";
    for (const auto& row : rows) {
        const auto& e = row.estimate;
        out << fmt::format("{},{:.3f},{:.6f},{:.3f},{:.3f},{}\n", csv_field(row.flow), e.n_star_hat, e.rel_stderr,
                           e.ci_low, e.ci_high, join_flags(row));
    }
}

void cmd_query(const std::filesystem::path& source, std::span<const std::string> flows,
               const ExperimentConfig& config, const ExpectedParameters& expected, std::ostream& csv) {
    const auto rows = query_flows(source, flows, config, expected);
    write_query_csv(csv, rows);
}

std::vector<BucketMetrics> bucket_metrics(std::span<const ScatterPoint> points, std::span<const double> edges) {
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()) ||
        std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw ParameterError("bucket edges must be at least two strictly ascending values");
    }
    std::vector<BucketMetrics> out;
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        BucketMetrics row;
        row.low = edges[b];
        row.high = edges[b + 1];
        std::vector<double> est;
        std::vector<double> truth;
        for (const auto& p : points) {
            if (p.n_star >= row.low && p.n_star < row.high) {
                est.push_back(p.n_star_hat);
                truth.push_back(p.n_star);
            }
        }
        const auto zeros = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 0.0));
        if (zeros == truth.size()) {
            row.excluded_zero_truth = zeros;
            row.bias = kNaN;
            row.stderr_ratio = kNaN;
        } else {
            const AccuracySummary acc = accuracy(est, truth);
            row.count = acc.used;
            row.excluded_zero_truth = acc.excluded_zero_truth;
            row.bias = acc.bias;
            row.stderr_ratio = acc.used > 1 ? acc.stderr_ratio : kNaN;
        }
        out.push_back(row);
    }
    return out;
}

void write_metrics_csv(std::ostream& out, std::span<const BucketMetrics> rows) {
    out << "bucket_low,bucket_high,count,excluded_zero_truth,relative_bias,relative_stderr\n";
    for (const auto& r : rows) {
        out << fmt::format("{:g},{:g},{},{},{:.6f},{:.6f}\n", r.low, r.high, r.count, r.excluded_zero_truth, r.bias,
                           r.stderr_ratio);
    }
}

void write_scatter_csv(std::ostream& out, std::span<const ScatterPoint> points) {
    out << "flow,n_star,n_star_hat\n";
    for (const auto& p : points) {
        out << fmt::format("{},{:.0f},{:.3f}\n", csv_field(p.flow), p.n_star, p.n_star_hat);
    }
}

std::vector<BucketMetrics> cmd_evaluate(const std::filesystem::path& estimates, const std::filesystem::path& truth_path,
                                        const ExperimentConfig& config, const FlowSelection& selection,
                                        std::span<const double> bucket_edges, const std::filesystem::path& out_dir) {
    require_file(estimates);
    require_file(truth_path);
    GroundTruth truth;
    {
        std::ifstream in(truth_path);
        try {
            truth = read_truth(in);
        } catch (const std::runtime_error& e) {
            throw CommandError("invalid-input", fmt::format("{}: {}", truth_path.string(), e.what()));
        }
    }
    std::vector<const FlowTruth*> selected;
    if (!selection.labels.empty()) {
        std::unordered_map<std::string_view, const FlowTruth*> by_label;
        for (const auto& ft : truth) {
            by_label.emplace(ft.flow, &ft);
        }
        for (const auto& label : selection.labels) {
            const auto it = by_label.find(label);
            if (it == by_label.end()) {
                throw CommandError("invalid-input", fmt::format("flow '{}' is not in {}", label, truth_path.string()));
            }
            selected.push_back(it->second);
        }
    } else {
        const std::size_t n = std::min(truth.size(), selection.first.value_or(truth.size()));
        for (std::size_t i = 0; i < n; ++i) {
            selected.push_back(&truth[i]);
        }
    }

    std::unordered_map<std::string, double> values;
    const InputKind estimates_kind = classify(estimates);
    // a query CSV without an explicit selection covers only the flows it lists
    const bool listed_only =
        estimates_kind == InputKind::query_csv && selection.labels.empty() && !selection.first;
    switch (estimates_kind) {
    case InputKind::manifest:
    case InputKind::flow_index: {
        std::vector<std::string> labels;
        for (const auto* ft : selected) {
            labels.push_back(ft->flow);
        }
        for (const auto& row : query_flows(estimates, labels, config)) {
            values[row.flow] = row.raw;
        }
        break;
    }
    case InputKind::query_csv: {
        std::ifstream in(estimates);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto fields = split_csv_line(line);
            if (fields.size() != 6) {
                throw CommandError("invalid-input", fmt::format("{}: row '{}' does not have 6 fields",
                                                                estimates.string(), line));
            }
            try {
                values[fields[0]] = std::stod(fields[1]);
            } catch (const std::exception&) {
                throw CommandError("invalid-input", fmt::format("{}: bad estimate '{}'", estimates.string(), fields[1]));
            }
        }
        break;
    }
    case InputKind::truth: {
        std::ifstream in(estimates);
        try {
            for (const auto& ft : read_truth(in)) {
                values[ft.flow] = static_cast<double>(ft.n_star);
            }
        } catch (const std::runtime_error& e) {
            throw CommandError("invalid-input", fmt::format("{}: {}", estimates.string(), e.what()));
        }
        break;
    }
    }

    std::vector<ScatterPoint> points;
    for (const auto* ft : selected) {
        const auto it = values.find(ft->flow);
        if (it == values.end() && listed_only) {
            continue;
        }
        if (it == values.end()) {
            throw CommandError("invalid-input",
                               fmt::format("no estimate for flow '{}' in {}", ft->flow, estimates.string()));
        }
        points.push_back({ft->flow, static_cast<double>(ft->n_star), it->second});
    }
    if (points.empty()) {
        throw CommandError("invalid-input", fmt::format("no flow of {} appears in {}", truth_path.string(),
                                                        estimates.string()));
    }
    std::vector<BucketMetrics> metrics;
    try {
        metrics = bucket_metrics(points, bucket_edges);
    } catch (const ParameterError& e) {
        throw CommandError("invalid-input", e.what());
    }
    create_dir(out_dir);
    auto m_out = open_out(out_dir / "metrics.csv");
    write_metrics_csv(m_out, metrics);
    auto s_out = open_out(out_dir / "scatter.csv");
    write_scatter_csv(s_out, points);
    return metrics;
}

std::vector<std::vector<ScatterPoint>> simulate_vi_hll(const TraceGenerator& generator,
                                                       std::span<const VirtualSketchLayout> layouts,
                                                       std::size_t query_flows) {
    const std::size_t t = generator.spec().periods;
    query_flows = std::min(query_flows, generator.flow_count());
    std::vector<std::uint64_t> fingerprints(generator.flow_count());
    for (std::size_t f = 0; f < fingerprints.size(); ++f) {
        fingerprints[f] = flow_fingerprint(generator.label(f));
    }
    std::vector<std::vector<PhysicalRegisterArray>> arrays(layouts.size());
    for (std::size_t j = 1; j <= t; ++j) {
        for (std::size_t l = 0; l < layouts.size(); ++l) {
            arrays[l].push_back(layouts[l].make_array(j));
        }
        generator.for_each_record(j, [&](std::size_t flow, std::uint64_t element) {
            const std::uint64_t eh = hash_u64(element, kElementHashSeed);
            for (std::size_t l = 0; l < layouts.size(); ++l) {
                record_hashed(arrays[l].back(), layouts[l], fingerprints[flow], eh);
            }
        });
    }
    std::vector<double> truths(query_flows);
    for (std::size_t f = 0; f < query_flows; ++f) {
        truths[f] = static_cast<double>(generator.flow_truth(f).n_star);
    }
    std::vector<std::vector<ScatterPoint>> out(layouts.size());
    for (std::size_t l = 0; l < layouts.size(); ++l) {
        const BackgroundEstimate background = estimate_background(arrays[l], layouts[l]);
        for (std::size_t f = 0; f < query_flows; ++f) {
            const VirtualEstimate ve = vi_hll_estimate(arrays[l], layouts[l], generator.label(f), background);
            out[l].push_back({generator.label(f), truths[f], ve.estimate.n_star_hat});
        }
    }
    return out;
}

std::vector<ScatterPoint> simulate_dedicated(const TraceGenerator& generator, std::uint32_t s, unsigned h,
                                             EstimatorKind estimator, std::size_t query_flows) {
    query_flows = std::min(query_flows, generator.flow_count());
    std::vector<ScatterPoint> out;
    for (std::size_t f = 0; f < query_flows; ++f) {
        const FlowSets sets = generator.flow_sets(f);
        std::vector<HllSketch> sketches;
        for (const auto& transient : sets.transient) {
            HllSketch sk(s, h);
            for (const auto e : sets.persistent) {
                sk.record(e);
            }
            for (const auto e : transient) {
                sk.record(e);
            }
            sketches.push_back(std::move(sk));
        }
        const PersistentEstimate est = estimate_dedicated(sketches, estimator, kDefaultConfidence);
        out.push_back({generator.label(f), static_cast<double>(generator.flow_truth(f).n_star), est.n_star_hat});
    }
    return out;
}

std::size_t cmd_sweep(const SweepGrid& grid, const std::filesystem::path& out_dir) {
    if (grid.memory_bits.empty() || grid.s.empty() || grid.t.empty() || grid.snr.empty() || grid.trials < 1) {
        throw CommandError("infeasible-config", "every sweep axis needs at least one value and trials >= 1");
    }
    for (const auto t : grid.t) {
        check_dedicated_periods(grid.estimator, t);
    }
    std::vector<std::uint64_t> probes;
    for (const auto n : grid.probe_spreads) {
        probes.insert(probes.end(), grid.probes_per_spread, n);
    }
    // validate every layout before doing any work
    for (const auto mb : grid.memory_bits) {
        for (const auto s : grid.s) {
            ExperimentConfig cfg;
            cfg.memory_bits = mb;
            cfg.s = s;
            cfg.h = grid.h;
            cfg.seed = grid.seed;
            if (grid.estimator == EstimatorKind::vi_hll) {
                (void)cfg.layout();
            } else {
                try {
                    (void)HllSketch(s, grid.h);
                } catch (const ParameterError& e) {
                    throw CommandError("infeasible-config", e.what());
                }
            }
        }
    }

    // point index = ((mi * |s| + si) * |t| + ti) * |snr| + ri
    const std::size_t n_s = grid.s.size();
    const std::size_t n_t = grid.t.size();
    const std::size_t n_snr = grid.snr.size();
    const std::size_t n_points = grid.memory_bits.size() * n_s * n_t * n_snr;
    std::vector<std::vector<ScatterPoint>> points(n_points);
    const auto index_of = [&](std::size_t mi, std::size_t si, std::size_t ti, std::size_t ri) {
        return ((mi * n_s + si) * n_t + ti) * n_snr + ri;
    };

    for (std::size_t ti = 0; ti < n_t; ++ti) {
        for (std::size_t ri = 0; ri < n_snr; ++ri) {
            for (std::size_t trial = 0; trial < grid.trials; ++trial) {
                const std::uint64_t trial_seed = hash_u64(trial, grid.seed);
                std::optional<TraceGenerator> gen;
                try {
                    TraceSpec spec = TraceSpec::desk_scale(trial_seed, grid.t[ti], grid.snr[ri], probes);
                    if (grid.flow_count) {
                        spec.flow_count = *grid.flow_count;
                    }
                    gen.emplace(std::move(spec));
                } catch (const ParameterError& e) {
                    throw CommandError("infeasible-config", e.what());
                }
                if (grid.estimator == EstimatorKind::vi_hll) {
                    std::vector<VirtualSketchLayout> layouts;
                    for (const auto mb : grid.memory_bits) {
                        for (const auto s : grid.s) {
                            layouts.push_back(VirtualSketchLayout::from_memory_bits(mb, s, grid.h, trial_seed));
                        }
                    }
                    auto results = simulate_vi_hll(*gen, layouts, probes.size());
                    for (std::size_t mi = 0; mi < grid.memory_bits.size(); ++mi) {
                        for (std::size_t si = 0; si < n_s; ++si) {
                            auto& dst = points[index_of(mi, si, ti, ri)];
                            auto& src = results[mi * n_s + si];
                            dst.insert(dst.end(), src.begin(), src.end());
                        }
                    }
                } else {
                    for (std::size_t si = 0; si < n_s; ++si) {
                        const auto res = simulate_dedicated(*gen, grid.s[si], grid.h, grid.estimator, probes.size());
                        for (std::size_t mi = 0; mi < grid.memory_bits.size(); ++mi) {
                            auto& dst = points[index_of(mi, si, ti, ri)];
                            dst.insert(dst.end(), res.begin(), res.end());
                        }
                    }
                }
            }
        }
    }

    create_dir(out_dir);
    auto index = open_out(out_dir / "sweep.csv");
    index << "point,estimator,memory_bits,m,s,h,t,snr,trials,metrics_file,scatter_file\n";
    for (std::size_t mi = 0; mi < grid.memory_bits.size(); ++mi) {
        for (std::size_t si = 0; si < n_s; ++si) {
            for (std::size_t ti = 0; ti < n_t; ++ti) {
                for (std::size_t ri = 0; ri < n_snr; ++ri) {
                    const std::size_t p = index_of(mi, si, ti, ri);
                    const auto metrics_name = fmt::format("point-{}.csv", p);
                    const auto scatter_name = fmt::format("point-{}-scatter.csv", p);
                    std::vector<BucketMetrics> metrics;
                    try {
                        metrics = bucket_metrics(points[p], grid.bucket_edges);
                    } catch (const ParameterError& e) {
                        throw CommandError("invalid-input", e.what());
                    }
                    auto m_out = open_out(out_dir / metrics_name);
                    write_metrics_csv(m_out, metrics);
                    auto s_out = open_out(out_dir / scatter_name);
                    write_scatter_csv(s_out, points[p]);
                    index << fmt::format("{},{},{},{},{},{},{},{:g},{},{},{}\n", p, to_string(grid.estimator),
                                         grid.memory_bits[mi], grid.memory_bits[mi] / grid.h, grid.s[si], grid.h,
                                         grid.t[ti], grid.snr[ri], grid.trials, metrics_name, scatter_name);
                }
            }
        }
    }
    return n_points;
}

}  // namespace pspread
