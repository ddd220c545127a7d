#include "pspread/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <fmt/format.h>

#include "pspread/errors.hpp"
#include "pspread/hash.hpp"

namespace pspread {

namespace {

constexpr std::uint64_t kStreamTag = 0x5eed5eed5eed5eedULL;

std::uint64_t stream_key(std::uint64_t master, std::uint64_t flow, std::uint64_t period) {
    return hash_u64(hash_u64(master ^ kStreamTag, flow), period);
}

// Draws `count` distinct elements of the domain outside `exclude`, from a
// counter-based stream keyed by `key`.
std::vector<std::uint64_t> draw_distinct(std::uint64_t key, std::uint64_t count, std::uint64_t mask,
                                         const std::unordered_set<std::uint64_t>* exclude) {
    std::vector<std::uint64_t> out;
    out.reserve(count);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(count * 2);
    for (std::uint64_t counter = 0; out.size() < count; ++counter) {
        const std::uint64_t e = hash_u64(counter, key) & mask;
        if (exclude != nullptr && exclude->contains(e)) {
            continue;
        }
        if (seen.insert(e).second) {
            out.push_back(e);
        }
    }
    return out;
}

std::uint64_t domain_mask(unsigned bits) {
    return bits >= 64 ? ~0ULL : (1ULL << bits) - 1;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
    std::uint64_t v = 0;
    std::size_t pos = 0;
    try {
        v = std::stoull(std::string(text), &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != text.size()) {
        throw std::runtime_error(fmt::format("malformed {} '{}'", what, text));
    }
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        parts.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return parts;
}

}  // namespace

double PowerLawSpreads::expected_value() const {
    // E[min(floor X, max)] = sum_{x=1}^{max} P(X >= x), P(X >= x) = (min/x)^a for x > min
    double sum = static_cast<double>(std::min(minimum, maximum));
    for (std::uint64_t x = minimum + 1; x <= maximum; ++x) {
        sum += std::pow(static_cast<double>(minimum) / static_cast<double>(x), exponent);
    }
    return sum;
}

void TraceSpec::validate() const {
    if (flow_count < 1) {
        throw ParameterError("trace needs at least one flow");
    }
    if (periods < 1) {
        throw ParameterError("trace needs at least one period");
    }
    if (persistent_spreads.size() > flow_count) {
        throw ParameterError(fmt::format("{} explicit spreads for {} flows", persistent_spreads.size(), flow_count));
    }
    if (persistent_spreads.size() < flow_count && !power_law) {
        throw ParameterError("flows beyond the explicit spread list need a power-law distribution");
    }
    if (power_law && (power_law->exponent <= 0.0 || power_law->minimum < 1 ||
                      power_law->maximum < power_law->minimum)) {
        throw ParameterError("power law needs exponent > 0 and 1 <= minimum <= maximum");
    }
    if (snr.size() != 1 && snr.size() != periods) {
        throw ParameterError(fmt::format("SNR schedule has {} entries for {} periods", snr.size(), periods));
    }
    for (const double v : snr) {
        if (!(v > 0.0)) {
            throw ParameterError(fmt::format("SNR {} is not positive", v));
        }
    }
    if (element_bits < 1 || element_bits > 64) {
        throw ParameterError(fmt::format("element width {} outside [1, 64]", element_bits));
    }
    std::uint64_t largest = power_law ? power_law->maximum : 0;
    for (const auto n : persistent_spreads) {
        largest = std::max(largest, n);
    }
    std::uint64_t worst = 0;
    for (std::size_t j = 1; j <= periods; ++j) {
        worst = std::max(worst, largest + transient_count(largest, j));
    }
    // rejection sampling needs headroom in the domain
    const double capacity = std::ldexp(1.0, static_cast<int>(element_bits)) / 2.0;
    if (static_cast<double>(worst) > capacity) {
        throw ParameterError(fmt::format("a flow needs {} distinct elements but a {}-bit domain allows {}", worst,
                                         element_bits, capacity));
    }
}

double TraceSpec::snr_at(std::size_t period) const {
    return snr.size() == 1 ? snr.front() : snr.at(period - 1);
}

std::uint64_t TraceSpec::transient_count(std::uint64_t persistent, std::size_t period) const {
    const double v = snr_at(period);
    if (std::isinf(v)) {
        return 0;
    }
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(persistent) / v));
}

TraceSpec TraceSpec::desk_scale(std::uint64_t master_seed, std::size_t periods, double snr,
                                std::vector<std::uint64_t> probe_spreads) {
    TraceSpec spec;
    spec.flow_count = kDeskScaleFlows;
    spec.periods = periods;
    spec.snr = {snr};
    spec.master_seed = master_seed;
    spec.element_bits = 32;

    const double per_flow = [&] {
        std::uint64_t n = 1000;  // any positive n: the ratio n_j/n* is what matters
        return static_cast<double>(n + spec.transient_count(n, 1)) / static_cast<double>(n);
    }();
    double probe_elements = 0.0;
    for (const auto n : probe_spreads) {
        probe_elements += static_cast<double>(n) * per_flow;
    }
    const double budget = kDeskScaleMeanCardinality * static_cast<double>(kDeskScaleFlows) - probe_elements;
    const auto background = static_cast<double>(kDeskScaleFlows - probe_spreads.size());
    if (budget <= background * per_flow) {
        throw ParameterError("probe flows exceed the desk-scale element budget");
    }
    const double target_mean = budget / background / per_flow;

    PowerLawSpreads law{1.5, 1, 2000};
    double lo = 0.3;
    double hi = 8.0;
    for (int i = 0; i < 100; ++i) {
        law.exponent = 0.5 * (lo + hi);
        if (law.expected_value() > target_mean) {
            lo = law.exponent;
        } else {
            hi = law.exponent;
        }
    }
    spec.power_law = law;
    spec.persistent_spreads = std::move(probe_spreads);
    return spec;
}

std::string synthetic_flow_label(std::size_t flow_index) {
    return fmt::format("10.{}.{}.{}", (flow_index >> 16) & 0xff, (flow_index >> 8) & 0xff, flow_index & 0xff) +
           (flow_index >= (1u << 24) ? fmt::format("/{}", flow_index >> 24) : std::string());
}

TraceGenerator::TraceGenerator(TraceSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    targets_.reserve(spec_.flow_count);
    labels_.reserve(spec_.flow_count);
    targets_ = spec_.persistent_spreads;
    if (targets_.size() < spec_.flow_count) {
        std::mt19937_64 rng(hash_u64(spec_.master_seed, kStreamTag));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const auto& law = *spec_.power_law;
        while (targets_.size() < spec_.flow_count) {
            const double u = 1.0 - unit(rng);  // (0, 1]
            const double x = static_cast<double>(law.minimum) * std::pow(u, -1.0 / law.exponent);
            targets_.push_back(std::min<std::uint64_t>(law.maximum,
                                                       x >= 1e18 ? law.maximum : static_cast<std::uint64_t>(x)));
        }
    }
    for (std::size_t i = 0; i < spec_.flow_count; ++i) {
        labels_.push_back(synthetic_flow_label(i));
    }
}

FlowSets TraceGenerator::flow_sets(std::size_t flow) const {
    const std::uint64_t mask = domain_mask(spec_.element_bits);
    FlowSets out;
    out.persistent = draw_distinct(stream_key(spec_.master_seed, flow, 0), targets_[flow], mask, nullptr);
    const std::unordered_set<std::uint64_t> persistent(out.persistent.begin(), out.persistent.end());
    for (std::size_t j = 1; j <= spec_.periods; ++j) {
        out.transient.push_back(draw_distinct(stream_key(spec_.master_seed, flow, j),
                                              spec_.transient_count(targets_[flow], j), mask, &persistent));
    }
    return out;
}

void TraceGenerator::for_each_record(std::size_t period,
                                     const std::function<void(std::size_t, std::uint64_t)>& visit) const {
    if (period < 1 || period > spec_.periods) {
        throw ParameterError(fmt::format("period {} outside [1, {}]", period, spec_.periods));
    }
    const std::uint64_t mask = domain_mask(spec_.element_bits);
    std::vector<std::pair<std::uint32_t, std::uint64_t>> records;
    for (std::size_t f = 0; f < targets_.size(); ++f) {
        auto persistent = draw_distinct(stream_key(spec_.master_seed, f, 0), targets_[f], mask, nullptr);
        const std::unordered_set<std::uint64_t> lookup(persistent.begin(), persistent.end());
        const auto transient = draw_distinct(stream_key(spec_.master_seed, f, period),
                                             spec_.transient_count(targets_[f], period), mask, &lookup);
        for (const auto e : persistent) {
            records.emplace_back(static_cast<std::uint32_t>(f), e);
        }
        for (const auto e : transient) {
            records.emplace_back(static_cast<std::uint32_t>(f), e);
        }
    }
    std::mt19937_64 rng(stream_key(spec_.master_seed, ~0ULL, period));
    std::shuffle(records.begin(), records.end(), rng);
    for (const auto& [f, e] : records) {
        visit(f, e);
    }
}

FlowTruth TraceGenerator::flow_truth(std::size_t flow) const {
    const FlowSets sets = flow_sets(flow);
    FlowTruth ft;
    ft.flow = labels_[flow];
    // transients are disjoint from the persistent set, so n* = |P| + |T_1 ∩ ... ∩ T_t|
    std::unordered_set<std::uint64_t> common(sets.transient.front().begin(), sets.transient.front().end());
    for (std::size_t j = 1; j < sets.transient.size() && !common.empty(); ++j) {
        const std::unordered_set<std::uint64_t> next(sets.transient[j].begin(), sets.transient[j].end());
        std::erase_if(common, [&](std::uint64_t e) { return !next.contains(e); });
    }
    ft.n_star = sets.persistent.size() + common.size();
    for (const auto& t : sets.transient) {
        ft.period_spreads.push_back(sets.persistent.size() + t.size());
    }
    return ft;
}

GroundTruth TraceGenerator::ground_truth() const {
    GroundTruth truth;
    truth.reserve(targets_.size());
    for (std::size_t f = 0; f < targets_.size(); ++f) {
        truth.push_back(flow_truth(f));
    }
    return truth;
}

void write_trace_header(std::ostream& out, std::size_t periods) {
    out << "#spread-trace v1 t=" << periods << '\n';
}

void TraceGenerator::write_trace(std::ostream& out) const {
    write_trace_header(out, spec_.periods);
    std::string line;
    for (std::size_t j = 1; j <= spec_.periods; ++j) {
        for_each_record(j, [&](std::size_t f, std::uint64_t e) {
            line.clear();
            fmt::format_to(std::back_inserter(line), "{}\t{}\t{}\n", j, labels_[f], e);
            out << line;
        });
    }
}

std::size_t read_trace(std::istream& in, const std::function<void(const TraceRecord&)>& visit) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("empty trace: missing header");
    }
    constexpr std::string_view kPrefix = "#spread-trace v1 t=";
    if (!line.starts_with(kPrefix)) {
        throw std::runtime_error(fmt::format("bad trace header '{}'", line));
    }
    const std::size_t periods = parse_u64(std::string_view(line).substr(kPrefix.size()), "period count");
    if (periods < 1) {
        throw std::runtime_error("trace declares zero periods");
    }
    std::size_t current = 1;
    std::size_t line_no = 1;
    TraceRecord rec;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto parts = split(line, '\t');
        if (parts.size() != 3) {
            throw std::runtime_error(fmt::format("line {}: expected 3 tab-separated fields", line_no));
        }
        rec.period = parse_u64(parts[0], "period");
        if (rec.period < current || rec.period > periods) {
            throw std::runtime_error(fmt::format("line {}: period {} out of order or beyond t={}", line_no,
                                                 rec.period, periods));
        }
        if (rec.period > current + 1) {
            throw std::runtime_error(fmt::format("line {}: period {} skips period {}", line_no, rec.period,
                                                 current + 1));
        }
        current = rec.period;
        rec.flow.assign(parts[1]);
        rec.element = parse_u64(parts[2], "element");
        visit(rec);
    }
    return periods;
}

void write_truth(std::ostream& out, const GroundTruth& truth) {
    std::string line;
    for (const auto& ft : truth) {
        line.clear();
        fmt::format_to(std::back_inserter(line), "{}\t{}\t{}\n", ft.flow, ft.n_star,
                       fmt::join(ft.period_spreads, ","));
        out << line;
    }
}

GroundTruth read_truth(std::istream& in) {
    GroundTruth truth;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto parts = split(line, '\t');
        if (parts.size() != 3) {
            throw std::runtime_error(fmt::format("truth line {}: expected 3 tab-separated fields", line_no));
        }
        FlowTruth ft;
        ft.flow.assign(parts[0]);
        ft.n_star = parse_u64(parts[1], "n_star");
        for (const auto v : split(parts[2], ',')) {
            ft.period_spreads.push_back(parse_u64(v, "period spread"));
        }
        truth.push_back(std::move(ft));
    }
    return truth;
}

std::uint64_t exact_persistent_spread(std::span<const TraceRecord> records, std::string_view flow,
                                      std::size_t periods) {
    if (periods == 0) {
        return 0;
    }
    std::vector<std::set<std::uint64_t>> sets(periods);
    for (const auto& r : records) {
        if (r.flow == flow && r.period >= 1 && r.period <= periods) {
            sets[r.period - 1].insert(r.element);
        }
    }
    std::uint64_t count = 0;
    for (const auto e : sets.front()) {
        bool everywhere = true;
        for (std::size_t j = 1; j < periods && everywhere; ++j) {
            everywhere = sets[j].contains(e);
        }
        count += everywhere ? 1 : 0;
    }
    return count;
}

AccuracySummary accuracy(std::span<const double> estimates, std::span<const double> truths) {
    if (estimates.empty()) {
        throw ParameterError("accuracy metrics need at least one estimate");
    }
    if (estimates.size() != truths.size()) {
        throw ParameterError(fmt::format("{} estimates paired with {} truths", estimates.size(), truths.size()));
    }
    AccuracySummary out;
    std::vector<double> ratios;
    ratios.reserve(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (truths[i] == 0.0) {
            ++out.excluded_zero_truth;
            continue;
        }
        ratios.push_back(estimates[i] / truths[i]);
    }
    if (ratios.empty()) {
        throw ParameterError("every truth is zero; relative metrics undefined");
    }
    out.used = ratios.size();
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
    out.bias = mean - 1.0;
    if (ratios.size() > 1) {
        double ss = 0.0;
        for (const double r : ratios) {
            ss += (r - mean) * (r - mean);
        }
        out.stderr_ratio = std::sqrt(ss / static_cast<double>(ratios.size() - 1));
    }
    return out;
}

double relative_bias(std::span<const double> estimates, std::span<const double> truths) {
    return accuracy(estimates, truths).bias;
}

double relative_stderr(std::span<const double> estimates, std::span<const double> truths) {
    return accuracy(estimates, truths).stderr_ratio;
}

}  // namespace pspread
