#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pspread/commands.hpp"
#include "pspread/errors.hpp"

namespace {

using pspread::CommandError;

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto pos = text.find(',', start);
        const auto item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        if (!item.empty()) {
            out.push_back(item);
        }
        if (pos == std::string::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

// "@path" reads one label per line; anything else is a comma-separated list.
std::vector<std::string> flow_labels(const std::string& arg) {
    if (!arg.starts_with("@")) {
        return split_list(arg);
    }
    const std::string path = arg.substr(1);
    std::ifstream in(path);
    if (!in) {
        throw CommandError("missing-file", fmt::format("no such file: {}", path));
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

double parse_double(const std::string& text, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos == text.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw CommandError("infeasible-config", fmt::format("bad {} value '{}'", what, text));
}

template <typename T>
std::vector<T> parse_numbers(const std::string& text, const char* what) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        const double v = parse_double(item, what);
        if constexpr (std::is_integral_v<T>) {
            if (v < 0 || v != std::floor(v)) {
                throw CommandError("infeasible-config", fmt::format("{} must be a non-negative integer, got '{}'",
                                                                    what, item));
            }
        }
        out.push_back(static_cast<T>(v));
    }
    if (out.empty()) {
        throw CommandError("infeasible-config", fmt::format("{} needs at least one value", what));
    }
    return out;
}

constexpr const char* kQueryCsvHelp =
    "Query CSV: flow,n_star_hat,stderr,ci_low,ci_high,flags. stderr is relative (sd / n_star_hat);\n"
    "flags is 'none' or a ';'-joined subset of noise, clamped, boundary.";
constexpr const char* kEvaluateCsvHelp =
    "metrics.csv: bucket_low,bucket_high,count,excluded_zero_truth,relative_bias,relative_stderr\n"
    "(buckets by true n*, [low, high)). scatter.csv: flow,n_star,n_star_hat.";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persistent spread measurement with virtual HyperLogLog sketches"};
    // --h is the register width, so help is long-form only
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);
    pspread::ExperimentConfig config;
    std::string estimator = "vi-hll";

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic trace and its ground truth");
    std::size_t gen_flows = 0;
    std::size_t gen_t = 10;
    std::string gen_snr = "1";
    std::uint64_t gen_seed = 1;
    std::string gen_spreads;
    std::string gen_power;
    unsigned gen_bits = 32;
    bool gen_desk = false;
    std::string gen_out;
    gen->add_option("--flows", gen_flows, "Number of flows (desk scale: population override)");
    gen->add_option("--t", gen_t, "Number of periods")->capture_default_str();
    gen->add_option("--snr", gen_snr, "SNR, one value or one per period; 'inf' for none")->capture_default_str();
    gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
    gen->add_option("--spreads", gen_spreads, "Persistent spreads of the first flows (comma list)");
    gen->add_option("--power-law", gen_power, "exponent,min,max for the remaining flows");
    gen->add_option("--element-bits", gen_bits, "Element identifier width")->capture_default_str();
    gen->add_flag("--desk-scale", gen_desk, "114,530-flow population averaging 10.9 elements per period; "
                                            "--spreads are the probe flows");
    gen->add_option("--out", gen_out, "Output directory (trace.tsv, truth.tsv)")->required();
    gen->footer("Trace: header '#spread-trace v1 t=<t>', then period<TAB>flow<TAB>element.\n"
                "Truth: flow<TAB>n_star<TAB>n_1,...,n_t.");

    // record
    auto* rec = app.add_subcommand("record", "Record a trace into per-period snapshots");
    std::string rec_trace;
    std::string rec_flows;
    std::string rec_out;
    rec->add_option("--trace", rec_trace, "Trace file")->required();
    rec->add_option("--memory-bits", config.memory_bits, "Memory budget M in bits (m = M / h)")->capture_default_str();
    rec->add_option("--s", config.s, "Virtual / dedicated sketch size")->capture_default_str();
    rec->add_option("--h", config.h, "Register width in bits")->capture_default_str();
    rec->add_option("--seed", config.seed, "Seed of the virtual-slot table")->capture_default_str();
    rec->add_option("--estimator", estimator, "vi-hll | i-hll-dedicated | union-baseline")->capture_default_str();
    rec->add_option("--flows", rec_flows, "Flows with dedicated sketches (comma list or @file)");
    rec->add_option("--out", rec_out, "Output directory")->required();
    rec->footer("vi-hll writes period-<j>.snap and manifest.json; dedicated estimators write\n"
                "flow-<k>/period-<j>.snap, flow-<k>/manifest.json and the index flows.tsv.");

    // query
    auto* qry = app.add_subcommand("query", "Estimate persistent spreads of flows");
    std::string qry_manifest;
    std::string qry_flows;
    std::string qry_out;
    std::optional<std::uint64_t> qry_memory;
    std::optional<std::uint32_t> qry_s;
    std::optional<unsigned> qry_h;
    std::optional<std::uint64_t> qry_seed;
    std::optional<std::size_t> qry_t;
    qry->add_option("--manifest", qry_manifest, "manifest.json or flows.tsv from record")->required();
    qry->add_option("--flows", qry_flows, "Flows to query (comma list or @file)");
    qry->add_option("--estimator", estimator, "vi-hll | i-hll-dedicated | union-baseline")->capture_default_str();
    qry->add_option("--confidence", config.confidence, "Interval confidence level")->capture_default_str();
    qry->add_option("--noise-z", config.noise_z, "Noise threshold in predicted noise sds")->capture_default_str();
    qry->add_option("--memory-bits", qry_memory, "Expected M; checked against the snapshots");
    qry->add_option("--s", qry_s, "Expected s");
    qry->add_option("--h", qry_h, "Expected h");
    qry->add_option("--seed", qry_seed, "Expected seed");
    qry->add_option("--t", qry_t, "Expected number of periods");
    qry->add_option("--out", qry_out, "Output CSV (default stdout)");
    qry->footer(kQueryCsvHelp);

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Accuracy metrics against ground truth");
    std::string evl_estimates;
    std::string evl_truth;
    std::string evl_flows = "all";
    std::string evl_buckets;
    std::string evl_out;
    evl->add_option("--estimates", evl_estimates, "manifest.json, flows.tsv, query CSV or truth file")->required();
    evl->add_option("--truth", evl_truth, "Ground-truth file")->required();
    evl->add_option("--estimator", estimator, "vi-hll | i-hll-dedicated | union-baseline")->capture_default_str();
    evl->add_option("--confidence", config.confidence, "Interval confidence level")->capture_default_str();
    evl->add_option("--flows", evl_flows, "all, a count of leading truth rows, a comma list or @file")
        ->capture_default_str();
    evl->add_option("--buckets", evl_buckets, "Ascending bucket edges on true n*");
    evl->add_option("--out", evl_out, "Output directory")->required();
    evl->footer(kEvaluateCsvHelp);

    // sweep
    auto* swp = app.add_subcommand("sweep", "Desk-scale parameter sweep");
    pspread::SweepGrid grid;
    std::string swp_memory = "167772";
    std::string swp_s = "512";
    std::string swp_t = "10";
    std::string swp_snr = "1";
    std::string swp_probes = "500,1000,5000,20000";
    std::string swp_buckets;
    std::optional<std::size_t> swp_flows;
    std::string swp_out;
    swp->add_option("--memory-bits", swp_memory, "Comma list of M")->capture_default_str();
    swp->add_option("--s", swp_s, "Comma list of s")->capture_default_str();
    swp->add_option("--t", swp_t, "Comma list of t")->capture_default_str();
    swp->add_option("--snr", swp_snr, "Comma list of SNR")->capture_default_str();
    swp->add_option("--h", grid.h, "Register width")->capture_default_str();
    swp->add_option("--seed", grid.seed, "Master seed")->capture_default_str();
    swp->add_option("--estimator", estimator, "vi-hll | i-hll-dedicated | union-baseline")->capture_default_str();
    swp->add_option("--trials", grid.trials, "Independent traces per grid point")->capture_default_str();
    swp->add_option("--probes", swp_probes, "Persistent spreads of the probe flows")->capture_default_str();
    swp->add_option("--probes-per-spread", grid.probes_per_spread, "Probe flows per spread")->capture_default_str();
    swp->add_option("--flows", swp_flows, "Population size (default 114530)");
    swp->add_option("--buckets", swp_buckets, "Ascending bucket edges on true n*");
    swp->add_option("--out", swp_out, "Output directory")->required();
    swp->footer(std::string("sweep.csv: point,estimator,memory_bits,m,s,h,t,snr,trials,metrics_file,scatter_file.\n") +
                kEvaluateCsvHelp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        config.estimator = pspread::parse_estimator(estimator);
        if (*gen) {
            pspread::TraceSpec spec;
            std::vector<std::uint64_t> spreads;
            if (!gen_spreads.empty()) {
                spreads = parse_numbers<std::uint64_t>(gen_spreads, "--spreads");
            }
            const auto snr = parse_numbers<double>(gen_snr, "--snr");
            if (gen_desk) {
                if (snr.size() != 1) {
                    throw CommandError("infeasible-config", "--desk-scale takes a single --snr value");
                }
                spec = pspread::TraceSpec::desk_scale(gen_seed, gen_t, snr.front(), spreads);
                if (gen_flows > 0) {
                    spec.flow_count = gen_flows;
                }
            } else {
                spec.flow_count = gen_flows > 0 ? gen_flows : spreads.size();
                spec.periods = gen_t;
                spec.snr = snr;
                spec.master_seed = gen_seed;
                spec.persistent_spreads = spreads;
                if (!gen_power.empty()) {
                    const auto p = parse_numbers<double>(gen_power, "--power-law");
                    if (p.size() != 3) {
                        throw CommandError("infeasible-config", "--power-law takes exponent,min,max");
                    }
                    spec.power_law = pspread::PowerLawSpreads{p[0], static_cast<std::uint64_t>(p[1]),
                                                              static_cast<std::uint64_t>(p[2])};
                }
            }
            spec.element_bits = gen_bits;
            pspread::cmd_generate(spec, gen_out);
        } else if (*rec) {
            const auto flows = rec_flows.empty() ? std::vector<std::string>{} : flow_labels(rec_flows);
            pspread::cmd_record(rec_trace, config, rec_out, flows);
        } else if (*qry) {
            pspread::ExpectedParameters expected;
            expected.s = qry_s;
            expected.h = qry_h;
            expected.seed = qry_seed;
            expected.t = qry_t;
            if (qry_memory) {
                expected.m = *qry_memory / qry_h.value_or(pspread::kDefaultRegisterWidth);
            }
            const auto flows = qry_flows.empty() ? std::vector<std::string>{} : flow_labels(qry_flows);
            if (qry_out.empty()) {
                pspread::cmd_query(qry_manifest, flows, config, expected, std::cout);
            } else {
                // query first so a failure leaves no partial file behind
                const auto rows = pspread::query_flows(qry_manifest, flows, config, expected);
                std::ofstream out(qry_out, std::ios::trunc);
                if (!out) {
                    throw CommandError("invalid-input", fmt::format("cannot write {}", qry_out));
                }
                pspread::write_query_csv(out, rows);
            }
        } else if (*evl) {
            pspread::FlowSelection selection;
            if (evl_flows != "all") {
                if (!evl_flows.empty() && evl_flows.find_first_not_of("0123456789") == std::string::npos) {
                    selection.first = std::stoull(evl_flows);
                } else {
                    selection.labels = flow_labels(evl_flows);
                }
            }
            const auto edges = evl_buckets.empty() ? pspread::kDefaultBucketEdges
                                                   : parse_numbers<double>(evl_buckets, "--buckets");
            pspread::cmd_evaluate(evl_estimates, evl_truth, config, selection, edges, evl_out);
        } else if (*swp) {
            grid.memory_bits = parse_numbers<std::uint64_t>(swp_memory, "--memory-bits");
            grid.s = parse_numbers<std::uint32_t>(swp_s, "--s");
            grid.t = parse_numbers<std::size_t>(swp_t, "--t");
            grid.snr = parse_numbers<double>(swp_snr, "--snr");
            grid.probe_spreads = parse_numbers<std::uint64_t>(swp_probes, "--probes");
            grid.flow_count = swp_flows;
            grid.estimator = config.estimator;
            if (!swp_buckets.empty()) {
                grid.bucket_edges = parse_numbers<double>(swp_buckets, "--buckets");
            }
            pspread::cmd_sweep(grid, swp_out);
        }
    } catch (const CommandError& e) {
        std::cerr << "error: " << e.error_class() << ": " << e.what() << '\n';
        return 1;
    } catch (const pspread::ParameterError& e) {
        std::cerr << "error: infeasible-config: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
