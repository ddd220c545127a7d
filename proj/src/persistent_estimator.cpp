#include "pspread/persistent_estimator.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

namespace pspread {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Pieces shared by G, 1 - G and dG at one (n*, k).
struct GenerationTerms {
    double scale;         // s 2^k
    double persistent;    // e^{-n*/(s2^k)}
    double product;       // P = prod_j (1 - e^{-d_j})
    double one_minus_product;
    double inverse_sum;   // sum_j 1 / (e^{d_j} - 1)
};

GenerationTerms generation_terms(const IntersectionModel& model, double n_star, int k, bool strict) {
    GenerationTerms out{};
    out.scale = std::ldexp(static_cast<double>(model.registers), k);
    out.persistent = std::exp(-n_star / out.scale);
    double log_product = 0.0;
    for (const double n_j : model.period_cardinalities) {
        double gap = n_j - n_star;
        if (gap < kTransientFloor) {
            if (strict) {
                throw ModelError(fmt::format(
                    "derivative singular: n_j - n* = {} below floor {}", gap, kTransientFloor));
            }
            gap = kTransientFloor;
        }
        const double d = gap / out.scale;
        // 1 - e^{-d} = -expm1(-d), accurate for tiny d
        log_product += std::log(-std::expm1(-d));
        out.inverse_sum += 1.0 / std::expm1(d);
    }
    out.product = std::exp(log_product);
    out.one_minus_product = -std::expm1(log_product);
    return out;
}

void check_k(int k) {
    if (k < 0) {
        throw ParameterError(fmt::format("register value k = {} is negative", k));
    }
}

double pmf_entry(const std::vector<double>& survival, const IntersectionModel& model, double n_star,
                 unsigned k) {
    if (k == 0) {
        return generation_function(model, n_star, 0);
    }
    if (k == model.cap) {
        return survival[k - 1];
    }
    return std::max(0.0, survival[k - 1] - survival[k]);
}

double golden_ratio_step() { return (3.0 - std::sqrt(5.0)) / 2.0; }

double solver_tolerance(double x) { return std::max(0.5, 1e-4 * x); }

}  // namespace

double IntersectionModel::min_cardinality() const noexcept {
    if (period_cardinalities.empty()) {
        return 0.0;
    }
    return *std::min_element(period_cardinalities.begin(), period_cardinalities.end());
}

void IntersectionModel::validate() const {
    if (registers == 0) {
        throw ParameterError("intersection model needs at least one register");
    }
    if (period_cardinalities.empty()) {
        throw ParameterError("intersection model needs at least one period");
    }
    if (cap < 1 || cap > 255) {
        throw ParameterError(fmt::format("register cap {} outside [1, 255]", cap));
    }
    for (const double n : period_cardinalities) {
        if (!(n >= 0.0) || !std::isfinite(n)) {
            throw ParameterError(fmt::format("period cardinality {} is not a finite nonnegative value", n));
        }
    }
}

std::uint64_t RegisterHistogram::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

RegisterHistogram histogram(std::span<const std::uint8_t> registers, unsigned cap) {
    RegisterHistogram hist;
    hist.counts.assign(cap + 1, 0);
    for (const std::uint8_t r : registers) {
        if (r > cap) {
            throw ParameterError(fmt::format("register value {} above cap {}", r, cap));
        }
        ++hist.counts[r];
    }
    return hist;
}

double generation_function(const IntersectionModel& model, double n_star, int k) {
    check_k(k);
    const auto g = generation_terms(model, n_star, k, false);
    return g.persistent * g.one_minus_product;
}

double generation_survival(const IntersectionModel& model, double n_star, int k) {
    check_k(k);
    const auto g = generation_terms(model, n_star, k, false);
    // 1 - e^{-a}(1 - P) = (1 - e^{-a}) + e^{-a} P
    return -std::expm1(-n_star / g.scale) + g.persistent * g.product;
}

std::vector<double> register_pmf(const IntersectionModel& model, double n_star) {
    std::vector<double> survival(model.cap);
    for (unsigned k = 0; k < model.cap; ++k) {
        survival[k] = generation_survival(model, n_star, static_cast<int>(k));
    }
    std::vector<double> pmf(model.cap + 1);
    for (unsigned k = 0; k <= model.cap; ++k) {
        pmf[k] = pmf_entry(survival, model, n_star, k);
    }
    return pmf;
}

double generation_function_derivative(const IntersectionModel& model, double n_star, int k) {
    check_k(k);
    const auto g = generation_terms(model, n_star, k, true);
    // (1/(s2^k)) e^{-a} ((1 + sum) P - 1), regrouped as sum P - (1 - P)
    return g.persistent / g.scale * (g.inverse_sum * g.product - g.one_minus_product);
}

std::vector<double> register_pmf_derivative(const IntersectionModel& model, double n_star) {
    std::vector<double> dg(model.cap);
    for (unsigned k = 0; k < model.cap; ++k) {
        dg[k] = generation_function_derivative(model, n_star, static_cast<int>(k));
    }
    std::vector<double> out(model.cap + 1);
    out[0] = dg[0];
    for (unsigned k = 1; k < model.cap; ++k) {
        out[k] = dg[k] - dg[k - 1];
    }
    out[model.cap] = -dg[model.cap - 1];
    return out;
}

double log_likelihood(const IntersectionModel& model, const RegisterHistogram& hist, double n_star) {
    const auto pmf = register_pmf(model, n_star);
    double sum = 0.0;
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        if (hist.counts[k] == 0) {
            continue;
        }
        if (k >= pmf.size() || pmf[k] <= 0.0) {
            return -kInf;
        }
        sum += static_cast<double>(hist.counts[k]) * std::log(pmf[k]);
    }
    return sum;
}

double score(const IntersectionModel& model, const RegisterHistogram& hist, double n_star) {
    const auto pmf = register_pmf(model, n_star);
    const auto dpmf = register_pmf_derivative(model, n_star);
    double sum = 0.0;
    for (std::size_t k = 0; k < hist.counts.size(); ++k) {
        if (hist.counts[k] == 0) {
            continue;
        }
        if (k >= pmf.size() || pmf[k] <= 0.0) {
            return kNaN;
        }
        sum += static_cast<double>(hist.counts[k]) * dpmf[k] / pmf[k];
    }
    return sum;
}

double sigma_squared(const IntersectionModel& model, double n_star) {
    const unsigned cap = model.cap;
    const double s = static_cast<double>(model.registers);
    std::vector<double> g(cap);
    std::vector<double> survival(cap);
    for (unsigned k = 0; k < cap; ++k) {
        g[k] = generation_function(model, n_star, static_cast<int>(k));
        survival[k] = generation_survival(model, n_star, static_cast<int>(k));
    }
    double sum = 0.0;
    if (g[0] > 0.0) {
        sum += g[0] / (s * s);
    }
    if (survival[cap - 1] > 0.0) {
        const double top = g[cap - 1];
        sum += top * top / (s * s * std::ldexp(1.0, 2 * static_cast<int>(cap - 1)) * survival[cap - 1]);
    }
    for (unsigned k = 1; k < cap; ++k) {
        const double mass = survival[k - 1] - survival[k];
        if (mass <= 0.0) {
            continue;
        }
        const double slope = g[k] - 2.0 * g[k - 1];
        sum += slope * slope / (s * s * std::ldexp(1.0, 2 * static_cast<int>(k)) * mass);
    }
    return sum;
}

double psi_squared(const IntersectionModel& model, double n_star, PsiNormalization normalization) {
    if (!(n_star > 0.0)) {
        throw ParameterError(fmt::format("psi^2 needs n* > 0, got {}", n_star));
    }
    const double base = n_star * n_star * sigma_squared(model, n_star);
    switch (normalization) {
        case PsiNormalization::per_register_fisher: return base;
        case PsiNormalization::closed_form: return base / static_cast<double>(model.registers);
    }
    return base;
}

double absolute_stderr(const IntersectionModel& model, double n_star, PsiNormalization normalization) {
    // n*/(sqrt(s) psi) with psi^2 = (n* sigma)^2 c reduces to 1/(sqrt(s c) sigma)
    const double s = static_cast<double>(model.registers);
    const double c = normalization == PsiNormalization::closed_form ? 1.0 / s : 1.0;
    const double sigma2 = sigma_squared(model, std::max(n_star, 0.0));
    if (sigma2 <= 0.0) {
        return kInf;
    }
    return 1.0 / std::sqrt(s * c * sigma2);
}

double relative_stderr(const IntersectionModel& model, double n_star, PsiNormalization normalization) {
    const double psi2 = psi_squared(model, n_star, normalization);
    if (psi2 <= 0.0) {
        return kInf;
    }
    return 1.0 / std::sqrt(static_cast<double>(model.registers) * psi2);
}

double normal_quantile_two_sided(double confidence) {
    if (!(confidence >= 0.0 && confidence < 1.0)) {
        throw ParameterError(fmt::format("confidence level {} outside [0, 1)", confidence));
    }
    if (confidence == 0.0) {
        return 0.0;
    }
    const boost::math::normal standard;
    return boost::math::quantile(standard, 0.5 + confidence / 2.0);
}

std::pair<double, double> confidence_interval(double estimate, const IntersectionModel& model,
                                              double confidence) {
    const double z = normal_quantile_two_sided(confidence);
    if (z == 0.0) {
        return {estimate, estimate};
    }
    const double half = z * absolute_stderr(model, estimate);
    return {estimate - half, estimate + half};
}

PersistentEstimate mle_estimate(const IntersectionModel& model, const RegisterHistogram& hist,
                                double confidence) {
    model.validate();
    if (model.periods() < 2) {
        throw ParameterError(fmt::format("persistent estimate needs t >= 2 periods, got {}", model.periods()));
    }
    if (hist.counts.size() != model.cap + 1) {
        throw ParameterError(fmt::format("histogram has {} bins, model cap {} needs {}", hist.counts.size(),
                                         model.cap, model.cap + 1));
    }
    if (hist.total() != model.registers) {
        throw ParameterError(fmt::format("histogram counts {} registers, model has {}", hist.total(),
                                         model.registers));
    }

    PersistentEstimate out;
    const double upper = model.min_cardinality() - 1.0;
    auto finish = [&](double n_hat, bool boundary) {
        out.n_star_hat = n_hat;
        out.boundary = boundary;
        out.rel_stderr = n_hat > 0.0 ? relative_stderr(model, n_hat) : kInf;
        const auto [lo, hi] = confidence_interval(n_hat, model, confidence);
        out.ci_low = lo;
        out.ci_high = hi;
        return out;
    };
    if (upper <= 0.0) {
        out.bracket_low = 0.0;
        out.bracket_high = 0.0;
        return finish(0.0, true);
    }

    auto objective = [&](double x) { return log_likelihood(model, hist, x); };

    constexpr int kGrid = 32;
    std::array<double, kGrid + 1> grid_x{};
    std::array<double, kGrid + 1> grid_f{};
    int best = 0;
    for (int i = 0; i <= kGrid; ++i) {
        grid_x[i] = upper * static_cast<double>(i) / kGrid;
        grid_f[i] = objective(grid_x[i]);
        if (grid_f[i] > grid_f[best]) {
            best = i;
        }
    }
    if (!std::isfinite(grid_f[best])) {
        // no n* in range explains the histogram
        out.bracket_low = 0.0;
        out.bracket_high = upper;
        return finish(0.0, true);
    }

    double lo = grid_x[std::max(best - 1, 0)];
    double hi = grid_x[std::min(best + 1, kGrid)];
    out.bracket_low = lo;
    out.bracket_high = hi;

    // golden-section on ln L within the bracket
    const double step = golden_ratio_step();
    double x1 = lo + step * (hi - lo);
    double x2 = hi - step * (hi - lo);
    double f1 = objective(x1);
    double f2 = objective(x2);
    while (hi - lo > solver_tolerance(0.5 * (lo + hi))) {
        ++out.iterations;
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = hi - step * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = lo + step * (hi - lo);
            f1 = objective(x1);
        }
    }
    double n_hat = 0.5 * (lo + hi);

    // refine on the score sign change when the final bracket straddles one
    const double pad = solver_tolerance(n_hat);
    double a = std::max(0.0, n_hat - pad);
    double b = std::min(upper, n_hat + pad);
    double sa = score(model, hist, a);
    double sb = score(model, hist, b);
    if (std::isfinite(sa) && std::isfinite(sb) && sa > 0.0 && sb < 0.0) {
        const double tol = 1e-3 * solver_tolerance(n_hat);
        while (b - a > tol) {
            ++out.iterations;
            const double mid = 0.5 * (a + b);
            const double sm = score(model, hist, mid);
            if (!std::isfinite(sm)) {
                break;
            }
            if (sm > 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        n_hat = 0.5 * (a + b);
    }

    const double tol = solver_tolerance(n_hat);
    if (n_hat <= tol && score(model, hist, 0.0) <= 0.0) {
        return finish(0.0, true);
    }
    if (n_hat >= upper - tol) {
        const double su = score(model, hist, upper);
        if (!(su < 0.0)) {
            return finish(upper, true);
        }
    }
    return finish(n_hat, false);
}

PersistentEstimate mle_estimate(std::span<const HllSketch> period_sketches, double confidence) {
    if (period_sketches.size() < 2) {
        throw ParameterError(fmt::format("persistent estimate needs t >= 2 sketches, got {}",
                                         period_sketches.size()));
    }
    const HllSketch cap_sketch = intersect(period_sketches);
    IntersectionModel model;
    model.registers = cap_sketch.size();
    model.cap = cap_sketch.cap();
    for (const auto& sk : period_sketches) {
        model.period_cardinalities.push_back(estimate_cardinality(sk));
    }
    return mle_estimate(model, histogram(cap_sketch), confidence);
}

double union_baseline_estimate(std::span<const HllSketch> period_sketches) {
    const std::size_t t = period_sketches.size();
    if (t < 2 || t > kUnionBaselineMaxPeriods) {
        throw ParameterError(fmt::format("union baseline supports t in [2, {}], got {}",
                                         kUnionBaselineMaxPeriods, t));
    }
    double total = 0.0;
    std::vector<HllSketch> subset;
    for (std::uint32_t mask = 1; mask < (1u << t); ++mask) {
        subset.clear();
        for (std::size_t j = 0; j < t; ++j) {
            if (mask & (1u << j)) {
                subset.push_back(period_sketches[j]);
            }
        }
        const double card = estimate_cardinality(union_of(subset));
        total += (std::popcount(mask) % 2 == 1) ? card : -card;
    }
    return total;
}

}  // namespace pspread
