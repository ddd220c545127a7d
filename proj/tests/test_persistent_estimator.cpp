#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "pspread/hash.hpp"
#include "pspread/hll.hpp"
#include "pspread/persistent_estimator.hpp"

using namespace pspread;

namespace {

IntersectionModel make_model(std::uint64_t s, std::vector<double> n, unsigned h = 5) {
    IntersectionModel m;
    m.registers = s;
    m.period_cardinalities = std::move(n);
    m.cap = register_cap(h);
    return m;
}

// Sketches of t periods sharing n_star persistent elements, each period
// adding `transient` fresh elements. Element ids are distinct by construction.
std::vector<HllSketch> period_sketches(std::uint32_t s, std::size_t t, std::uint64_t n_star, std::uint64_t transient,
                                       std::uint64_t trial) {
    HllSketch base(s);
    const std::uint64_t tag = trial << 40;
    for (std::uint64_t i = 0; i < n_star; ++i) {
        base.record(mix64(tag | i));
    }
    std::vector<HllSketch> out;
    for (std::size_t j = 1; j <= t; ++j) {
        HllSketch sk = base;
        for (std::uint64_t i = 0; i < transient; ++i) {
            sk.record(mix64(tag | (std::uint64_t{j} << 32) | i));
        }
        out.push_back(std::move(sk));
    }
    return out;
}

// Independent evaluation of the generation function.
double g_oracle(std::uint64_t s, const std::vector<double>& n, double n_star, int k) {
    const double scale = static_cast<double>(s) * std::ldexp(1.0, k);
    double prod = 1.0;
    for (const double nj : n) {
        prod *= 1.0 - std::exp(-(nj - n_star) / scale);
    }
    return std::exp(-n_star / scale) * (1.0 - prod);
}

// Magnitude of the terms in the closed-form derivative, for relative tolerances.
double derivative_scale(std::uint64_t s, const std::vector<double>& n, double n_star, int k) {
    const double scale = static_cast<double>(s) * std::ldexp(1.0, k);
    double sum = 1.0;
    double prod = 1.0;
    for (const double nj : n) {
        sum += 1.0 / std::expm1((nj - n_star) / scale);
        prod *= -std::expm1(-(nj - n_star) / scale);
    }
    return std::exp(-n_star / scale) / scale * (sum * prod + 1.0);
}

// Three-term sigma^2 re-derived from the generation function.
double sigma2_oracle(std::uint64_t s, const std::vector<double>& n, double n_star, unsigned cap) {
    const double sd = static_cast<double>(s);
    auto g = [&](int k) { return g_oracle(s, n, n_star, k); };
    double total = g(0) / (sd * sd);
    const int top = static_cast<int>(cap) - 1;
    total += g(top) * g(top) / (sd * sd * std::pow(2.0, 2.0 * top) * (1.0 - g(top)));
    for (int k = 1; k <= top; ++k) {
        const double mass = g(k) - g(k - 1);
        if (mass > 0.0) {
            total += std::pow(g(k) - 2.0 * g(k - 1), 2) / (sd * sd * std::pow(2.0, 2.0 * k) * mass);
        }
    }
    return total;
}

double sample_sd(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (const double x : v) {
        ss += (x - mean) * (x - mean);
    }
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("histogram tallies register values") {
    const RegisterHistogram zero = histogram(HllSketch(512));
    CHECK(zero.counts.size() == 32);
    CHECK(zero.counts[0] == 512);
    CHECK(zero.total() == 512);

    const std::vector<std::uint8_t> regs{1, 1, 3, 0};
    const RegisterHistogram h = histogram(regs, 31);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[1] == 2);
    CHECK(h.counts[2] == 0);
    CHECK(h.counts[3] == 1);

    const auto sketches = period_sketches(256, 1, 5000, 0, 1);
    CHECK(histogram(sketches.front()).total() == 256);
    CHECK_THROWS_AS(histogram(std::vector<std::uint8_t>{40}, 31), ParameterError);
}

TEST_CASE("generation function") {
    SUBCASE("reference value") {
        const auto m = make_model(512, {2000, 2000});
        CHECK(generation_function(m, 1000, 3) == doctest::Approx(0.746617223468741).epsilon(1e-12));
        CHECK(generation_function(m, 1000, 3) == doctest::Approx(0.74662).epsilon(1e-5));
    }
    SUBCASE("no transients: G = exp(-n*/(s 2^k))") {
        const auto m = make_model(128, {700, 700, 700});
        for (int k = 0; k < 10; ++k) {
            CHECK(generation_function(m, 700, k) == doctest::Approx(std::exp(-700.0 / (128.0 * std::ldexp(1.0, k)))));
        }
    }
    SUBCASE("large k tends to 1") {
        const auto m = make_model(512, {3000, 5000});
        CHECK(generation_function(m, 1000, 40) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("matches the independent formula on random inputs") {
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 200; ++i) {
            const std::uint64_t s = std::uint64_t{16} << (rng() % 8);
            std::vector<double> n(2 + rng() % 8);
            for (auto& v : n) {
                v = 1.0 + 1e5 * u(rng);
            }
            const double n_star = u(rng) * (*std::min_element(n.begin(), n.end()) - 1.0);
            const int k = static_cast<int>(rng() % 31);
            const auto m = make_model(s, n);
            CHECK(generation_function(m, n_star, k) == doctest::Approx(g_oracle(s, n, n_star, k)).epsilon(1e-12));
            CHECK(generation_survival(m, n_star, k) ==
                  doctest::Approx(1.0 - g_oracle(s, n, n_star, k)).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("generation function agrees with simulated intersection registers") {
    // P(min_j M_j[i] <= 3) for s=512, t=2, n*=1000, n_j=2000
    std::size_t below = 0;
    std::size_t total = 0;
    for (std::uint64_t trial = 0; trial < 40; ++trial) {
        const auto sketches = period_sketches(512, 2, 1000, 1000, trial + 100);
        const HllSketch cap = intersect(sketches);
        for (std::size_t i = 0; i < cap.size(); ++i) {
            below += cap[i] <= 3 ? 1 : 0;
            ++total;
        }
    }
    const double p = static_cast<double>(below) / static_cast<double>(total);
    const double g = 0.746617223468741;
    const double se = std::sqrt(g * (1.0 - g) / static_cast<double>(total));
    CHECK(std::abs(p - g) < 4.0 * se);
}

TEST_CASE("pmf sums to one and telescopes the generation function") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t s = std::uint64_t{16} << (rng() % 10);
        std::vector<double> n(2 + rng() % 9);
        for (auto& v : n) {
            v = 1e6 * std::pow(u(rng), 3.0);
        }
        const double n_star = u(rng) * *std::min_element(n.begin(), n.end());
        const unsigned h = 3 + static_cast<unsigned>(rng() % 4);
        const auto m = make_model(s, n, h);
        const auto pmf = register_pmf(m, n_star);
        REQUIRE(pmf.size() == m.cap + 1u);
        double sum = 0.0;
        for (const double p : pmf) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    const auto m = make_model(512, {2000, 2000});
    const auto pmf = register_pmf(m, 1000);
    CHECK(pmf[0] == doctest::Approx(generation_function(m, 1000, 0)));
    for (int k = 1; k < 31; ++k) {
        CHECK(pmf[k] == doctest::Approx(generation_function(m, 1000, k) - generation_function(m, 1000, k - 1))
                            .epsilon(1e-9)
                            .scale(1e-3));
    }
    CHECK(pmf[31] == doctest::Approx(1.0 - generation_function(m, 1000, 30)).epsilon(1e-9).scale(1e-3));

    const auto empty = make_model(512, {0, 0, 0});
    const auto degenerate = register_pmf(empty, 0);
    CHECK(degenerate[0] == 1.0);
}

TEST_CASE("derivative matches centered finite differences of G") {
    std::size_t checked = 0;
    for (const std::uint64_t s : {128u, 512u, 2048u}) {
        for (const std::size_t t : {2u, 3u, 5u, 10u}) {
            for (int k = 0; k <= 12; k += 2) {
                const double scale = static_cast<double>(s) * std::ldexp(1.0, k);
                for (const double x : {0.05, 0.3, 1.0}) {
                    const double n_star = x * scale;
                    std::vector<double> n;
                    for (std::size_t j = 0; j < t; ++j) {
                        n.push_back(n_star + (0.5 + 0.25 * static_cast<double>(j)) * scale);
                    }
                    const auto m = make_model(s, n);
                    const double d = 1e-3 * n_star;
                    const double fd = (generation_function(m, n_star + d, k) - generation_function(m, n_star - d, k)) /
                                      (2.0 * d);
                    const double exact = generation_function_derivative(m, n_star, k);
                    CHECK(std::abs(exact - fd) <= 1e-6 * derivative_scale(s, n, n_star, k));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked >= 200);
}

TEST_CASE("t = 1 derivative reduces to the single-period form") {
    const double s = 256;
    for (const double n_star : {50.0, 400.0, 2000.0}) {
        const double n1 = n_star + 1500.0;
        const auto m = make_model(256, {n1});
        for (int k = 0; k < 8; ++k) {
            const double sc = s * std::ldexp(1.0, k);
            const double d = (n1 - n_star) / sc;
            const double expected = (1.0 / sc) * std::exp(-n_star / sc) *
                                    ((1.0 + 1.0 / (std::exp(d) - 1.0)) * (1.0 - std::exp(-d)) - 1.0);
            CHECK(generation_function_derivative(m, n_star, k) == doctest::Approx(expected).epsilon(1e-10));
            const double step = 1e-3 * n_star;
            const double fd = (generation_function(m, n_star + step, k) - generation_function(m, n_star - step, k)) /
                              (2.0 * step);
            CHECK(std::abs(expected - fd) <= 1e-5 * std::abs(expected) + 1e-14);
        }
    }
}

TEST_CASE("derivative vanishes for large k and throws at the singularity") {
    const auto m = make_model(512, {3000, 4000});
    CHECK(std::abs(generation_function_derivative(m, 1000, 40)) < 1e-12);
    CHECK_THROWS_AS(generation_function_derivative(m, 3000, 2), ModelError);
    CHECK_NOTHROW(generation_function_derivative(m, 2999, 2));
}

TEST_CASE("pmf derivative sums to zero") {
    const auto m = make_model(512, {20000, 21000, 19500});
    const auto dp = register_pmf_derivative(m, 9000);
    double sum = 0.0;
    double mag = 0.0;
    for (const double v : dp) {
        sum += v;
        mag += std::abs(v);
    }
    CHECK(std::abs(sum) <= 1e-12 * mag);
}

TEST_CASE("log likelihood") {
    SUBCASE("certain outcome has log likelihood zero") {
        const auto m = make_model(512, {0, 0});
        RegisterHistogram hist{std::vector<std::uint64_t>(32, 0)};
        hist.counts[0] = 512;
        CHECK(log_likelihood(m, hist, 0) == 0.0);
        hist.counts[0] = 511;
        hist.counts[1] = 1;
        CHECK(log_likelihood(m, hist, 0) < -30.0);
        CHECK_THROWS_AS(score(m, hist, 0), ModelError);
    }
    SUBCASE("values outside the support give -inf") {
        const auto m = make_model(512, {3000, 3000});
        RegisterHistogram hist{std::vector<std::uint64_t>(33, 0)};
        hist.counts[0] = 511;
        hist.counts[32] = 1;
        CHECK(log_likelihood(m, hist, 1000) == -std::numeric_limits<double>::infinity());
        CHECK(std::isnan(score(m, hist, 1000)));
    }
    SUBCASE("never positive") {
        for (std::uint64_t trial = 0; trial < 5; ++trial) {
            const auto sk = period_sketches(256, 3, 2000, 2000, trial);
            const auto hist = histogram(intersect(sk));
            const auto m = make_model(256, {4000, 4000, 4000});
            for (const double x : {0.0, 500.0, 2000.0, 3500.0}) {
                CHECK(log_likelihood(m, hist, x) <= 0.0);
            }
        }
    }
    SUBCASE("truth beats twice the truth on average") {
        double at_truth = 0.0;
        double at_double = 0.0;
        for (std::uint64_t trial = 0; trial < 20; ++trial) {
            const auto sk = period_sketches(512, 4, 1000, 2000, trial + 50);
            const auto m = make_model(512, {3000, 3000, 3000, 3000});
            const auto hist = histogram(intersect(sk));
            at_truth += log_likelihood(m, hist, 1000);
            at_double += log_likelihood(m, hist, 2000);
        }
        CHECK(at_truth > at_double);
    }
}

TEST_CASE("score matches finite differences of the log likelihood") {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const std::uint64_t n_star = 500 + 700 * trial;
        const auto sk = period_sketches(512, 3, n_star, n_star + 1000, trial + 7);
        std::vector<double> n;
        for (const auto& s : sk) {
            n.push_back(estimate_cardinality(s));
        }
        const auto m = make_model(512, n);
        const auto hist = histogram(intersect(sk));
        const auto pmf_at = [&](double x) { return register_pmf(m, x); };
        for (const double frac : {0.2, 0.5, 0.8}) {
            const double x = frac * (*std::min_element(n.begin(), n.end()) - 1.0);
            const double d = 1e-4 * x;
            const double fd = (log_likelihood(m, hist, x + d) - log_likelihood(m, hist, x - d)) / (2.0 * d);
            const double sc = score(m, hist, x);
            // tolerance relative to the sum of absolute per-bin contributions
            const auto p = pmf_at(x);
            const auto dp = register_pmf_derivative(m, x);
            double mag = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k) {
                if (hist.counts[k] > 0) {
                    mag += static_cast<double>(hist.counts[k]) * std::abs(dp[k] / p[k]);
                }
            }
            CHECK(std::abs(sc - fd) <= 1e-5 * mag);
        }
    }
}

TEST_CASE("score of an idealized histogram is zero") {
    const auto m = make_model(512, {20000, 20000, 20000});
    const double n_star = 10000;
    const auto p = register_pmf(m, n_star);
    const auto dp = register_pmf_derivative(m, n_star);
    constexpr double kTotal = 1e12;
    RegisterHistogram hist{std::vector<std::uint64_t>(p.size())};
    double rounding = 0.0;
    double mag = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        hist.counts[k] = static_cast<std::uint64_t>(std::llround(kTotal * p[k]));
        if (p[k] > 0.0) {
            rounding += 0.5 * std::abs(dp[k] / p[k]);
            mag += kTotal * std::abs(dp[k]);
        }
    }
    CHECK(std::abs(score(m, hist, n_star)) <= rounding + 1e-9 * mag);
}

TEST_CASE("mean per-register score at the truth is near zero") {
    std::vector<double> per_register;
    for (std::uint64_t trial = 0; trial < 60; ++trial) {
        const auto sk = period_sketches(512, 4, 4000, 4000, trial + 300);
        const auto m = make_model(512, {8000, 8000, 8000, 8000});
        per_register.push_back(score(m, histogram(intersect(sk)), 4000) / 512.0);
    }
    const double mean = std::accumulate(per_register.begin(), per_register.end(), 0.0) / 60.0;
    const double se = sample_sd(per_register) / std::sqrt(60.0);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("mle_estimate input validation and degenerate model") {
    RegisterHistogram zero{std::vector<std::uint64_t>(32, 0)};
    zero.counts[0] = 512;
    const auto degenerate = mle_estimate(make_model(512, {0, 0}), zero);
    CHECK(degenerate.n_star_hat == 0.0);
    CHECK(degenerate.boundary);

    CHECK_THROWS_AS(mle_estimate(make_model(512, {100}), zero), ParameterError);
    CHECK_THROWS_AS(mle_estimate(make_model(256, {100, 100}), zero), ParameterError);
    RegisterHistogram short_hist{std::vector<std::uint64_t>(16, 0)};
    short_hist.counts[0] = 512;
    CHECK_THROWS_AS(mle_estimate(make_model(512, {100, 100}), short_hist), ParameterError);
    CHECK_THROWS_AS(mle_estimate(make_model(512, {100, -1}), zero), ParameterError);
}

TEST_CASE("mle_estimate finds the likelihood maximum") {
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        const std::uint64_t n_star = 200 + 900 * trial;
        const auto sk = period_sketches(512, 2 + trial % 5, n_star, 1 + n_star / 2, trial + 900);
        std::vector<double> n;
        for (const auto& s : sk) {
            n.push_back(estimate_cardinality(s));
        }
        const auto m = make_model(512, n);
        const auto hist = histogram(intersect(sk));
        const auto est = mle_estimate(m, hist);

        // brute force: fine grid, then the neighbourhood of the best point
        const double upper = *std::min_element(n.begin(), n.end()) - 1.0;
        double best_x = 0.0;
        double best_f = -std::numeric_limits<double>::infinity();
        constexpr int kSteps = 4000;
        for (int i = 0; i <= kSteps; ++i) {
            const double x = upper * i / kSteps;
            const double f = log_likelihood(m, hist, x);
            if (f > best_f) {
                best_f = f;
                best_x = x;
            }
        }
        const double tol = std::max(0.5, 1e-4 * best_x) + upper / kSteps;
        CHECK(std::abs(est.n_star_hat - best_x) <= tol);
        CHECK(log_likelihood(m, hist, est.n_star_hat) >= best_f - 1e-6 * std::abs(best_f));
        if (!est.boundary) {
            CHECK(est.ci_low <= est.n_star_hat);
            CHECK(est.n_star_hat <= est.ci_high);
        }
        CHECK(est.rel_stderr >= 0.0);
        CHECK(est.bracket_low <= est.n_star_hat + tol);
        CHECK(est.n_star_hat <= est.bracket_high + tol);
    }
}

TEST_CASE("mle_estimate depends on the sketches only through the histogram and the n_j multiset") {
    const auto sk = period_sketches(256, 4, 3000, 3000, 77);
    const auto base = mle_estimate(sk);

    std::vector<std::size_t> perm(256);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    std::vector<HllSketch> permuted;
    for (const auto& s : sk) {
        std::vector<std::uint8_t> regs(256);
        for (std::size_t i = 0; i < 256; ++i) {
            regs[perm[i]] = s[i];
        }
        permuted.push_back(HllSketch::from_registers(regs));
    }
    CHECK(mle_estimate(permuted).n_star_hat == base.n_star_hat);

    std::vector<HllSketch> reordered(sk.rbegin(), sk.rend());
    CHECK(mle_estimate(reordered).n_star_hat == doctest::Approx(base.n_star_hat).epsilon(1e-12));
}

TEST_CASE("mle_estimate is nearly unbiased on dedicated sketches") {
    // s = 512, t = 10, n* = 10,000, SNR = 1
    std::vector<double> ratios;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const auto sk = period_sketches(512, 10, 10000, 10000, trial + 2000);
        ratios.push_back(mle_estimate(sk).n_star_hat / 10000.0);
    }
    const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / 100.0;
    CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("sigma^2 and psi^2 closed forms") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t s = std::uint64_t{128} << (rng() % 5);
        std::vector<double> n(2 + rng() % 9);
        for (auto& v : n) {
            v = 1000.0 + 1e5 * u(rng);
        }
        const double n_star = u(rng) * *std::min_element(n.begin(), n.end());
        const auto m = make_model(s, n);
        const double sigma2 = sigma2_oracle(s, n, n_star, 31);
        CHECK(sigma_squared(m, n_star) == doctest::Approx(sigma2).epsilon(1e-9));
        const double sd = static_cast<double>(s);

        // literal three-term psi^2: every term carries (n*)^2 / s^3
        const auto g = [&](int k) { return g_oracle(s, n, n_star, k); };
        double literal = n_star * n_star / (sd * sd * sd) * g(0);
        literal += n_star * n_star * g(30) * g(30) / (sd * sd * sd * std::pow(2.0, 60.0) * (1.0 - g(30)));
        for (int k = 1; k <= 30; ++k) {
            const double mass = g(k) - g(k - 1);
            if (mass > 0.0) {
                literal += n_star * n_star * std::pow(g(k) - 2.0 * g(k - 1), 2) /
                           (sd * sd * sd * std::pow(2.0, 2.0 * k) * mass);
            }
        }
        CHECK(psi_squared(m, n_star, PsiNormalization::closed_form) == doctest::Approx(literal).epsilon(1e-9));
        // the literal form equals (n* sigma)^2 / s; the per-register Fisher form is (n* sigma)^2
        CHECK(literal == doctest::Approx(n_star * n_star * sigma2 / sd).epsilon(1e-9));
        CHECK(psi_squared(m, n_star, PsiNormalization::per_register_fisher) ==
              doctest::Approx(n_star * n_star * sigma2).epsilon(1e-9));
        CHECK(psi_squared(m, n_star) > 0.0);
    }
}

TEST_CASE("stderr helpers") {
    const auto m = make_model(512, {20000, 20000, 20000});
    const double psi2 = psi_squared(m, 10000);
    CHECK(relative_stderr(m, 10000) == doctest::Approx(1.0 / std::sqrt(512.0 * psi2)));
    CHECK(absolute_stderr(m, 10000) == doctest::Approx(10000.0 / std::sqrt(512.0 * psi2)));
    CHECK(std::isfinite(absolute_stderr(m, 0.0)));
    CHECK_THROWS_AS(psi_squared(m, 0.0), ParameterError);
    CHECK_THROWS_AS(psi_squared(m, -3.0), ParameterError);
}

TEST_CASE("confidence interval") {
    CHECK(normal_quantile_two_sided(0.95) == doctest::Approx(1.959963984540054));
    CHECK(normal_quantile_two_sided(0.0) == 0.0);
    CHECK_THROWS_AS(normal_quantile_two_sided(1.0), ParameterError);

    const auto m = make_model(512, {20000, 20000});
    const auto [lo0, hi0] = confidence_interval(9000, m, 0.0);
    CHECK(lo0 == 9000.0);
    CHECK(hi0 == 9000.0);
    const auto [lo, hi] = confidence_interval(9000, m, 0.95);
    CHECK(9000.0 - lo == doctest::Approx(hi - 9000.0));
    CHECK(hi - 9000.0 == doctest::Approx(1.959963984540054 * 9000.0 * relative_stderr(m, 9000)));
}

TEST_CASE("interval width scales as 1/sqrt(s) between s = 128 and s = 512") {
    double width_128 = 0.0;
    double width_512 = 0.0;
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        for (const std::uint32_t s : {128u, 512u}) {
            const auto est = mle_estimate(period_sketches(s, 5, 20000, 20000, trial + 4000));
            (s == 128 ? width_128 : width_512) += est.ci_high - est.ci_low;
        }
    }
    CHECK(width_128 / width_512 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("union baseline") {
    SUBCASE("identical periods give the single-period estimate") {
        const auto sk = period_sketches(512, 2, 5000, 0, 1);
        CHECK(union_baseline_estimate(sk) == doctest::Approx(estimate_cardinality(sk[0])));
    }
    SUBCASE("disjoint periods give about zero") {
        const auto sk = period_sketches(512, 2, 0, 5000, 2);
        CHECK(std::abs(union_baseline_estimate(sk)) < 4.0 * 1.04 / std::sqrt(512.0) * 10000.0);
    }
    SUBCASE("matches an independent inclusion-exclusion") {
        const auto sk = period_sketches(256, 4, 3000, 2000, 3);
        double expected = 0.0;
        for (unsigned mask = 1; mask < 16; ++mask) {
            std::vector<std::uint8_t> regs(256, 0);
            int bits = 0;
            for (unsigned j = 0; j < 4; ++j) {
                if (mask & (1u << j)) {
                    ++bits;
                    for (std::size_t i = 0; i < 256; ++i) {
                        regs[i] = std::max(regs[i], sk[j][i]);
                    }
                }
            }
            expected += (bits % 2 ? 1.0 : -1.0) * estimate_cardinality(regs);
        }
        CHECK(union_baseline_estimate(sk) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("period count limits") {
        CHECK_THROWS_AS(union_baseline_estimate(period_sketches(64, 1, 10, 10, 4)), ParameterError);
        CHECK_THROWS_AS(union_baseline_estimate(period_sketches(64, 7, 10, 10, 4)), ParameterError);
        CHECK_NOTHROW(union_baseline_estimate(period_sketches(64, 6, 10, 10, 4)));
    }
}
