#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pspread/hll.hpp"

namespace pspread {

/// Statistical context of an intersection sketch: s registers per sketch,
/// plug-in per-period cardinalities n_1..n_t (treated as constants), and
/// the register cap H.
struct IntersectionModel {
    std::uint64_t registers = 0;
    std::vector<double> period_cardinalities;
    unsigned cap = register_cap(kDefaultRegisterWidth);

    std::size_t periods() const noexcept { return period_cardinalities.size(); }
    double min_cardinality() const noexcept;

    /// Throws ParameterError unless t >= 1, s >= 1, H >= 1 and all n_j >= 0.
    /// (t = 1 is accepted for degenerate checks; estimators require t >= 2.)
    void validate() const;
};

// N_k: number of registers holding value k, k = 0..H.
struct RegisterHistogram {
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const noexcept;
};

RegisterHistogram histogram(std::span<const std::uint8_t> registers, unsigned cap);
inline RegisterHistogram histogram(const HllSketch& sketch) {
    return histogram(sketch.registers(), sketch.cap());
}

// Floor applied to n_j - n* inside the generation function and its derivative.
inline constexpr double kTransientFloor = 1e-6;

/// G_s(n*, k) = e^{-n*/(s2^k)} (1 - prod_j (1 - e^{-(n_j - n*)/(s2^k)})),
/// the probability that an intersection register is <= k.
double generation_function(const IntersectionModel& model, double n_star, int k);

/// 1 - G_s(n*, k), evaluated without cancellation.
double generation_survival(const IntersectionModel& model, double n_star, int k);

/// Distribution of one intersection register over 0..H. Sums to one.
std::vector<double> register_pmf(const IntersectionModel& model, double n_star);

/// dG_s(n*, k)/dn* with every n_j held fixed. Throws ModelError when some
/// n_j - n* falls below kTransientFloor.
double generation_function_derivative(const IntersectionModel& model, double n_star, int k);

/// d pmf[k] / dn*, k = 0..H.
std::vector<double> register_pmf_derivative(const IntersectionModel& model, double n_star);

/// sum_k N_k ln pmf[k], omitting the multinomial constant. Returns -infinity
/// when an observed value has zero probability.
double log_likelihood(const IntersectionModel& model, const RegisterHistogram& hist, double n_star);

/// d ln L / dn*. Returns NaN where log_likelihood would be -infinity.
double score(const IntersectionModel& model, const RegisterHistogram& hist, double n_star);

/// How psi^2 is scaled from the per-register variance sigma^2.
enum class PsiNormalization {
    // psi^2 = (n* sigma)^2: sigma^2 is the per-register Fisher information,
    // so Var(n^*) = (n*)^2 / (s psi^2) = 1 / (s sigma^2).
    per_register_fisher,
    // psi^2 = (n* sigma)^2 / s: the literal three-term closed form (its
    // prefactor is (n*)^2 / s^3 against sigma^2's 1 / s^2).
    closed_form,
};

/// Normalization used by default; chosen by the Monte-Carlo stderr calibration
/// (see tests/test_calibration.cpp).
inline constexpr PsiNormalization kCalibratedPsi = PsiNormalization::per_register_fisher;

/// Three-term closed form of sigma^2, the variance of the per-register score,
/// using dG/dn* ~ -G/(s2^k) (transient counts held fixed). Terms whose
/// denominator vanishes are skipped.
double sigma_squared(const IntersectionModel& model, double n_star);

/// psi^2 at n* > 0 under the chosen normalization.
double psi_squared(const IntersectionModel& model, double n_star,
                   PsiNormalization normalization = kCalibratedPsi);

/// Relative standard error 1 / (sqrt(s) psi).
double relative_stderr(const IntersectionModel& model, double n_star,
                       PsiNormalization normalization = kCalibratedPsi);

/// Absolute standard deviation n* / (sqrt(s) psi); finite as n* -> 0.
double absolute_stderr(const IntersectionModel& model, double n_star,
                       PsiNormalization normalization = kCalibratedPsi);

/// Two-sided standard normal quantile Z_{eps/2} for a (1 - eps) interval.
double normal_quantile_two_sided(double confidence);

/// n^* -/+ Z_{eps/2} n^* / (sqrt(s) psi), symmetric around the plug-in estimate.
std::pair<double, double> confidence_interval(double estimate, const IntersectionModel& model,
                                              double confidence);

struct PersistentEstimate {
    double n_star_hat = 0.0;
    double rel_stderr = 0.0;  // relative; +inf when the estimate is 0
    double ci_low = 0.0;
    double ci_high = 0.0;
    int iterations = 0;
    double bracket_low = 0.0;
    double bracket_high = 0.0;
    bool boundary = false;
    // set by the virtual-array estimator when the noise-corrected value was negative
    bool clamped = false;
};

inline constexpr double kDefaultConfidence = 0.95;

/// Maximum-likelihood persistent spread over n* in [0, min_j n_j - 1]:
/// a coarse scan, golden-section refinement, then bisection on the score
/// sign change. Absolute tolerance max(0.5, 1e-4 n^*).
PersistentEstimate mle_estimate(const IntersectionModel& model, const RegisterHistogram& hist,
                                double confidence = kDefaultConfidence);

/// Convenience overload: n_j from estimate_cardinality of each period sketch,
/// histogram from their register-wise intersection.
PersistentEstimate mle_estimate(std::span<const HllSketch> period_sketches,
                                double confidence = kDefaultConfidence);

inline constexpr std::size_t kUnionBaselineMaxPeriods = 6;

/// Inclusion-exclusion over all 2^t - 1 period subsets, each union
/// cardinality estimated from the register-wise union sketch. t in [2, 6].
double union_baseline_estimate(std::span<const HllSketch> period_sketches);

}  // namespace pspread
