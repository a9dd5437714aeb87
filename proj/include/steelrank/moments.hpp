#pragma once

// Exact conditional moments of Mann-Whitney statistics under the randomization model,
// conditional on the pooled tie pattern.
//
// The scalar formulas are templates over the arithmetic type so that tests can evaluate
// them in exact rational arithmetic; the library itself instantiates them with double.
// Tie sums are accumulated as exact integers before conversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ranks.hpp"

namespace steelrank {

template <class Real = double>
Real mean_w(std::int64_t n0, std::int64_t ni) {
    if (n0 < 1 || ni < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
    return Real(n0) * Real(ni) / Real(2);
}

namespace detail {

// Each formula is written over a common denominator so that the integer-valued numerator
// cancels exactly for a fully tied pattern.

/// Two-sample tie-corrected variance; only valid when the pattern covers exactly n0 + n1 values.
template <class Real>
Real var_two_sample(std::int64_t n0, std::int64_t n1, const TiePattern& tie) {
    const std::int64_t m = n0 + n1;
    const Real denom = Real(m) * Real(m - 1);
    const Real numer = Real(m + 1) * denom - Real(tie.s3_plus());
    return Real(n0) * Real(n1) * numer / (Real(12) * denom);
}

/// Three-term variance for n0 + n1 <= N drawn from a pool with the given tie pattern. Needs N >= 3.
template <class Real>
Real var_three_term(std::int64_t n0, std::int64_t n1, const TiePattern& tie) {
    const std::int64_t n = tie.total();
    const Real denom = Real(n) * Real(n - 1) * Real(n - 2);
    const Real numer = Real(n0 + n1 + 1) * denom - Real(n0 + n1 - 2) * Real(tie.s3_plus()) - Real(3) * Real(n - n0 - n1) * Real(tie.s2());
    return Real(n0) * Real(n1) * numer / (Real(12) * denom);
}

template <class Real>
Real sigma0_squared(std::int64_t n0, const TiePattern& tie) {
    const std::int64_t s3 = tie.s3();
    if (s3 == 0) return Real(n0) / Real(12);
    const std::int64_t n = tie.total();
    const Real denom = Real(n) * Real(n - 1) * Real(n - 2);
    return Real(n0) * (denom - Real(s3)) / (Real(12) * denom);
}

/// Idiosyncratic variance of treatment i in the one-factor representation. Needs N >= 3.
template <class Real>
Real sigma_i_squared(std::int64_t n0, std::int64_t ni, const TiePattern& tie) {
    const std::int64_t n = tie.total();
    const Real denom = Real(n) * Real(n - 1) * Real(n - 2);
    const Real numer = Real(n0 + 1) * denom - Real(3) * Real(n - 2) * Real(tie.s2()) - Real(n0 - 2) * Real(tie.s3());
    return Real(n0) * Real(ni) * numer / (Real(12) * denom);
}

}  // namespace detail

/// Conditional variance of W*(X0, Xi) given the tie pattern of all N pooled values.
template <class Real = double>
Real var_w(std::int64_t n0, std::int64_t ni, const TiePattern& tie) {
    if (n0 < 1 || ni < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
    tie.validate();
    const std::int64_t n = tie.total();
    if (n0 + ni > n) fail(ErrorKind::parameter, "n0 + ni exceeds the pooled sample size");
    if (n0 + ni == n) return detail::var_two_sample<Real>(n0, ni, tie);
    return detail::var_three_term<Real>(n0, ni, tie);
}

/// Conditional covariance of W*(X0, X1) and W*(X0, X2) sharing the sample X0.
template <class Real = double>
Real cov_w(std::int64_t n0, std::int64_t n1, std::int64_t n2, const TiePattern& tie) {
    if (n0 < 1 || n1 < 1 || n2 < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
    tie.validate();
    const std::int64_t n = tie.total();
    if (n0 + n1 + n2 > n) fail(ErrorKind::parameter, "n0 + n1 + n2 exceeds the pooled sample size");
    const Real prod = Real(n0) * Real(n1) * Real(n2);
    if (tie.s3() == 0) return prod / Real(12);
    const Real denom = Real(n) * Real(n - 1) * Real(n - 2);
    return prod * (denom - Real(tie.s3())) / (Real(12) * denom);
}

/// Means, covariances and the one-factor decomposition tau_i^2 = n_i^2 sigma0^2 + sigma_i^2
/// for the K treatment-vs-control statistics.
struct MomentSet {
    std::vector<std::int64_t> sizes;  // n_0..n_K
    std::vector<double> mu;
    std::vector<double> tau2;
    std::vector<std::vector<double>> cov;
    double sigma0_2 = 0.0;
    std::vector<double> sigma2;
    bool tie_adjusted = true;
    // (untied tau^2 - tau^2) / untied tau^2 per treatment: the size of the tie correction
    std::vector<double> tie_correction_ratio;
    std::vector<std::string> warnings;

    std::size_t treatments() const { return mu.size(); }
    double tau(std::size_t i) const { return std::sqrt(tau2[i]); }
    double sigma(std::size_t i) const { return std::sqrt(sigma2[i]); }
    double sigma0() const { return std::sqrt(sigma0_2); }
};

namespace detail {

inline double clamp_nonnegative(double value, double scale, const char* name, std::vector<std::string>& warnings) {
    if (value >= 0.0) return value;
    const double tol = 1e-9 * std::max(1.0, std::abs(scale));
    if (value < -tol) fail(ErrorKind::numeric, std::string(name) + " is negative beyond rounding error");
    if (value < -1e-9) warnings.push_back(std::string(name) + " clamped to 0 from " + std::to_string(value));
    return 0.0;
}

}  // namespace detail

/// Builds the MomentSet for sizes n_0..n_K. With `adjust_ties = false` the untied pattern of the
/// same N is used instead of `tie`.
inline MomentSet factor_decomposition(std::span<const std::int64_t> sizes, const TiePattern& tie, bool adjust_ties = true) {
    if (sizes.size() < 2) fail(ErrorKind::parameter, "need a control and at least one treatment");
    tie.validate();
    std::int64_t n = 0;
    for (auto s : sizes) {
        if (s < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
        n += s;
    }
    if (n != tie.total()) fail(ErrorKind::parameter, "group sizes do not sum to the tie pattern total");

    const TiePattern pattern = adjust_ties ? tie : TiePattern::untied(n);
    const TiePattern untied = TiePattern::untied(n);
    const std::int64_t n0 = sizes[0];
    const std::size_t k = sizes.size() - 1;

    MomentSet m;
    m.sizes.assign(sizes.begin(), sizes.end());
    m.tie_adjusted = adjust_ties;
    m.sigma0_2 = detail::clamp_nonnegative(detail::sigma0_squared<double>(n0, pattern), static_cast<double>(n0) / 12.0,
                                           "sigma0^2", m.warnings);
    m.mu.resize(k);
    m.tau2.resize(k);
    m.sigma2.resize(k);
    m.tie_correction_ratio.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::int64_t ni = sizes[i + 1];
        m.mu[i] = mean_w<double>(n0, ni);
        const double lead = var_w<double>(n0, ni, untied);
        m.tau2[i] = detail::clamp_nonnegative(var_w<double>(n0, ni, pattern), lead, "tau^2", m.warnings);
        const double s2 = n >= 3 ? detail::sigma_i_squared<double>(n0, ni, pattern)
                                 : m.tau2[i] - static_cast<double>(ni * ni) * m.sigma0_2;
        m.sigma2[i] = detail::clamp_nonnegative(s2, lead, "sigma_i^2", m.warnings);
        m.tie_correction_ratio[i] = lead > 0.0 ? (lead - m.tau2[i]) / lead : 0.0;
    }
    m.cov.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            m.cov[i][j] = i == j ? m.tau2[i] : cov_w<double>(n0, sizes[i + 1], sizes[j + 1], pattern);
        }
    }
    return m;
}

inline MomentSet factor_decomposition(const RankedSamples& samples, bool adjust_ties = true) {
    return factor_decomposition(samples.sizes, samples.tie_pattern, adjust_ties);
}

}  // namespace steelrank
