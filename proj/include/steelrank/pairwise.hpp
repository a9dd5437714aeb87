#pragma once

// All-pairwise comparisons among K samples. Pairs (a, b), a < b, are ordered lexicographically
// and carry W*(X_a, X_b) with X_a in the control role. Covariances follow from the shared-control
// covariance together with W*(X_b, X_a) = n_a n_b - W*(X_a, X_b) and the independence of
// statistics on disjoint pairs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "moments.hpp"
#include "normal.hpp"
#include "randomization.hpp"
#include "ranks.hpp"
#include "statistics.hpp"

namespace steelrank {

using IndexPair = std::pair<std::size_t, std::size_t>;

inline std::vector<IndexPair> lexicographic_pairs(std::size_t k) {
    std::vector<IndexPair> out;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) out.emplace_back(a, b);
    return out;
}

/// Conditional covariance of W*(X_p.first, X_p.second) and W*(X_q.first, X_q.second).
template <class Real = double>
Real pair_covariance(std::span<const std::int64_t> sizes, const TiePattern& tie, IndexPair p, IndexPair q) {
    if (p == q) return var_w<Real>(sizes[p.first], sizes[p.second], tie);
    std::size_t shared = 0;
    if (p.first == q.first || p.first == q.second)
        shared = p.first;
    else if (p.second == q.first || p.second == q.second)
        shared = p.second;
    else
        return Real(0);
    // Reflect each statistic so the shared sample is in the control role.
    const Real sign_p = shared == p.first ? Real(1) : Real(-1);
    const Real sign_q = shared == q.first ? Real(1) : Real(-1);
    const std::size_t other_p = shared == p.first ? p.second : p.first;
    const std::size_t other_q = shared == q.first ? q.second : q.first;
    return sign_p * sign_q * cov_w<Real>(sizes[shared], sizes[other_p], sizes[other_q], tie);
}

struct PairwiseMoments {
    std::vector<IndexPair> pairs;
    std::vector<double> mu;
    std::vector<double> tau2;
    std::vector<std::vector<double>> cov;
    double min_eigenvalue = 0.0;
};

inline PairwiseMoments pairwise_moment_matrix(std::span<const std::int64_t> sizes, const TiePattern& tie) {
    if (sizes.size() < 2) fail(ErrorKind::parameter, "pairwise comparisons need at least two samples");
    tie.validate();
    std::int64_t n = 0;
    for (auto s : sizes) {
        if (s < 1) fail(ErrorKind::parameter, "group sizes must be >= 1");
        n += s;
    }
    if (n != tie.total()) fail(ErrorKind::parameter, "group sizes do not sum to the tie pattern total");

    PairwiseMoments m;
    m.pairs = lexicographic_pairs(sizes.size());
    const std::size_t d = m.pairs.size();
    m.cov.assign(d, std::vector<double>(d, 0.0));
    for (std::size_t p = 0; p < d; ++p) {
        m.mu.push_back(mean_w<double>(sizes[m.pairs[p].first], sizes[m.pairs[p].second]));
        for (std::size_t q = 0; q < d; ++q) m.cov[p][q] = pair_covariance<double>(sizes, tie, m.pairs[p], m.pairs[q]);
        m.tau2.push_back(std::max(0.0, m.cov[p][p]));
    }
    Eigen::MatrixXd c(d, d);
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) c(p, q) = m.cov[p][q];
    m.min_eigenvalue = d ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() : 0.0;
    return m;
}

enum class PairwiseMethod { monte_carlo, mvn_sample };

inline const char* to_string(PairwiseMethod m) { return m == PairwiseMethod::monte_carlo ? "monte_carlo" : "mvn_sample"; }

struct PairwiseResult {
    std::vector<IndexPair> pairs;
    std::vector<double> w_star;
    std::vector<double> mu;
    std::vector<double> tau;
    std::vector<double> standardized;
    double s_max = 0.0;
    double s_min = 0.0;
    double s_abs = 0.0;
    Alternative alternative = Alternative::two_sided;
    PairwiseMethod method = PairwiseMethod::monte_carlo;
    PValue p_value;

    double value() const {
        switch (alternative) {
            case Alternative::greater: return s_max;
            case Alternative::less: return s_min;
            case Alternative::two_sided: return s_abs;
        }
        return s_abs;
    }
};

namespace detail {

/// Draws standardized vectors from N(0, R) through a symmetric square root of R with negative
/// eigenvalues clipped to zero.
class CorrelatedNormalSampler {
public:
    CorrelatedNormalSampler(const Eigen::MatrixXd* root, Statistic stat) : root_(root), stat_(stat) {}

    void reset() {}

    double operator()(std::mt19937_64& rng) {
        const auto d = root_->cols();
        e_.resize(d);
        for (Eigen::Index k = 0; k < d; ++k) {
            const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
            e_(k) = std_normal_quantile(u);
        }
        z_ = (*root_) * e_;
        return reduce_statistic(stat_, std::span<const double>(z_.data(), static_cast<std::size_t>(z_.size())));
    }

private:
    const Eigen::MatrixXd* root_;
    Statistic stat_;
    Eigen::VectorXd e_;
    Eigen::VectorXd z_;
};

}  // namespace detail

/// All-pairwise Steel-Dwass type test on K >= 2 samples (no control role).
namespace detail {

/// Tail counts of the reduced pairwise statistic at each threshold, either by re-splitting the
/// pooled midranks or by sampling the normal law with the conditional correlation matrix.
inline std::vector<std::uint64_t> pairwise_tail_counts(const RankedSamples& samples, const PairwiseMoments& moments, Alternative alternative,
                                                       PairwiseMethod method, std::span<const double> thresholds,
                                                       const SimulationOptions& opts) {
    const std::size_t d = moments.pairs.size();
    std::vector<double> tau(d);
    for (std::size_t p = 0; p < d; ++p) tau[p] = std::sqrt(moments.tau2[p]);
    const Statistic stat = statistic_for(alternative);
    if (method == PairwiseMethod::monte_carlo) {
        const SplitStatistic statistic = [&](const SplitCounts& split, std::vector<double>& z) {
            z.resize(d);
            for (std::size_t p = 0; p < d; ++p)
                z[p] = standardize(split.mann_whitney(moments.pairs[p].first, moments.pairs[p].second), moments.mu[p], tau[p]);
            return reduce_statistic(stat, z);
        };
        return simulate_tail_counts(samples, statistic, thresholds, upper_tail(stat), opts);
    }
    double scale = 0.0;
    for (std::size_t p = 0; p < d; ++p) scale = std::max(scale, moments.tau2[p]);
    if (moments.min_eigenvalue < -1e-9 * std::max(1.0, scale))
        fail(ErrorKind::numeric, "pairwise covariance is not positive semidefinite (min eigenvalue " + std::to_string(moments.min_eigenvalue) + ")");
    Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q)
            if (tau[p] > 0.0 && tau[q] > 0.0)
                corr(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = moments.cov[p][q] / (tau[p] * tau[q]);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    const Eigen::VectorXd root_values = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd root = eig.eigenvectors() * root_values.asDiagonal() * eig.eigenvectors().transpose();
    return chunked_tail_counts([&] { return CorrelatedNormalSampler(&root, stat); }, thresholds, upper_tail(stat), opts);
}

}  // namespace detail

/// Tail probabilities of the pairwise statistic for `alternative` at sorted thresholds, from one run.
inline std::vector<double> pairwise_tail_curve(const RankedSamples& samples, Alternative alternative, PairwiseMethod method,
                                               std::span<const double> thresholds, const SimulationOptions& opts) {
    if (samples.group_count() < 2) fail(ErrorKind::parameter, "pairwise comparisons need at least two samples");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) fail(ErrorKind::parameter, "thresholds must be sorted");
    const PairwiseMoments moments = pairwise_moment_matrix(samples.sizes, samples.tie_pattern);
    std::vector<double> out;
    for (auto c : detail::pairwise_tail_counts(samples, moments, alternative, method, thresholds, opts))
        out.push_back(detail::monte_carlo_p_value(c, opts).estimate);
    return out;
}

inline PairwiseResult pairwise_test(const RankedSamples& samples, Alternative alternative, PairwiseMethod method,
                                    const SimulationOptions& opts) {
    const std::size_t k = samples.group_count();
    if (k < 2) fail(ErrorKind::parameter, "pairwise comparisons need at least two samples");
    if (opts.nsim == 0) fail(ErrorKind::parameter, "nsim must be >= 1");
    const PairwiseMoments moments = pairwise_moment_matrix(samples.sizes, samples.tie_pattern);
    const std::size_t d = moments.pairs.size();

    PairwiseResult res;
    res.pairs = moments.pairs;
    res.alternative = alternative;
    res.method = method;
    res.mu = moments.mu;
    for (std::size_t p = 0; p < d; ++p) {
        res.tau.push_back(std::sqrt(moments.tau2[p]));
        const auto [a, b] = moments.pairs[p];
        res.w_star.push_back(mann_whitney_star(samples.group_midranks(a), samples.group_midranks(b)));
        res.standardized.push_back(standardize(res.w_star[p], res.mu[p], res.tau[p]));
    }
    res.s_max = reduce_statistic(Statistic::s_max, res.standardized);
    res.s_min = reduce_statistic(Statistic::s_min, res.standardized);
    res.s_abs = std::max(res.s_max, -res.s_min);

    const double threshold = res.value();
    const auto counts = detail::pairwise_tail_counts(samples, moments, alternative, method, std::span<const double>(&threshold, 1), opts);
    res.p_value = detail::monte_carlo_p_value(counts[0], opts);
    if (method == PairwiseMethod::mvn_sample) res.p_value.method = PMethod::asymptotic;
    return res;
}

}  // namespace steelrank
