#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "moments.hpp"
#include "ranks.hpp"

namespace steelrank {

enum class Alternative { greater, less, two_sided };

inline const char* to_string(Alternative a) {
    switch (a) {
        case Alternative::greater: return "greater";
        case Alternative::less: return "less";
        case Alternative::two_sided: return "two-sided";
    }
    return "?";
}

inline Alternative parse_alternative(std::string_view s) {
    if (s == "greater") return Alternative::greater;
    if (s == "less") return Alternative::less;
    if (s == "two-sided" || s == "two_sided") return Alternative::two_sided;
    fail(ErrorKind::parameter, "unknown alternative '" + std::string(s) + "'");
}

/// Which summary of the standardized statistics a null distribution is taken over.
enum class Statistic { s_max, s_min, s_abs, vector_w };

inline Statistic statistic_for(Alternative a) {
    switch (a) {
        case Alternative::greater: return Statistic::s_max;
        case Alternative::less: return Statistic::s_min;
        case Alternative::two_sided: return Statistic::s_abs;
    }
    return Statistic::s_max;
}

inline const char* to_string(Statistic s) {
    switch (s) {
        case Statistic::s_max: return "s_max";
        case Statistic::s_min: return "s_min";
        case Statistic::s_abs: return "s_abs";
        case Statistic::vector_w: return "vector_w";
    }
    return "?";
}

/// Mann-Whitney count with ties: #{x < y} + #{x == y} / 2 over all control/treatment pairs.
inline double mann_whitney_star(std::span<const double> control, std::span<const double> treatment) {
    if (control.empty() || treatment.empty()) fail(ErrorKind::data, "empty sample");
    std::vector<double> sorted(control.begin(), control.end());
    std::sort(sorted.begin(), sorted.end());
    double twice = 0.0;
    for (double y : treatment) {
        const auto lo = std::lower_bound(sorted.begin(), sorted.end(), y);
        const auto hi = std::upper_bound(lo, sorted.end(), y);
        twice += 2.0 * static_cast<double>(lo - sorted.begin()) + static_cast<double>(hi - lo);
    }
    return twice / 2.0;
}

/// Standardized value; a degenerate (zero-variance) coordinate maps to 0.
inline double standardize(double w, double mu, double tau) { return tau > 0.0 ? (w - mu) / tau : 0.0; }

inline double reduce_statistic(Statistic stat, std::span<const double> z) {
    switch (stat) {
        case Statistic::s_max: return *std::max_element(z.begin(), z.end());
        case Statistic::s_min: return *std::min_element(z.begin(), z.end());
        case Statistic::s_abs: {
            double m = 0.0;
            for (double v : z) m = std::max(m, std::abs(v));
            return m;
        }
        case Statistic::vector_w: break;
    }
    fail(ErrorKind::parameter, "vector_w has no scalar reduction");
}

struct SteelObservation {
    std::vector<double> w_star;
    std::vector<double> mu;
    std::vector<double> tau;
    std::vector<double> standardized;
    std::vector<bool> degenerate;  // tau_i == 0
    double s_max = 0.0;
    double s_min = 0.0;
    double s_abs = 0.0;
    Alternative alternative = Alternative::greater;

    /// The statistic the alternative calls for.
    double value() const {
        switch (alternative) {
            case Alternative::greater: return s_max;
            case Alternative::less: return s_min;
            case Alternative::two_sided: return s_abs;
        }
        return s_max;
    }

    /// Rank-sum form W_i = W*_i + n_i(n_i + 1)/2.
    double rank_sum(std::size_t i, std::int64_t ni) const { return w_star[i] + static_cast<double>(ni * (ni + 1)) / 2.0; }
};

/// Fills the standardized statistics from raw W* values and fixed conditional moments.
inline SteelObservation make_observation(std::vector<double> w_star, const std::vector<double>& mu,
                                         const std::vector<double>& tau, Alternative alternative) {
    if (w_star.empty() || w_star.size() != mu.size() || mu.size() != tau.size())
        fail(ErrorKind::parameter, "dimension mismatch between statistics and moments");
    SteelObservation obs;
    obs.alternative = alternative;
    obs.w_star = std::move(w_star);
    obs.mu = mu;
    obs.tau = tau;
    for (std::size_t i = 0; i < obs.w_star.size(); ++i) {
        obs.standardized.push_back(standardize(obs.w_star[i], mu[i], tau[i]));
        obs.degenerate.push_back(!(tau[i] > 0.0));
    }
    obs.s_max = reduce_statistic(Statistic::s_max, obs.standardized);
    obs.s_min = reduce_statistic(Statistic::s_min, obs.standardized);
    obs.s_abs = std::max(obs.s_max, -obs.s_min);
    return obs;
}

/// Copy of `obs` with every W* moved half a unit against the tested direction (toward the mean
/// for two-sided tests), the usual continuity correction for normal-approximation p-values.
inline SteelObservation continuity_corrected(const SteelObservation& obs) {
    std::vector<double> w = obs.w_star;
    for (std::size_t i = 0; i < w.size(); ++i) {
        switch (obs.alternative) {
            case Alternative::greater: w[i] -= 0.5; break;
            case Alternative::less: w[i] += 0.5; break;
            case Alternative::two_sided:
                w[i] = w[i] > obs.mu[i] ? std::max(obs.mu[i], w[i] - 0.5) : std::min(obs.mu[i], w[i] + 0.5);
                break;
        }
    }
    return make_observation(std::move(w), obs.mu, obs.tau, obs.alternative);
}

/// Steel statistics of treatments 1..K against control group 0.
inline SteelObservation steel_statistics(const RankedSamples& samples, const MomentSet& moments, Alternative alternative) {
    const std::size_t k = samples.group_count() - 1;
    if (samples.group_count() < 2 || moments.treatments() != k || moments.sizes != samples.sizes)
        fail(ErrorKind::parameter, "dimension mismatch between samples and moments");
    const auto control = samples.group_midranks(0);
    std::vector<double> w(k);
    std::vector<double> tau(k);
    for (std::size_t i = 0; i < k; ++i) {
        w[i] = mann_whitney_star(control, samples.group_midranks(i + 1));
        tau[i] = moments.tau(i);
    }
    return make_observation(std::move(w), moments.mu, tau, alternative);
}

}  // namespace steelrank
