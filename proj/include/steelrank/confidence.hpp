#pragma once

// Simultaneous confidence bounds and intervals for shifts Delta_1..Delta_K in the continuous
// shift model F_i(x) = F_0(x - Delta_i). With D_i(j) the j-th smallest treatment-minus-control
// difference,
//
//     P(Delta_i <= D_i(j_i) for all i) = P_0(W_i <= j_i - 1 for all i)
//     P(Delta_i >= D_i(j_i) for all i) = P_0(W_i <= n_0 n_i - j_i for all i)
//
// so bounds come from choosing indices j_i under the joint null distribution of the W_i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "gauss.hpp"
#include "moments.hpp"
#include "randomization.hpp"
#include "ranks.hpp"

namespace steelrank {

enum class BoundSide { upper, lower };
enum class BoundDirection { upper, lower, interval };
enum class CoverageMethod { normal, exact };

inline const char* to_string(BoundSide s) { return s == BoundSide::upper ? "upper" : "lower"; }

inline const char* to_string(BoundDirection d) {
    switch (d) {
        case BoundDirection::upper: return "upper";
        case BoundDirection::lower: return "lower";
        case BoundDirection::interval: return "interval";
    }
    return "?";
}

/// All n_0 n_i differences treatment - control, ascending.
inline std::vector<double> pairwise_differences(std::span<const double> control, std::span<const double> treatment) {
    if (control.empty() || treatment.empty()) fail(ErrorKind::data, "empty sample");
    std::vector<double> out;
    out.reserve(control.size() * treatment.size());
    for (double y : treatment)
        for (double x : control) out.push_back(y - x);
    std::sort(out.begin(), out.end());
    return out;
}

/// Null factor model of the untied statistics for group sizes n_0..n_K.
inline FactorModel continuous_model(std::span<const std::int64_t> sizes) {
    std::int64_t n = 0;
    for (auto s : sizes) n += s;
    return FactorModel::from_moments(factor_decomposition(sizes, TiePattern::untied(n)));
}

/// Exact P_0(W_i <= j_i - 1 for all i) for continuous data, by enumerating all splits.
inline double exact_lower_box_coverage(std::span<const std::int64_t> sizes, std::span<const std::int64_t> j,
                                       const ExactOptions& opts = {}) {
    if (sizes.size() != j.size() + 1) fail(ErrorKind::parameter, "index dimension mismatch");
    std::int64_t n = 0;
    for (auto s : sizes) n += s;
    detail::SplitEnumerator enumerator(std::vector<std::int64_t>(sizes.begin(), sizes.end()), TiePattern::untied(n),
                                       detail::control_pairs(sizes.size()), opts.budget);
    std::uint64_t inside = 0;
    const std::uint64_t total = enumerator.run([&](std::span<const double> w, std::uint64_t weight) {
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i] > static_cast<double>(j[i] - 1)) return;
        inside += weight;
    });
    return static_cast<double>(inside) / static_cast<double>(total);
}

struct IndexCandidate {
    std::vector<std::int64_t> j;
    double coverage = 0.0;
};

struct IndexSelection {
    BoundSide side = BoundSide::upper;
    double gamma = 0.0;
    double threshold = 0.0;                  // common standardized threshold u*
    std::vector<IndexCandidate> candidates;  // floor, ceil, nearest (upper-bound indexing)
    std::vector<std::int64_t> j_conservative;
    std::vector<std::int64_t> j_closest;
    double achieved_conservative = 0.0;
    double achieved_closest = 0.0;
    bool unreachable = false;  // even j_i = n_0 n_i stays below gamma
};

struct SelectOptions {
    CoverageMethod coverage = CoverageMethod::normal;
    QuadratureOptions quadrature{};
    ExactOptions exact{};
};

/// Chooses indices j_i for simultaneous bounds at level gamma. `model` must be the untied model of
/// `sizes` (n_0..n_K). Candidates round n_0 n_i / 2 + u* tau_i + 1 down, up and to nearest, the same
/// way for every i; the conservative choice is the smallest coverage >= gamma, the closest choice
/// minimizes |coverage - gamma|. Lower-bound indices are the reflection n_0 n_i + 1 - j_i.
inline IndexSelection select_indices(const FactorModel& model, std::span<const std::int64_t> sizes, double gamma, BoundSide side,
                                     const SelectOptions& opts = {}) {
    if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorKind::parameter, "gamma must lie in (0, 1)");
    model.validate();
    const std::size_t k = model.size();
    if (sizes.size() != k + 1) fail(ErrorKind::parameter, "sizes do not match the factor model");

    IndexSelection sel;
    sel.side = side;
    sel.gamma = gamma;
    try {
        sel.threshold = solve_common_threshold(model, gamma, opts.quadrature);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        sel.threshold = std::numeric_limits<double>::infinity();
    }

    std::vector<std::int64_t> max_index(k);
    for (std::size_t i = 0; i < k; ++i) max_index[i] = sizes[0] * sizes[i + 1];

    const auto coverage = [&](const std::vector<std::int64_t>& j) {
        if (opts.coverage == CoverageMethod::exact) return exact_lower_box_coverage(sizes, j, opts.exact);
        std::vector<double> c(k);
        for (std::size_t i = 0; i < k; ++i) c[i] = static_cast<double>(j[i] - 1);
        return joint_lower_box_prob(model, c, opts.quadrature);
    };

    const auto rounded = [&](double (*round)(double)) {
        IndexCandidate cand;
        for (std::size_t i = 0; i < k; ++i) {
            const double target = model.mu[i] + sel.threshold * model.tau[i] + 1.0;
            const double clamped = std::clamp(target, 1.0, static_cast<double>(max_index[i]));
            cand.j.push_back(std::clamp(static_cast<std::int64_t>(round(clamped)), std::int64_t{1}, max_index[i]));
        }
        cand.coverage = coverage(cand.j);
        return cand;
    };
    sel.candidates.push_back(rounded(static_cast<double (*)(double)>(std::floor)));
    sel.candidates.push_back(rounded(static_cast<double (*)(double)>(std::ceil)));
    sel.candidates.push_back(rounded(static_cast<double (*)(double)>(std::round)));

    const IndexCandidate* conservative = nullptr;
    const IndexCandidate* closest = nullptr;
    for (const auto& cand : sel.candidates) {
        if (cand.coverage >= gamma && (!conservative || cand.coverage < conservative->coverage)) conservative = &cand;
        const double gap = std::abs(cand.coverage - gamma);
        if (!closest || gap < std::abs(closest->coverage - gamma) ||
            (gap == std::abs(closest->coverage - gamma) && cand.coverage > closest->coverage))
            closest = &cand;
    }
    IndexCandidate fallback;
    if (!conservative) {
        fallback.j = max_index;
        fallback.coverage = coverage(fallback.j);
        sel.unreachable = fallback.coverage < gamma;
        conservative = &fallback;
    }
    sel.j_conservative = conservative->j;
    sel.achieved_conservative = conservative->coverage;
    sel.j_closest = closest->j;
    sel.achieved_closest = closest->coverage;

    if (side == BoundSide::lower) {
        for (std::size_t i = 0; i < k; ++i) {
            sel.j_conservative[i] = max_index[i] + 1 - sel.j_conservative[i];
            sel.j_closest[i] = max_index[i] + 1 - sel.j_closest[i];
        }
    }
    return sel;
}

struct OneSidedBounds {
    BoundSide side = BoundSide::upper;
    IndexSelection selection;
    std::vector<double> conservative;  // D_i(j_i) +/- epsilon with the conservative indices
    std::vector<double> closest;       // same with the closest indices
};

struct ConfidenceResult {
    BoundDirection direction = BoundDirection::interval;
    double nominal_gamma = 0.0;
    double one_sided_level = 0.0;  // (1 + gamma) / 2 for intervals
    double widened_by = 0.0;
    std::optional<OneSidedBounds> lower;
    std::optional<OneSidedBounds> upper;
    std::vector<std::string> warnings;
};

namespace detail {

inline void check_bound_inputs(const std::vector<std::vector<double>>& samples, double gamma, double eps) {
    if (samples.size() < 2) fail(ErrorKind::parameter, "need a control and at least one treatment");
    if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorKind::parameter, "gamma must lie in (0, 1)");
    if (!(eps >= 0.0)) fail(ErrorKind::parameter, "rounding epsilon must be >= 0");
    for (const auto& s : samples)
        if (s.empty()) fail(ErrorKind::data, "empty sample");
}

inline OneSidedBounds one_sided(const std::vector<std::vector<double>>& samples, const std::vector<std::int64_t>& sizes,
                                const FactorModel& model, double level, BoundSide side, double eps, const SelectOptions& opts) {
    OneSidedBounds out;
    out.side = side;
    out.selection = select_indices(model, sizes, level, side, opts);
    const double shift = side == BoundSide::upper ? eps : -eps;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const auto diffs = pairwise_differences(samples[0], samples[i]);
        out.conservative.push_back(diffs[static_cast<std::size_t>(out.selection.j_conservative[i - 1] - 1)] + shift);
        out.closest.push_back(diffs[static_cast<std::size_t>(out.selection.j_closest[i - 1] - 1)] + shift);
    }
    return out;
}

inline std::vector<std::string> bound_warnings(const std::vector<std::vector<double>>& samples, double eps) {
    std::vector<std::string> out;
    std::vector<double> pooled;
    for (const auto& s : samples) pooled.insert(pooled.end(), s.begin(), s.end());
    if (extract_tie_pattern(pooled).distinct() < pooled.size()) {
        out.emplace_back("ties present: bounds use continuous-model indices");
        if (eps == 0.0) out.emplace_back("ties present: consider a rounding epsilon > 0");
    }
    return out;
}

inline std::vector<std::int64_t> sizes_of(const std::vector<std::vector<double>>& samples) {
    std::vector<std::int64_t> sizes;
    for (const auto& s : samples) sizes.push_back(static_cast<std::int64_t>(s.size()));
    return sizes;
}

}  // namespace detail

/// One-sided simultaneous bounds; samples[0] is the control.
inline ConfidenceResult simultaneous_bounds(const std::vector<std::vector<double>>& samples, double gamma, BoundSide side,
                                            double rounding_eps = 0.0, const SelectOptions& opts = {}) {
    detail::check_bound_inputs(samples, gamma, rounding_eps);
    const auto sizes = detail::sizes_of(samples);
    const FactorModel model = continuous_model(sizes);
    ConfidenceResult res;
    res.direction = side == BoundSide::upper ? BoundDirection::upper : BoundDirection::lower;
    res.nominal_gamma = gamma;
    res.one_sided_level = gamma;
    res.widened_by = rounding_eps;
    res.warnings = detail::bound_warnings(samples, rounding_eps);
    auto bounds = detail::one_sided(samples, sizes, model, gamma, side, rounding_eps, opts);
    if (bounds.selection.unreachable) res.warnings.emplace_back("conservative target unreachable");
    (side == BoundSide::upper ? res.upper : res.lower) = std::move(bounds);
    return res;
}

/// Simultaneous intervals from lower and upper bounds each at level (1 + gamma) / 2.
inline ConfidenceResult simultaneous_intervals(const std::vector<std::vector<double>>& samples, double gamma,
                                               double rounding_eps = 0.0, const SelectOptions& opts = {}) {
    detail::check_bound_inputs(samples, gamma, rounding_eps);
    const auto sizes = detail::sizes_of(samples);
    const FactorModel model = continuous_model(sizes);
    const double level = (1.0 + gamma) / 2.0;
    ConfidenceResult res;
    res.direction = BoundDirection::interval;
    res.nominal_gamma = gamma;
    res.one_sided_level = level;
    res.widened_by = rounding_eps;
    res.warnings = detail::bound_warnings(samples, rounding_eps);
    res.lower = detail::one_sided(samples, sizes, model, level, BoundSide::lower, rounding_eps, opts);
    res.upper = detail::one_sided(samples, sizes, model, level, BoundSide::upper, rounding_eps, opts);
    if (res.lower->selection.unreachable || res.upper->selection.unreachable)
        res.warnings.emplace_back("conservative target unreachable");
    return res;
}

inline ConfidenceResult simultaneous_confidence(const std::vector<std::vector<double>>& samples, double gamma, BoundDirection direction,
                                                double rounding_eps = 0.0, const SelectOptions& opts = {}) {
    switch (direction) {
        case BoundDirection::upper: return simultaneous_bounds(samples, gamma, BoundSide::upper, rounding_eps, opts);
        case BoundDirection::lower: return simultaneous_bounds(samples, gamma, BoundSide::lower, rounding_eps, opts);
        case BoundDirection::interval: return simultaneous_intervals(samples, gamma, rounding_eps, opts);
    }
    return {};
}

}  // namespace steelrank
