#pragma once

// Midranks, tie patterns and asymptotic-validity diagnostics for pooled samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace steelrank {

/// Multiplicities d_1..d_e of the distinct pooled values, in ascending value order.
struct TiePattern {
    std::vector<std::int64_t> d;

    std::size_t distinct() const { return d.size(); }
    std::int64_t total() const { return std::accumulate(d.begin(), d.end(), std::int64_t{0}); }

    /// Sum of d(d-1).
    std::int64_t s2() const {
        std::int64_t s = 0;
        for (auto v : d) s += v * (v - 1);
        return s;
    }
    /// Sum of d(d-1)(d-2).
    std::int64_t s3() const {
        std::int64_t s = 0;
        for (auto v : d) s += v * (v - 1) * (v - 2);
        return s;
    }
    /// Sum of d(d-1)(d+1) = sum of d^3 - d.
    std::int64_t s3_plus() const {
        std::int64_t s = 0;
        for (auto v : d) s += v * (v - 1) * (v + 1);
        return s;
    }
    std::int64_t max_multiplicity() const { return d.empty() ? 0 : *std::max_element(d.begin(), d.end()); }

    static TiePattern untied(std::int64_t n) { return TiePattern{std::vector<std::int64_t>(static_cast<std::size_t>(n), 1)}; }

    void validate() const {
        if (d.empty()) fail(ErrorKind::parameter, "tie pattern has no distinct values");
        for (auto v : d)
            if (v < 1) fail(ErrorKind::parameter, "tie multiplicities must be >= 1");
    }

    friend bool operator==(const TiePattern&, const TiePattern&) = default;
};

namespace detail {

inline void check_orderable(std::span<const double> values) {
    if (values.empty()) fail(ErrorKind::data, "empty sample");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (std::isnan(values[i])) fail(ErrorKind::data, "non-orderable value at index " + std::to_string(i));
}

inline std::vector<std::size_t> sorted_order(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return order;
}

}  // namespace detail

/// Midranks of `values`, in input order. Tied values share the mean of the ranks they occupy;
/// each midrank is an integer or half-integer and therefore exact in binary floating point.
inline std::vector<double> compute_midranks(std::span<const double> values) {
    detail::check_orderable(values);
    const auto order = detail::sorted_order(values);
    std::vector<double> out(values.size());
    std::size_t start = 0;
    while (start < order.size()) {
        std::size_t stop = start + 1;
        while (stop < order.size() && values[order[stop]] == values[order[start]]) ++stop;
        // ranks start+1 .. stop, mean = (start + 1 + stop) / 2
        const double midrank = static_cast<double>(start + 1 + stop) / 2.0;
        for (std::size_t k = start; k < stop; ++k) out[order[k]] = midrank;
        start = stop;
    }
    return out;
}

inline TiePattern extract_tie_pattern(std::span<const double> values) {
    detail::check_orderable(values);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    TiePattern tie;
    std::size_t start = 0;
    while (start < sorted.size()) {
        std::size_t stop = start + 1;
        while (stop < sorted.size() && sorted[stop] == sorted[start]) ++stop;
        tie.d.push_back(static_cast<std::int64_t>(stop - start));
        start = stop;
    }
    return tie;
}

/// Pooled samples with midranks. Group 0 is the control in many-to-one comparisons.
struct RankedSamples {
    std::vector<double> midranks;         // pooled order: group 0 first, then group 1, ...
    std::vector<std::size_t> groups;      // group label per pooled observation
    std::vector<std::size_t> tie_class;   // index of the distinct value, 0..e-1
    std::vector<std::int64_t> sizes;      // n_0..n_K
    TiePattern tie_pattern;
    std::vector<double> values;           // distinct original values u_1 < ... < u_e

    std::size_t group_count() const { return sizes.size(); }
    std::int64_t total() const { return static_cast<std::int64_t>(midranks.size()); }

    /// Midrank of the distinct value with index `cls`.
    double class_midrank(std::size_t cls) const {
        std::int64_t upto = 0;
        for (std::size_t v = 0; v <= cls; ++v) upto += tie_pattern.d[v];
        return static_cast<double>(2 * upto - tie_pattern.d[cls] + 1) / 2.0;
    }

    std::vector<double> group_midranks(std::size_t g) const {
        std::vector<double> out;
        for (std::size_t k = 0; k < midranks.size(); ++k)
            if (groups[k] == g) out.push_back(midranks[k]);
        return out;
    }
};

inline RankedSamples rank_samples(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) fail(ErrorKind::data, "no samples");
    RankedSamples out;
    std::vector<double> pooled;
    for (std::size_t g = 0; g < samples.size(); ++g) {
        if (samples[g].empty()) fail(ErrorKind::data, "empty sample in group " + std::to_string(g));
        out.sizes.push_back(static_cast<std::int64_t>(samples[g].size()));
        for (double v : samples[g]) {
            pooled.push_back(v);
            out.groups.push_back(g);
        }
    }
    out.midranks = compute_midranks(pooled);
    out.tie_pattern = extract_tie_pattern(pooled);

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    out.values = sorted;
    out.tie_class.resize(pooled.size());
    for (std::size_t k = 0; k < pooled.size(); ++k)
        out.tie_class[k] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), pooled[k]) - sorted.begin());
    return out;
}

struct Diagnostics {
    double max_tie_fraction = 0.0;
    double min_group_fraction = 0.0;
    double epsilon = 0.1;
    std::vector<std::string> warnings;
};

struct DiagnosticOptions {
    double epsilon = 0.1;
    std::int64_t min_group_size = 5;
};

/// Flags violations of the large-sample conditions: a dominant tie block (max d/N > 1 - epsilon)
/// and groups below the small-sample floor.
inline Diagnostics check_asymptotic_conditions(const RankedSamples& samples, DiagnosticOptions opts = {}) {
    if (!(opts.epsilon > 0.0 && opts.epsilon < 1.0)) fail(ErrorKind::parameter, "epsilon must lie in (0, 1)");
    const auto n = static_cast<double>(samples.total());
    Diagnostics diag;
    diag.epsilon = opts.epsilon;
    diag.max_tie_fraction = static_cast<double>(samples.tie_pattern.max_multiplicity()) / n;
    const auto smallest = *std::min_element(samples.sizes.begin(), samples.sizes.end());
    diag.min_group_fraction = static_cast<double>(smallest) / n;

    if (diag.max_tie_fraction > 1.0 - opts.epsilon) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", diag.max_tie_fraction);
        std::string frac(buf);
        while (frac.size() > 3 && frac.back() == '0' && frac[frac.size() - 2] != '.') frac.pop_back();
        diag.warnings.push_back("extreme ties: max d/N = " + frac);
    }
    if (samples.tie_pattern.distinct() == 2) diag.warnings.emplace_back("two-valued data");
    for (std::size_t g = 0; g < samples.sizes.size(); ++g)
        if (samples.sizes[g] < opts.min_group_size)
            diag.warnings.push_back("small group: n" + std::to_string(g) + " = " + std::to_string(samples.sizes[g]) +
                                    " < " + std::to_string(opts.min_group_size));
    return diag;
}

}  // namespace steelrank
