#pragma once

// Normal approximation of the joint null distribution of the K treatment-vs-control statistics.
//
// The covariance of (W*_1..W*_K) equals that of n_i V_0 + V_i with independent V's, so every
// joint box probability of the standardized statistics reduces to a single integral over the
// shared factor z = V_0 / sigma_0:
//
//     P(lo_i < Z_i <= hi_i for all i) = int prod_i [Phi((hi_i tau_i - n_i sigma_0 z) / sigma_i)
//                                                   - Phi((lo_i tau_i - n_i sigma_0 z) / sigma_i)] phi(z) dz
//
// evaluated with a composite Gauss-Legendre rule on [-8.5, 8.5].

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "error.hpp"
#include "moments.hpp"
#include "normal.hpp"
#include "statistics.hpp"

namespace steelrank {

struct QuadratureOptions {
    int nodes = 160;          // total nodes; a multiple of 16
    double half_width = 8.5;  // integrate z over [-half_width, half_width]

    int panels() const {
        if (nodes < detail::panel_order || nodes % detail::panel_order != 0)
            fail(ErrorKind::parameter, "quadrature node count must be a positive multiple of 16");
        return nodes / detail::panel_order;
    }
};

/// One-factor representation: Z_i = (n_i sigma0 z + sigma_i e_i) / tau_i with z, e_i iid N(0,1).
struct FactorModel {
    std::vector<double> n;  // treatment sizes n_1..n_K
    double sigma0 = 0.0;
    std::vector<double> sigma;
    std::vector<double> tau;
    std::vector<double> mu;  // n_0 n_i / 2, used by the raw-scale box

    std::size_t size() const { return n.size(); }

    void validate() const {
        if (n.empty() || sigma.size() != n.size() || tau.size() != n.size() || mu.size() != n.size())
            fail(ErrorKind::parameter, "factor model dimensions disagree");
        if (!(sigma0 >= 0.0)) fail(ErrorKind::parameter, "sigma0 must be >= 0");
        for (std::size_t i = 0; i < n.size(); ++i) {
            if (!(sigma[i] >= 0.0) || !(tau[i] >= 0.0)) fail(ErrorKind::parameter, "negative standard deviation");
            const double recomposed = n[i] * n[i] * sigma0 * sigma0 + sigma[i] * sigma[i];
            if (std::abs(recomposed - tau[i] * tau[i]) > 1e-10 * std::max(1.0, tau[i] * tau[i]))
                fail(ErrorKind::parameter, "factor model violates tau^2 = n^2 sigma0^2 + sigma^2");
        }
    }

    static FactorModel from_moments(const MomentSet& m) {
        FactorModel f;
        f.sigma0 = m.sigma0();
        for (std::size_t i = 0; i < m.treatments(); ++i) {
            f.n.push_back(static_cast<double>(m.sizes[i + 1]));
            f.sigma.push_back(m.sigma(i));
            f.tau.push_back(m.tau(i));
            f.mu.push_back(m.mu[i]);
        }
        return f;
    }
};

namespace detail {

inline constexpr double inf = std::numeric_limits<double>::infinity();

/// Phi(b) - Phi(a) for a <= b, evaluated on the side that avoids cancellation.
inline double normal_interval(double a, double b) {
    if (!(b > a)) return 0.0;
    if (a > 0.0) return std_normal_cdf(-a) - std_normal_cdf(-b);
    return std_normal_cdf(b) - std_normal_cdf(a);
}

/// P(lo_i < Z_i < hi_i for all i) on the standardized scale. With `closed` the constraints on
/// degenerate (point-mass) coordinates include their end points; for continuous coordinates
/// the distinction has probability zero.
inline double box_probability(const FactorModel& model, std::span<const double> lo, std::span<const double> hi,
                              bool closed, const QuadratureOptions& quad) {
    model.validate();
    if (lo.size() != model.size() || hi.size() != model.size()) fail(ErrorKind::parameter, "threshold dimension mismatch");
    double za = -quad.half_width;
    double zb = quad.half_width;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (model.sigma[i] > 0.0) {
            active.push_back(i);
            continue;
        }
        const double slope = model.tau[i] > 0.0 ? model.n[i] * model.sigma0 / model.tau[i] : 0.0;
        if (slope == 0.0) {
            // Z_i is the constant 0
            const bool inside = closed ? (lo[i] <= 0.0 && 0.0 <= hi[i]) : (lo[i] < 0.0 && 0.0 < hi[i]);
            if (!inside) return 0.0;
        } else {
            // Z_i = slope * z exactly, slope > 0: restrict the integration range
            za = std::max(za, lo[i] / slope);
            zb = std::min(zb, hi[i] / slope);
        }
    }
    if (!(zb > za)) return 0.0;
    if (active.empty()) return normal_interval(za, zb);

    const auto integrand = [&](double z) {
        double prod = std_normal_pdf(z);
        for (std::size_t i : active) {
            const double shift = model.n[i] * model.sigma0 * z;
            const double a = lo[i] == -inf ? -inf : (lo[i] * model.tau[i] - shift) / model.sigma[i];
            const double b = hi[i] == inf ? inf : (hi[i] * model.tau[i] - shift) / model.sigma[i];
            prod *= normal_interval(a, b);
        }
        return prod;
    };
    const double value = panel_rule().integrate(integrand, za, zb, quad.panels());
    return std::clamp(value, 0.0, 1.0);
}

}  // namespace detail

/// Approximate P(S_max >= u).
inline double tail_prob_max(const FactorModel& model, double u, const QuadratureOptions& quad = {}) {
    const std::vector<double> lo(model.size(), -detail::inf);
    const std::vector<double> hi(model.size(), u);
    return std::clamp(1.0 - detail::box_probability(model, lo, hi, false, quad), 0.0, 1.0);
}

/// Approximate P(S_min <= l).
inline double tail_prob_min(const FactorModel& model, double l, const QuadratureOptions& quad = {}) {
    const std::vector<double> lo(model.size(), l);
    const std::vector<double> hi(model.size(), detail::inf);
    return std::clamp(1.0 - detail::box_probability(model, lo, hi, false, quad), 0.0, 1.0);
}

/// Approximate P(S_abs >= u).
inline double tail_prob_abs(const FactorModel& model, double u, const QuadratureOptions& quad = {}) {
    if (u < 0.0) fail(ErrorKind::parameter, "two-sided threshold must be >= 0");
    const std::vector<double> lo(model.size(), -u);
    const std::vector<double> hi(model.size(), u);
    return std::clamp(1.0 - detail::box_probability(model, lo, hi, false, quad), 0.0, 1.0);
}

/// Tail probability for the statistic matching `alternative`.
inline double tail_prob(const FactorModel& model, Alternative alternative, double observed, const QuadratureOptions& quad = {}) {
    switch (alternative) {
        case Alternative::greater: return tail_prob_max(model, observed, quad);
        case Alternative::less: return tail_prob_min(model, observed, quad);
        case Alternative::two_sided: return tail_prob_abs(model, std::abs(observed), quad);
    }
    return 1.0;
}

/// Tail probability under `model` of the statistic for `alternative` when coordinate i is
/// standardized by `scale[i]` instead of the model's own tau_i. Used to measure what an
/// approximation built from one set of moments says about a statistic standardized with another.
inline double tail_prob_rescaled(const FactorModel& model, Alternative alternative, double t, std::span<const double> scale,
                                 const QuadratureOptions& quad = {}) {
    if (scale.size() != model.size()) fail(ErrorKind::parameter, "scale dimension mismatch");
    if (alternative == Alternative::two_sided && t < 0.0) fail(ErrorKind::parameter, "two-sided threshold must be >= 0");
    std::vector<double> lo(model.size(), -detail::inf);
    std::vector<double> hi(model.size(), detail::inf);
    for (std::size_t i = 0; i < model.size(); ++i) {
        const double r = model.tau[i] > 0.0 ? t * scale[i] / model.tau[i] : t;
        switch (alternative) {
            case Alternative::greater: hi[i] = r; break;
            case Alternative::less: lo[i] = r; break;
            case Alternative::two_sided:
                lo[i] = -r;
                hi[i] = r;
                break;
        }
    }
    return std::clamp(1.0 - detail::box_probability(model, lo, hi, false, quad), 0.0, 1.0);
}

/// Approximate P(W_i <= c_i for all i) with thresholds on the raw Mann-Whitney scale.
inline double joint_lower_box_prob(const FactorModel& model, std::span<const double> c, const QuadratureOptions& quad = {}) {
    model.validate();
    if (c.size() != model.size()) fail(ErrorKind::parameter, "threshold dimension mismatch");
    const std::vector<double> lo(model.size(), -detail::inf);
    std::vector<double> hi(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (model.tau[i] > 0.0)
            hi[i] = (c[i] - model.mu[i]) / model.tau[i];
        else
            hi[i] = c[i] >= model.mu[i] ? detail::inf : -detail::inf;
    }
    return detail::box_probability(model, lo, hi, true, quad);
}

/// Common standardized threshold u* with P(W_i <= mu_i + u* tau_i for all i) = gamma.
inline double solve_common_threshold(const FactorModel& model, double gamma, const QuadratureOptions& quad = {}) {
    if (!(gamma > 0.0 && gamma < 1.0)) fail(ErrorKind::parameter, "gamma must lie in (0, 1)");
    model.validate();
    const auto coverage = [&](double u) {
        std::vector<double> c(model.size());
        for (std::size_t i = 0; i < model.size(); ++i) c[i] = model.mu[i] + u * model.tau[i];
        return joint_lower_box_prob(model, c, quad) - gamma;
    };
    double a = -1.0;
    double b = 1.0;
    double fa = coverage(a);
    double fb = coverage(b);
    while (fa > 0.0 && a > -40.0) fa = coverage(a *= 2.0);
    while (fb < 0.0 && b < 40.0) fb = coverage(b *= 2.0);
    if (fa > 0.0 || fb < 0.0) fail(ErrorKind::numeric, "coverage target cannot be bracketed");
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;

    // Illinois-modified regula falsi on the monotone coverage map
    int side = 0;
    for (int iter = 0; iter < 200; ++iter) {
        const double c = (a * fb - b * fa) / (fb - fa);
        const double fc = coverage(c);
        if (std::abs(fc) <= 1e-13 || std::abs(b - a) <= 1e-14 * std::max(1.0, std::abs(c))) return c;
        if ((fc > 0.0) == (fb > 0.0)) {
            b = c;
            fb = fc;
            if (side == -1) fa /= 2.0;
            side = -1;
        } else {
            a = c;
            fa = fc;
            if (side == 1) fb /= 2.0;
            side = 1;
        }
    }
    fail(ErrorKind::numeric, "threshold search did not converge in 200 iterations");
}

}  // namespace steelrank
