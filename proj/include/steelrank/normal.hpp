#pragma once

// Standard normal kernels and Gauss-Legendre rules.

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "error.hpp"

namespace steelrank {

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

/// Phi(z) through the complementary error function; saturates to 0/1 beyond |z| = 40.
inline double std_normal_cdf(double z) {
    if (std::isnan(z)) return z;
    if (z < -40.0) return 0.0;
    if (z > 40.0) return 1.0;
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(z), without cancellation for large z.
inline double std_normal_sf(double z) { return std_normal_cdf(-z); }

/// Inverse of Phi. Starts from the Abramowitz-Stegun 26.2.23 rational guess and polishes with
/// Halley steps on the smaller tail, which gives full double precision.
inline double std_normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::parameter, "probability outside [0, 1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    if (p == 0.5) return 0.0;
    const bool upper = p > 0.5;
    const double q = upper ? 1.0 - p : p;  // lower-tail target, x < 0
    const double t = std::sqrt(-2.0 * std::log(q));
    double x = -(t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                         (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
    for (int iter = 0; iter < 8; ++iter) {
        const double err = std_normal_cdf(x) - q;
        const double u = err / std_normal_pdf(x);
        const double step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    return upper ? -x : x;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendreRule(int order) {
        if (order < 1) fail(ErrorKind::parameter, "quadrature order must be >= 1");
        nodes.resize(order);
        weights.resize(order);
        // Legendre P_order(x) and its derivative by the three-term recurrence
        const auto legendre = [order](double x, double& deriv) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            deriv = order * (x * p1 - p0) / (x * x - 1.0);
            return p1;
        };
        for (int i = 0; i < (order + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (order + 0.5));
            double deriv = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                const double dx = legendre(x, deriv) / deriv;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            legendre(x, deriv);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = weights[order - 1 - i] = 2.0 / ((1.0 - x * x) * deriv * deriv);
        }
        if (order % 2 == 1) nodes[order / 2] = 0.0;
    }

    /// Composite rule: `panels` equal panels over [a, b].
    template <class F>
    double integrate(F&& f, double a, double b, int panels) const {
        if (!(b > a)) return 0.0;
        const double width = (b - a) / panels;
        double total = 0.0;
        for (int p = 0; p < panels; ++p) {
            const double mid = a + (p + 0.5) * width;
            const double half = 0.5 * width;
            double sum = 0.0;
            for (std::size_t k = 0; k < nodes.size(); ++k) sum += weights[k] * f(mid + half * nodes[k]);
            total += half * sum;
        }
        return total;
    }
};

namespace detail {

inline constexpr int panel_order = 16;

inline const GaussLegendreRule& panel_rule() {
    static const GaussLegendreRule rule(panel_order);
    return rule;
}

}  // namespace detail

}  // namespace steelrank
