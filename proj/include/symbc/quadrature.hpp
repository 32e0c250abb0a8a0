#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "symbc/errors.hpp"

namespace symbc {

/// Gauss–Legendre nodes and weights mapped to [0, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const noexcept { return nodes.size(); }
};

/// n-point Gauss–Legendre rule on [0, 1]. Roots of P_n are found by Newton
/// iteration from the Chebyshev-like initial guess; converges to machine
/// precision for the sizes used here (n up to a few hundred).
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw invalid_argument("gauss_legendre: need at least one node");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        // Recompute derivative at the converged root for the weight.
        {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        // Map [-1, 1] -> [0, 1]; the weight halves.
        rule.nodes[i] = 0.5 * (1.0 - z);
        rule.nodes[n - 1 - i] = 0.5 * (1.0 + z);
        rule.weights[i] = 0.5 * w;
        rule.weights[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

/// Composite rule: `panels` copies of an n-point rule on equal subintervals of [a, b].
template <class F>
double integrate(F&& f, double a, double b, const GaussRule& rule, int panels = 1) {
    const double width = (b - a) / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double left = a + p * width;
        for (std::size_t i = 0; i < rule.size(); ++i)
            sum += rule.weights[i] * f(left + width * rule.nodes[i]);
    }
    return sum * width;
}

}  // namespace symbc
