#pragma once

#include <cmath>

#include "flowcap/density.hpp"

namespace flowcap {

// Compact bimodal benchmark target: p(x) = 3/4 min((|x|-1)^2, (|x|-3)^2) for
// 1 <= |x| <= 3, zero elsewhere. Integrates to 1; humps peak at |x| = 2.
class BimodalQuadTarget final : public Density {
public:
    int dim() const override { return 1; }

    static double value(double x) {
        const double ax = std::abs(x);
        if (ax < 1.0 || ax > 3.0) return 0.0;
        const double d1 = (ax - 1.0) * (ax - 1.0);
        const double d2 = (ax - 3.0) * (ax - 3.0);
        return 0.75 * std::min(d1, d2);
    }

    double log_density(const Vec& z) const override {
        const double v = value(z[0]);
        return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }

    Vec grad_log_density(const Vec& z) const override {
        const double x = z[0];
        const double ax = std::abs(x);
        if (ax <= 1.0 || ax >= 3.0)
            throw ContractViolation("BimodalQuadTarget: gradient undefined outside the support");
        if (std::abs(ax - 2.0) < 1e-12)
            throw NonSmoothPoint("BimodalQuadTarget: kink where the two branches meet");
        const double s = x > 0.0 ? 1.0 : -1.0;
        Vec g(1);
        g[0] = ax < 2.0 ? 2.0 * s / (ax - 1.0) : 2.0 * s / (ax - 3.0);
        return g;
    }

    double cdf1(double x) const override {
        if (x <= -3.0) return 0.0;
        if (x <= -2.0) return 0.25 * cube(x + 3.0);
        if (x <= -1.0) return 0.25 + 0.25 * (cube(x + 1.0) + 1.0);
        if (x <= 1.0) return 0.5;
        if (x <= 2.0) return 0.5 + 0.25 * cube(x - 1.0);
        if (x <= 3.0) return 1.0 - 0.25 * cube(3.0 - x);
        return 1.0;
    }

    double quantile1(double u) const override {
        if (!(u > 0.0 && u < 1.0))
            throw ContractViolation("quantile1: u must lie in (0, 1)");
        if (u < 0.25) return -3.0 + std::cbrt(4.0 * u);
        if (u < 0.5) return -1.0 + std::cbrt(4.0 * u - 2.0);
        if (u < 0.75) return 1.0 + std::cbrt(4.0 * u - 2.0);
        return 3.0 - std::cbrt(4.0 * (1.0 - u));
    }

    Vec sample(Rng& rng) const override {
        Vec z(1);
        z[0] = quantile1(rng.uniform());
        return z;
    }

    Interval support_hull() const override { return {-3.0, 3.0}; }

    std::vector<Interval> support_intervals() const override {
        return {{-3.0, -1.0}, {1.0, 3.0}};
    }

private:
    static double cube(double t) { return t * t * t; }
};

} // namespace flowcap
