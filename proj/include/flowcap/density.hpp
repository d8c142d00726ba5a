#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "flowcap/errors.hpp"
#include "flowcap/quadrature.hpp"
#include "flowcap/rng.hpp"

namespace flowcap {

struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }
    double width() const { return hi - lo; }
};

// Probability density on R^d exposing exactly what the constructions and
// diagnostics consume: log density, its gradient, and (in one dimension)
// CDF and quantile. Optional operations throw when a concrete type does not
// support them.
class Density {
public:
    virtual ~Density() = default;

    virtual int dim() const = 0;
    virtual double log_density(const Vec& z) const = 0;
    virtual Vec grad_log_density(const Vec& z) const = 0;

    virtual Vec sample(Rng&) const {
        throw ContractViolation("sample: not supported by this density");
    }

    virtual double cdf1(double) const {
        throw ContractViolation("cdf1: not supported by this density");
    }

    // Smallest x with cdf1(x) >= u. The default bisects cdf1, so plateaus
    // resolve to their left endpoint.
    virtual double quantile1(double u) const {
        if (!(u > 0.0 && u < 1.0))
            throw ContractViolation("quantile1: u must lie in (0, 1)");
        if (dim() != 1) throw ContractViolation("quantile1: density is not one-dimensional");
        const Interval hull = support_hull();
        double lo = hull.lo;
        double hi = hull.hi;
        if (!std::isfinite(lo)) {
            lo = -1.0;
            for (int i = 0; i < 1100 && cdf1(lo) >= u; ++i) lo *= 2.0;
        }
        if (!std::isfinite(hi)) {
            hi = 1.0;
            for (int i = 0; i < 1100 && cdf1(hi) < u; ++i) hi *= 2.0;
        }
        return invert_monotone_cdf([this](double x) { return cdf1(x); }, u, lo, hi);
    }

    // Smallest interval outside which the density vanishes (infinite by
    // default).
    virtual Interval support_hull() const { return {}; }

    // Support as a union of disjoint closed intervals, ordered left to right.
    virtual std::vector<Interval> support_intervals() const { return {support_hull()}; }

    double density(const Vec& z) const { return std::exp(log_density(z)); }

    double log_density1(double x) const {
        Vec z(1);
        z[0] = x;
        return log_density(z);
    }

    double density1(double x) const { return std::exp(log_density1(x)); }

    double grad_log_density1(double x) const {
        Vec z(1);
        z[0] = x;
        return grad_log_density(z)[0];
    }
};

using DensityPtr = std::shared_ptr<const Density>;

} // namespace flowcap
