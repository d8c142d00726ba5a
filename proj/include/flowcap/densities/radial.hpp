#pragma once

#include <cmath>

#include "flowcap/density.hpp"

namespace flowcap {

enum class RadialProfile {
    pure,     // density proportional to exp(-r^tau)
    flat_core // exp(-max(r^tau, d)): constant inside radius d^(1/tau)
};

// Isotropic density on R^d with a stretched-exponential radial profile.
class RadialDensity final : public Density {
public:
    RadialDensity(int dim, double tau, RadialProfile profile = RadialProfile::pure)
        : dim_(dim), tau_(tau), profile_(profile) {
        if (dim < 1) throw ContractViolation("RadialDensity: need dim >= 1");
        if (!(tau > 0.0)) throw ContractViolation("RadialDensity: need tau > 0");
        const double d = dim_;
        log_surface_ = std::log(2.0) + 0.5 * d * std::log(pi) - std::lgamma(0.5 * d);
        if (profile_ == RadialProfile::pure) {
            log_norm_ = log_surface_ + std::lgamma(d / tau_) - std::log(tau_);
        } else {
            core_radius_ = std::pow(d, 1.0 / tau_);
            log_core_mass_ = log_surface_ - d + (d / tau_) * std::log(d) - std::log(d);
            log_tail_mass_ = log_surface_ + std::lgamma(d / tau_) + log_gamma_q(d / tau_, d) -
                             std::log(tau_);
            log_norm_ = logsumexp(log_core_mass_, log_tail_mass_);
        }
    }

    int dim() const override { return dim_; }

    double tau() const { return tau_; }

    RadialProfile profile() const { return profile_; }

    double log_norm() const { return log_norm_; }

    double core_radius() const {
        if (profile_ != RadialProfile::flat_core)
            throw ContractViolation("core_radius: only the flat-core profile has one");
        return core_radius_;
    }

    double log_density(const Vec& z) const override {
        const double r = z.norm();
        return -shape(r) - log_norm_;
    }

    Vec grad_log_density(const Vec& z) const override {
        const double r = z.norm();
        if (profile_ == RadialProfile::flat_core) {
            if (std::abs(r - core_radius_) <= 1e-12 * (1.0 + core_radius_))
                throw NonSmoothPoint("RadialDensity: gradient undefined on the core boundary");
            if (r < core_radius_) return Vec::Zero(dim_);
        }
        if (r == 0.0) {
            if (tau_ == 2.0) return Vec::Zero(dim_);
            throw NonSmoothPoint("RadialDensity: gradient undefined at the origin");
        }
        return -tau_ * std::pow(r, tau_ - 2.0) * z;
    }

    // Probability that the radius is at most r.
    double radius_cdf(double r) const {
        if (r <= 0.0) return 0.0;
        const double d = dim_;
        if (profile_ == RadialProfile::pure)
            return gamma_p(d / tau_, std::pow(r, tau_));
        if (r <= core_radius_) {
            const double lm = log_surface_ - d + d * std::log(r) - std::log(d);
            return std::exp(lm - log_norm_);
        }
        const double core = std::exp(log_core_mass_ - log_norm_);
        const double a = d / tau_;
        const double tail_frac = gamma_q(a, d) - gamma_q(a, std::pow(r, tau_));
        const double tail = std::exp(log_surface_ + std::lgamma(a) - std::log(tau_) - log_norm_) *
                            tail_frac;
        return core + tail;
    }

    double radius_quantile(double u) const {
        if (!(u > 0.0 && u < 1.0))
            throw ContractViolation("radius_quantile: u must lie in (0, 1)");
        double hi = std::pow(dim_ / tau_ + 1.0, 1.0 / tau_) + 1.0;
        for (int i = 0; i < 400 && radius_cdf(hi) < u; ++i) hi *= 2.0;
        return invert_monotone_cdf([this](double r) { return radius_cdf(r); }, u, 0.0, hi);
    }

    Vec sample(Rng& rng) const override {
        const double r = radius_quantile(rng.uniform());
        return r * rng.unit_vec(dim_);
    }

private:
    double shape(double r) const {
        const double rt = std::pow(r, tau_);
        if (profile_ == RadialProfile::flat_core) return std::max(rt, static_cast<double>(dim_));
        return rt;
    }

    int dim_;
    double tau_;
    RadialProfile profile_;
    double log_surface_ = 0.0;
    double log_norm_ = 0.0;
    double core_radius_ = 0.0;
    double log_core_mass_ = 0.0;
    double log_tail_mass_ = 0.0;
};

} // namespace flowcap
