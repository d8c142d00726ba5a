#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "flowcap/density.hpp"

namespace flowcap {

// Piecewise-constant density on a finite hull: value values[i] on
// [breakpoints[i], breakpoints[i+1]), zero outside.
class Pwc1D final : public Density {
public:
    Pwc1D(std::vector<double> breakpoints, std::vector<double> values)
        : breaks_(std::move(breakpoints)), values_(std::move(values)) {
        if (breaks_.size() < 2 || values_.size() + 1 != breaks_.size())
            throw ContractViolation("Pwc1D: need n+1 breakpoints for n pieces, n >= 1");
        for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
            if (!(breaks_[i] < breaks_[i + 1]))
                throw ContractViolation("Pwc1D: breakpoints must be strictly increasing");
        for (double v : values_)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ContractViolation("Pwc1D: values must be finite and nonnegative");
        cum_.resize(values_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            acc += values_[i] * (breaks_[i + 1] - breaks_[i]);
            cum_[i] = acc;
        }
        if (!(acc > 0.0)) throw ContractViolation("Pwc1D: total mass must be positive");
    }

    static Pwc1D normalized(std::vector<double> breakpoints, std::vector<double> values) {
        Pwc1D raw(std::move(breakpoints), std::move(values));
        const double m = raw.mass();
        std::vector<double> scaled = raw.values_;
        for (double& v : scaled) v /= m;
        return Pwc1D(raw.breaks_, std::move(scaled));
    }

    int dim() const override { return 1; }

    double mass() const { return cum_.back(); }

    double sup_value() const { return *std::max_element(values_.begin(), values_.end()); }

    std::size_t n_pieces() const { return values_.size(); }
    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<double>& values() const { return values_; }

    // Index of the piece containing x, or -1 outside the hull.
    int piece_index(double x) const {
        if (x < breaks_.front() || x >= breaks_.back()) return -1;
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
        return static_cast<int>(it - breaks_.begin()) - 1;
    }

    double log_density(const Vec& z) const override {
        const int i = piece_index(z[0]);
        if (i < 0 || values_[i] == 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(values_[i]);
    }

    Vec grad_log_density(const Vec& z) const override {
        const int i = piece_index(z[0]);
        if (i < 0 || values_[i] == 0.0)
            throw ContractViolation("Pwc1D: gradient undefined outside the support");
        Vec g(1);
        g[0] = 0.0;
        return g;
    }

    double cdf1(double x) const override {
        if (x <= breaks_.front()) return 0.0;
        if (x >= breaks_.back()) return mass();
        const int i = piece_index(x);
        const double before = i > 0 ? cum_[i - 1] : 0.0;
        return before + values_[i] * (x - breaks_[i]);
    }

    double quantile1(double u) const override {
        if (!(u > 0.0 && u < 1.0))
            throw ContractViolation("quantile1: u must lie in (0, 1)");
        const double target = u * mass();
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), target);
        const auto i = static_cast<std::size_t>(it - cum_.begin());
        const double before = i > 0 ? cum_[i - 1] : 0.0;
        return breaks_[i] + (target - before) / values_[i];
    }

    Vec sample(Rng& rng) const override {
        Vec z(1);
        z[0] = quantile1(rng.uniform());
        return z;
    }

    Interval support_hull() const override {
        const auto ivs = support_intervals();
        return {ivs.front().lo, ivs.back().hi};
    }

    std::vector<Interval> support_intervals() const override {
        std::vector<Interval> ivs;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (values_[i] == 0.0) continue;
            if (!ivs.empty() && ivs.back().hi == breaks_[i])
                ivs.back().hi = breaks_[i + 1];
            else
                ivs.push_back({breaks_[i], breaks_[i + 1]});
        }
        return ivs;
    }

private:
    std::vector<double> breaks_;
    std::vector<double> values_;
    std::vector<double> cum_;
};

// Piecewise-Gaussian density: piece i follows N(mus[i], sigmas[i]^2) on
// [breaks[i-1], breaks[i]), with breaks[-1] = -inf and breaks[n-1] = +inf.
// It integrates to 1 exactly when the pieces are tail-consistent.
class Pwg1D final : public Density {
public:
    Pwg1D(std::vector<double> breaks, std::vector<double> mus, std::vector<double> sigmas)
        : breaks_(std::move(breaks)), mus_(std::move(mus)), sigmas_(std::move(sigmas)) {
        if (mus_.empty() || mus_.size() != sigmas_.size() || breaks_.size() + 1 != mus_.size())
            throw ContractViolation("Pwg1D: need n-1 breakpoints for n >= 1 pieces");
        for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
            if (!(breaks_[i] < breaks_[i + 1]))
                throw ContractViolation("Pwg1D: breakpoints must be strictly increasing");
        for (double s : sigmas_)
            if (!(s > 0.0) || !std::isfinite(s))
                throw ContractViolation("Pwg1D: sigmas must be finite and positive");
        cum_.resize(mus_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < mus_.size(); ++i) {
            acc += piece_mass(i);
            cum_[i] = acc;
        }
    }

    int dim() const override { return 1; }

    std::size_t n_pieces() const { return mus_.size(); }
    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<double>& mus() const { return mus_; }
    const std::vector<double>& sigmas() const { return sigmas_; }

    double left_edge(std::size_t i) const {
        return i == 0 ? -std::numeric_limits<double>::infinity() : breaks_[i - 1];
    }

    double right_edge(std::size_t i) const {
        return i + 1 == mus_.size() ? std::numeric_limits<double>::infinity() : breaks_[i];
    }

    double piece_mass(std::size_t i) const {
        return piece_cdf(i, right_edge(i)) - piece_cdf(i, left_edge(i));
    }

    double mass() const { return cum_.back(); }

    // Max over interior breakpoints of |accumulated mass - next piece CDF|;
    // zero iff every prefix of pieces plus the following upper tail carries
    // unit mass.
    double tail_consistency_deviation() const {
        double dev = 0.0;
        for (std::size_t k = 0; k + 1 < mus_.size(); ++k)
            dev = std::max(dev, std::abs(cum_[k] - piece_cdf(k + 1, breaks_[k])));
        return dev;
    }

    bool is_tail_consistent(double tol = 1e-10) const {
        return tail_consistency_deviation() <= tol;
    }

    std::size_t piece_index(double x) const {
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
        return static_cast<std::size_t>(it - breaks_.begin());
    }

    double log_density(const Vec& z) const override {
        const std::size_t i = piece_index(z[0]);
        const double t = (z[0] - mus_[i]) / sigmas_[i];
        return -0.5 * t * t - std::log(sigmas_[i]) - 0.5 * ln_2pi;
    }

    Vec grad_log_density(const Vec& z) const override {
        const std::size_t i = piece_index(z[0]);
        Vec g(1);
        g[0] = -(z[0] - mus_[i]) / (sigmas_[i] * sigmas_[i]);
        return g;
    }

    double cdf1(double x) const override {
        const std::size_t i = piece_index(x);
        const double before = i > 0 ? cum_[i - 1] : 0.0;
        return before + piece_cdf(i, x) - piece_cdf(i, left_edge(i));
    }

    double quantile1(double u) const override {
        if (!(u > 0.0 && u < 1.0))
            throw ContractViolation("quantile1: u must lie in (0, 1)");
        if (std::abs(mass() - 1.0) > 1e-6)
            throw ContractViolation("Pwg1D: quantile needs a normalized (tail-consistent) density");
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        const auto i = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
            it - cum_.begin(), static_cast<std::ptrdiff_t>(mus_.size()) - 1));
        const double before = i > 0 ? cum_[i - 1] : 0.0;
        double u_loc = u - before + piece_cdf(i, left_edge(i));
        u_loc = std::clamp(u_loc, 1e-300, 1.0 - 1e-16);
        double x = mus_[i] + sigmas_[i] * norm_quantile(u_loc);
        const double lo = left_edge(i);
        const double hi = right_edge(i);
        if (std::isfinite(lo)) x = std::max(x, lo);
        if (std::isfinite(hi)) x = std::min(x, std::nexttoward(hi, lo));
        return x;
    }

    Vec sample(Rng& rng) const override {
        Vec z(1);
        z[0] = quantile1(rng.uniform());
        return z;
    }

private:
    double piece_cdf(std::size_t i, double x) const {
        if (x == -std::numeric_limits<double>::infinity()) return 0.0;
        if (x == std::numeric_limits<double>::infinity()) return 1.0;
        return norm_cdf((x - mus_[i]) / sigmas_[i]);
    }

    std::vector<double> breaks_;
    std::vector<double> mus_;
    std::vector<double> sigmas_;
    std::vector<double> cum_;
};

} // namespace flowcap
