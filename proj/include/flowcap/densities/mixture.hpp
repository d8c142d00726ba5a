#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/density.hpp"

namespace flowcap {

class Mixture final : public Density {
public:
    Mixture(std::vector<double> weights, std::vector<DensityPtr> components)
        : weights_(std::move(weights)), components_(std::move(components)) {
        if (weights_.empty() || weights_.size() != components_.size())
            throw ContractViolation("Mixture: weights and components must match and be nonempty");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w))
                throw ContractViolation("Mixture: weights must be finite and nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw ContractViolation("Mixture: weights must sum to 1");
        const int d = components_.front()->dim();
        for (const auto& c : components_)
            if (c->dim() != d)
                throw ContractViolation("Mixture: components must share one dimension");
        log_weights_.reserve(weights_.size());
        for (double w : weights_)
            log_weights_.push_back(w > 0.0 ? std::log(w)
                                           : -std::numeric_limits<double>::infinity());
    }

    int dim() const override { return components_.front()->dim(); }

    double log_density(const Vec& z) const override {
        std::vector<double> terms(weights_.size());
        for (std::size_t i = 0; i < weights_.size(); ++i)
            terms[i] = log_weights_[i] + components_[i]->log_density(z);
        return logsumexp(terms);
    }

    Vec grad_log_density(const Vec& z) const override {
        const std::vector<double> r = responsibilities(z);
        Vec g = Vec::Zero(dim());
        for (std::size_t i = 0; i < weights_.size(); ++i)
            if (r[i] > 0.0) g += r[i] * components_[i]->grad_log_density(z);
        return g;
    }

    // Posterior component probabilities at z.
    std::vector<double> responsibilities(const Vec& z) const {
        std::vector<double> terms(weights_.size());
        for (std::size_t i = 0; i < weights_.size(); ++i)
            terms[i] = log_weights_[i] + components_[i]->log_density(z);
        const double lse = logsumexp(terms);
        std::vector<double> r(weights_.size());
        for (std::size_t i = 0; i < weights_.size(); ++i) r[i] = std::exp(terms[i] - lse);
        return r;
    }

    Vec sample(Rng& rng) const override {
        const double u = rng.uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            acc += weights_[i];
            if (u <= acc || i + 1 == weights_.size()) return components_[i]->sample(rng);
        }
        return components_.back()->sample(rng);
    }

    double cdf1(double x) const override {
        double c = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i)
            c += weights_[i] * components_[i]->cdf1(x);
        return c;
    }

    Interval support_hull() const override {
        Interval hull{std::numeric_limits<double>::infinity(),
                      -std::numeric_limits<double>::infinity()};
        for (const auto& c : components_) {
            const Interval h = c->support_hull();
            hull.lo = std::min(hull.lo, h.lo);
            hull.hi = std::max(hull.hi, h.hi);
        }
        return hull;
    }

    std::vector<Interval> support_intervals() const override {
        std::vector<Interval> all;
        for (const auto& c : components_)
            for (const Interval& iv : c->support_intervals()) all.push_back(iv);
        std::sort(all.begin(), all.end(),
                  [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        std::vector<Interval> merged;
        for (const Interval& iv : all) {
            if (!merged.empty() && iv.lo <= merged.back().hi)
                merged.back().hi = std::max(merged.back().hi, iv.hi);
            else
                merged.push_back(iv);
        }
        return merged;
    }

    const std::vector<double>& weights() const { return weights_; }
    const std::vector<DensityPtr>& components() const { return components_; }

private:
    std::vector<double> weights_;
    std::vector<DensityPtr> components_;
    std::vector<double> log_weights_;
};

// Gaussian mixture whose components share one covariance; the form several
// topology diagnostics are stated for.
struct SharedCovMixture {
    std::vector<double> weights;
    std::vector<Vec> means;
    Mat cov;

    Mixture to_mixture() const {
        std::vector<DensityPtr> comps;
        comps.reserve(means.size());
        for (const Vec& m : means) comps.push_back(std::make_shared<Gaussian>(m, cov));
        return Mixture(weights, std::move(comps));
    }
};

} // namespace flowcap
