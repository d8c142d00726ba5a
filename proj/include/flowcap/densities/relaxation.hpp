#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "flowcap/density.hpp"
#include "flowcap/quadrature.hpp"

namespace flowcap {

struct RelaxationReport {
    double eps = 0.0;
    double delta = 0.0;       // density threshold 2 / total support width
    double gamma = 0.0;       // target mass carried below the threshold
    double added_mass = 0.0;  // eps*gamma/2, spread over gaps and tails
    double l1_to_target = 0.0; // exactly eps*gamma
    double tail_mass_each = 0.0;
    double tail_value_left = 0.0;
    double tail_value_right = 0.0;
    bool tail_sup_ok = true; // both tail sup-values <= eps/2
};

// Full-support relaxation of a compactly supported 1D density: the density is
// kept where it exceeds delta, scaled by (1 - eps/2) below delta, and the
// complement of the support is filled with constant gap segments plus
// Gaussian tails whose edge values continue the gap constants.
class RelaxedDensity1D final : public Density {
public:
    RelaxedDensity1D(DensityPtr target, double eps) : target_(std::move(target)), eps_(eps) {
        if (!target_ || target_->dim() != 1)
            throw ContractViolation("RelaxedDensity1D: target must be one-dimensional");
        if (!(eps > 0.0 && eps < 1.0))
            throw ContractViolation("RelaxedDensity1D: eps must lie in (0, 1)");
        ivs_ = target_->support_intervals();
        double total_width = 0.0;
        for (const Interval& iv : ivs_) {
            if (!iv.finite())
                throw ContractViolation("RelaxedDensity1D: support must be bounded");
            total_width += iv.width();
        }
        const auto n = ivs_.size();
        delta_ = 2.0 / total_width;
        scale_ = 1.0 - 0.5 * eps_;

        small_.resize(n);
        small_mass_.resize(n);
        gamma_ = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            small_[i] = sub_threshold_regions(ivs_[i]);
            small_mass_[i].reserve(small_[i].size());
            for (const Interval& s : small_[i]) {
                const double m = integrate_gl(
                    [this](double x) { return target_->density1(x); }, s.lo, s.hi, 16, 40);
                small_mass_[i].push_back(m);
                gamma_ += m;
            }
        }

        const double gap_total = eps_ * gamma_ / 2.0;
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double lo = ivs_[j].hi;
            const double hi = ivs_[j + 1].lo;
            gaps_.push_back({lo, hi, eps_ * gamma_ / (2.0 * n * (hi - lo))});
        }

        const double tail_mass = eps_ * gamma_ / (4.0 * n);
        const double hull_width = ivs_.back().hi - ivs_.front().lo;
        const double v_left = n >= 2 ? gaps_.front().value : eps_ * gamma_ / (2.0 * hull_width);
        const double v_right = n >= 2 ? gaps_.back().value : eps_ * gamma_ / (2.0 * hull_width);
        const double xi = norm_quantile(tail_mass);
        left_sigma_ = norm_pdf(xi) / v_left;
        left_mu_ = ivs_.front().lo - left_sigma_ * xi;
        right_sigma_ = norm_pdf(xi) / v_right;
        right_mu_ = ivs_.back().hi + right_sigma_ * xi;

        cum_interval_.resize(n);
        double acc = tail_mass;
        for (std::size_t i = 0; i < n; ++i) {
            cum_interval_[i] = acc;
            double small_total = 0.0;
            for (double m : small_mass_[i]) small_total += m;
            const double kept =
                target_->cdf1(ivs_[i].hi) - target_->cdf1(ivs_[i].lo) - 0.5 * eps_ * small_total;
            acc += kept;
            if (i + 1 < n) {
                cum_gap_.push_back(acc);
                acc += gaps_[i].value * (gaps_[i].hi - gaps_[i].lo);
            }
        }
        cum_right_tail_ = acc;

        report_.eps = eps_;
        report_.delta = delta_;
        report_.gamma = gamma_;
        report_.added_mass = gap_total;
        report_.l1_to_target = eps_ * gamma_;
        report_.tail_mass_each = tail_mass;
        report_.tail_value_left = v_left;
        report_.tail_value_right = v_right;
        report_.tail_sup_ok = v_left <= 0.5 * eps_ && v_right <= 0.5 * eps_;
    }

    int dim() const override { return 1; }

    const RelaxationReport& report() const { return report_; }
    const Density& target() const { return *target_; }

    double log_density(const Vec& z) const override {
        const double d = relaxed_density(z[0]);
        return d > 0.0 ? std::log(d) : -std::numeric_limits<double>::infinity();
    }

    double relaxed_density(double x) const {
        if (x < ivs_.front().lo) {
            const double t = (x - left_mu_) / left_sigma_;
            return norm_pdf(t) / left_sigma_;
        }
        if (x >= ivs_.back().hi) {
            const double t = (x - right_mu_) / right_sigma_;
            return norm_pdf(t) / right_sigma_;
        }
        for (std::size_t i = 0; i < ivs_.size(); ++i) {
            if (x < ivs_[i].hi) {
                if (x >= ivs_[i].lo) {
                    const double p = target_->density1(x);
                    return p >= delta_ ? p : scale_ * p;
                }
                return gaps_[i - 1].value;
            }
        }
        return 0.0;
    }

    Vec grad_log_density(const Vec& z) const override {
        const double x = z[0];
        Vec g(1);
        if (x < ivs_.front().lo) {
            g[0] = -(x - left_mu_) / (left_sigma_ * left_sigma_);
            return g;
        }
        if (x >= ivs_.back().hi) {
            g[0] = -(x - right_mu_) / (right_sigma_ * right_sigma_);
            return g;
        }
        for (std::size_t i = 0; i < ivs_.size(); ++i) {
            if (x < ivs_[i].hi) {
                if (x >= ivs_[i].lo) return target_->grad_log_density(z);
                g[0] = 0.0;
                return g;
            }
        }
        g[0] = 0.0;
        return g;
    }

    double cdf1(double x) const override {
        if (x < ivs_.front().lo) return norm_cdf((x - left_mu_) / left_sigma_);
        if (x >= ivs_.back().hi) {
            const double edge = norm_cdf((ivs_.back().hi - right_mu_) / right_sigma_);
            return cum_right_tail_ + norm_cdf((x - right_mu_) / right_sigma_) - edge;
        }
        for (std::size_t i = 0; i < ivs_.size(); ++i) {
            if (x < ivs_[i].hi) {
                if (x >= ivs_[i].lo) {
                    const double kept = target_->cdf1(x) - target_->cdf1(ivs_[i].lo) -
                                        0.5 * eps_ * small_mass_before(i, x);
                    return cum_interval_[i] + kept;
                }
                return cum_gap_[i - 1] + gaps_[i - 1].value * (x - gaps_[i - 1].lo);
            }
        }
        return 1.0;
    }

    const std::vector<Interval>& target_intervals() const { return ivs_; }

private:
    // Maximal subintervals of iv where the target density is below delta,
    // located by a scan plus bisection on the crossings.
    std::vector<Interval> sub_threshold_regions(const Interval& iv) const {
        constexpr int grid = 2048;
        const double w = iv.width();
        auto below = [&](double x) { return target_->density1(x) < delta_; };
        std::vector<Interval> out;
        double x_prev = iv.lo + 1e-12 * w;
        bool state = below(x_prev);
        double open = state ? iv.lo : 0.0;
        for (int k = 1; k <= grid; ++k) {
            const double x = k == grid ? iv.hi - 1e-12 * w : iv.lo + w * k / grid;
            const bool s = below(x);
            if (s != state) {
                double lo = x_prev;
                double hi = x;
                for (int it = 0; it < 100; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if (below(mid) == state)
                        lo = mid;
                    else
                        hi = mid;
                }
                const double c = 0.5 * (lo + hi);
                if (state)
                    out.push_back({open, c});
                else
                    open = c;
                state = s;
            }
            x_prev = x;
        }
        if (state) out.push_back({open, iv.hi});
        return out;
    }

    double small_mass_before(std::size_t i, double x) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < small_[i].size(); ++k) {
            const Interval& s = small_[i][k];
            if (x >= s.hi) {
                acc += small_mass_[i][k];
            } else if (x > s.lo) {
                acc += integrate_gl([this](double t) { return target_->density1(t); }, s.lo, x,
                                    8, 40);
                break;
            } else {
                break;
            }
        }
        return acc;
    }

    DensityPtr target_;
    double eps_;
    double delta_ = 0.0;
    double gamma_ = 0.0;
    double scale_ = 1.0;
    std::vector<Interval> ivs_;
    struct Gap {
        double lo;
        double hi;
        double value;
    };
    std::vector<Gap> gaps_;
    double left_mu_ = 0.0;
    double left_sigma_ = 1.0;
    double right_mu_ = 0.0;
    double right_sigma_ = 1.0;
    std::vector<std::vector<Interval>> small_;
    std::vector<std::vector<double>> small_mass_;
    std::vector<double> cum_interval_;
    std::vector<double> cum_gap_;
    double cum_right_tail_ = 0.0;
    RelaxationReport report_;
};

inline std::shared_ptr<RelaxedDensity1D> full_support_relaxation(DensityPtr p, double eps) {
    return std::make_shared<RelaxedDensity1D>(std::move(p), eps);
}

} // namespace flowcap
