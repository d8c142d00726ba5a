#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "flowcap/density.hpp"
#include "flowcap/flow_layer.hpp"

namespace flowcap {

// Monotone rearrangement pushing a 1D source density onto a 1D target density
// via cdf matching. Requires the two supports to decompose into the same
// number of intervals carrying matching cumulative masses at their edges; the
// map is the quantile-cdf composition on the support, affine across gaps, and
// a unit-slope shift beyond finite hull edges.
class TransportMap1D {
public:
    TransportMap1D(DensityPtr source, DensityPtr target)
        : source_(std::move(source)), target_(std::move(target)) {
        if (!source_ || !target_) throw ContractViolation("transport: null density");
        if (source_->dim() != 1 || target_->dim() != 1)
            throw ContractViolation("transport: densities must be one-dimensional");
        src_iv_ = source_->support_intervals();
        tgt_iv_ = target_->support_intervals();
        if (src_iv_.size() != tgt_iv_.size())
            throw HypothesisViolation(
                "transport: source has " + std::to_string(src_iv_.size()) +
                " support intervals, target has " + std::to_string(tgt_iv_.size()));
        for (std::size_t i = 0; i + 1 < src_iv_.size(); ++i) {
            const double mq = source_->cdf1(src_iv_[i].hi);
            const double mp = target_->cdf1(tgt_iv_[i].hi);
            if (std::abs(mq - mp) > 1e-8)
                throw HypothesisViolation(
                    "transport: cumulative mass mismatch at interval " +
                    std::to_string(i) + ": source " + std::to_string(mq) +
                    " vs target " + std::to_string(mp));
        }
    }

    double forward(double x) const {
        const Interval hq = source_->support_hull();
        if (std::isfinite(hq.lo) && x < hq.lo) return left_edge_image() + (x - hq.lo);
        if (std::isfinite(hq.hi) && x > hq.hi) return right_edge_image() + (x - hq.hi);
        for (std::size_t i = 0; i + 1 < src_iv_.size(); ++i) {
            if (x >= src_iv_[i].hi && x <= src_iv_[i + 1].lo) {
                const double a = tgt_iv_[i].hi;
                const double b = tgt_iv_[i + 1].lo;
                const double w = src_iv_[i + 1].lo - src_iv_[i].hi;
                if (w <= 0.0) return a;
                return a + (x - src_iv_[i].hi) * (b - a) / w;
            }
        }
        const double u = std::clamp(source_->cdf1(x), 1e-300, 1.0 - 1e-16);
        return target_->quantile1(u);
    }

    double derivative_analytic(double x) const {
        const Interval hq = source_->support_hull();
        if ((std::isfinite(hq.lo) && x < hq.lo) || (std::isfinite(hq.hi) && x > hq.hi))
            return 1.0;
        for (std::size_t i = 0; i + 1 < src_iv_.size(); ++i) {
            if (x > src_iv_[i].hi && x < src_iv_[i + 1].lo) {
                const double w = src_iv_[i + 1].lo - src_iv_[i].hi;
                return w > 0.0 ? (tgt_iv_[i + 1].lo - tgt_iv_[i].hi) / w : 0.0;
            }
        }
        const double qx = source_->density1(x);
        const double pf = target_->density1(forward(x));
        if (pf <= 0.0)
            throw NumericFailure("transport: target density vanishes at image point");
        return qx / pf;
    }

    double derivative_numeric(double x) const {
        const double h = 1e-6 * (1.0 + std::abs(x));
        return (forward(x + h) - forward(x - h)) / (2.0 * h);
    }

    TransportMap1D inverse() const { return TransportMap1D(target_, source_); }

    const Density& source() const { return *source_; }
    const Density& target() const { return *target_; }

    // Wraps the map as a planar layer z + u h(w z + b) with u = w = 1, b = 0 and
    // h(x) = forward(x) - x. The nonlinearity closes over this map, so the
    // layer cannot be serialized.
    PlanarLayer as_planar_layer() const {
        TransportMap1D self = *this;
        auto h = [self](double x) { return self.forward(x) - x; };
        auto dh = [self](double x) { return self.derivative_analytic(x) - 1.0; };
        auto d2h = [self](double x) {
            const double s = 1e-5 * (1.0 + std::abs(x));
            return (self.derivative_analytic(x + s) - self.derivative_analytic(x - s)) /
                   (2.0 * s);
        };
        // Probe the slope over the bulk of the source mass; beyond the data the
        // map continues with unit slope, so h' = 0 is always attained.
        double dlo = 0.0;
        double dhi = 0.0;
        for (int i = 0; i <= 256; ++i) {
            const double p = 1e-9 + (1.0 - 2e-9) * static_cast<double>(i) / 256.0;
            const double d = derivative_analytic(source_->quantile1(p)) - 1.0;
            if (!std::isfinite(d)) continue;
            dlo = std::min(dlo, d);
            dhi = std::max(dhi, d);
        }
        const Nonlinearity nl = Nonlinearity::custom_smooth(
            h, dh, d2h, std::max(dlo, -1.0 + 2e-9), std::min(dhi, 1e12));
        return PlanarLayer(1.0, 1.0, 0.0, nl);
    }

    bool is_strictly_increasing(double lo, double hi, std::size_t n = 10000) const {
        double prev = forward(lo);
        for (std::size_t i = 1; i < n; ++i) {
            const double x = lo + (hi - lo) * static_cast<double>(i) /
                                      static_cast<double>(n - 1);
            const double y = forward(x);
            if (!(y > prev)) return false;
            prev = y;
        }
        return true;
    }

private:
    double left_edge_image() const {
        if (std::isfinite(tgt_iv_.front().lo)) return tgt_iv_.front().lo;
        return target_->quantile1(1e-300);
    }
    double right_edge_image() const {
        if (std::isfinite(tgt_iv_.back().hi)) return tgt_iv_.back().hi;
        return target_->quantile1(1.0 - 1e-16);
    }

    DensityPtr source_;
    DensityPtr target_;
    std::vector<Interval> src_iv_;
    std::vector<Interval> tgt_iv_;
};

// The cdf-matching transport from source onto target.
inline TransportMap1D cdf_transport(DensityPtr source, DensityPtr target) {
    return TransportMap1D(std::move(source), std::move(target));
}

} // namespace flowcap
