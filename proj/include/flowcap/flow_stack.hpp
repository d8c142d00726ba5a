#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "flowcap/density.hpp"
#include "flowcap/flow_layer.hpp"

namespace flowcap {

// Ordered composition of flow layers, applied first-to-last; empty = identity.
class FlowStack {
public:
    FlowStack() = default;

    FlowStack(const FlowStack& other) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }

    FlowStack& operator=(const FlowStack& other) {
        if (this != &other) {
            FlowStack tmp(other);
            layers_ = std::move(tmp.layers_);
        }
        return *this;
    }

    FlowStack(FlowStack&&) = default;
    FlowStack& operator=(FlowStack&&) = default;

    void push_back(std::unique_ptr<FlowLayer> layer) {
        if (!layer) throw ContractViolation("FlowStack: null layer");
        if (!layers_.empty() && layer->dim() != dim())
            throw ContractViolation("FlowStack: layer dimension mismatch");
        layers_.push_back(std::move(layer));
    }

    template <class L> void add(L layer) {
        push_back(std::make_unique<L>(std::move(layer)));
    }

    void append(const FlowStack& other) {
        for (const auto& l : other.layers_) push_back(l->clone());
    }

    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    int dim() const { return layers_.empty() ? 0 : layers_.front()->dim(); }
    const FlowLayer& layer(std::size_t i) const { return *layers_[i]; }

    Vec forward(Vec z) const {
        for (std::size_t i = 0; i < layers_.size(); ++i) z = layers_[i]->forward(z);
        return z;
    }

    // (f(z), sum over layers of log|det J| along the path)
    std::pair<Vec, double> forward_with_log_det(Vec z) const {
        double lad = 0.0;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            try {
                lad += layers_[i]->log_det_jacobian(z);
            } catch (const InvertibilityViolation& e) {
                throw InvertibilityViolation("layer " + std::to_string(i) + ": " + e.what());
            }
            z = layers_[i]->forward(z);
        }
        return {std::move(z), lad};
    }

    Vec inverse(Vec y) const {
        for (std::size_t i = layers_.size(); i-- > 0;) {
            try {
                y = layers_[i]->inverse(y);
            } catch (const NumericFailure& e) {
                throw NumericFailure("layer " + std::to_string(i) + ": " + e.what());
            }
        }
        return y;
    }

    // log (f#base)(f(z)) without any inversion.
    double pushforward_log_density_at_source(const Density& base, const Vec& z) const {
        const auto [y, lad] = forward_with_log_det(z);
        (void)y;
        return base.log_density(z) - lad;
    }

    double pushforward_log_density(const Density& base, const Vec& y) const {
        return pushforward_log_density_at_source(base, inverse(y));
    }

    // grad log (f#base) evaluated at f(z), by pulling the base score through
    // each layer: g <- J^{-T} (g - grad log|det J|).
    Vec pushforward_grad_at_source(const Density& base, const Vec& z0) const {
        Vec g = base.grad_log_density(z0);
        Vec z = z0;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Vec corrected = g - layers_[i]->grad_log_det_jacobian(z);
            g = layers_[i]->solve_jac_transpose(z, corrected);
            z = layers_[i]->forward(z);
        }
        return g;
    }

    Vec pushforward_grad_log_density(const Density& base, const Vec& y) const {
        return pushforward_grad_at_source(base, inverse(y));
    }

private:
    std::vector<std::unique_ptr<FlowLayer>> layers_;
};

// One-dimensional pushforward f#base exposed as a Density. All 1D layer
// variants are monotone; Householder (v = +-1) flips orientation, the rest
// preserve it.
class PushforwardDensity1D final : public Density {
public:
    PushforwardDensity1D(DensityPtr base, FlowStack stack)
        : base_(std::move(base)), stack_(std::make_shared<FlowStack>(std::move(stack))) {
        if (!base_ || base_->dim() != 1)
            throw ContractViolation("PushforwardDensity1D: base must be one-dimensional");
        if (!stack_->empty() && stack_->dim() != 1)
            throw ContractViolation("PushforwardDensity1D: stack must be one-dimensional");
        increasing_ = true;
        for (std::size_t i = 0; i < stack_->size(); ++i)
            if (stack_->layer(i).layer_kind() == LayerKind::householder)
                increasing_ = !increasing_;
    }

    int dim() const override { return 1; }

    double log_density(const Vec& z) const override {
        return stack_->pushforward_log_density(*base_, z);
    }

    Vec grad_log_density(const Vec& z) const override {
        return stack_->pushforward_grad_log_density(*base_, z);
    }

    Vec sample(Rng& rng) const override { return stack_->forward(base_->sample(rng)); }

    double cdf1(double y) const override {
        Vec v(1);
        v[0] = y;
        const double cz = base_->cdf1(stack_->inverse(v)[0]);
        return increasing_ ? cz : 1.0 - cz;
    }

    Interval support_hull() const override {
        const Interval h = base_->support_hull();
        if (!h.finite()) return {};
        Vec lo(1), hi(1);
        lo[0] = h.lo;
        hi[0] = h.hi;
        const double a = stack_->forward(lo)[0];
        const double b = stack_->forward(hi)[0];
        return increasing_ ? Interval{a, b} : Interval{b, a};
    }

    const FlowStack& stack() const { return *stack_; }
    const Density& base() const { return *base_; }
    bool increasing() const { return increasing_; }

private:
    DensityPtr base_;
    std::shared_ptr<FlowStack> stack_;
    bool increasing_ = true;
};

} // namespace flowcap
