#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowcap/densities/gaussian.hpp"
#include "flowcap/densities/piecewise.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/metrics.hpp"
#include "flowcap/special.hpp"

namespace flowcap {

namespace detail {

// Scalar core of relu_piece_fix: only the hinge location and the last piece's
// parameters matter. The swap must preserve the upper-tail mass at the hinge
// within 1e-8.
inline PlanarLayer relu_piece_fix_at(double t, double mu_last, double sigma_last,
                                     const Gaussian1D& target_last) {
    const double tail_old = norm_sf((t - mu_last) / sigma_last);
    const double tail_new = norm_sf((t - target_last.mu()) / target_last.sigma());
    if (std::abs(tail_new - tail_old) > 1e-8)
        throw HypothesisViolation(
            "relu_piece_fix: upper-tail mass at the last breakpoint changes from " +
            std::to_string(tail_old) + " to " + std::to_string(tail_new));
    const double ratio = target_last.sigma() / sigma_last;
    const double u = ratio > 1.0 ? 1.0 : (ratio < 1.0 ? -1.0 : 0.0);
    const double w = std::abs(1.0 - ratio);
    return PlanarLayer(u, w, -w * t, Nonlinearity::relu());
}

} // namespace detail

// ReLU planar layer that rewrites the last piece of a piecewise Gaussian q to
// target_last while leaving every earlier piece untouched. Requires q to keep
// at least one breakpoint; the hinge sits at the last one.
inline PlanarLayer relu_piece_fix(const Pwg1D& q, const Gaussian1D& target_last) {
    if (q.breakpoints().empty())
        throw ContractViolation("relu_piece_fix: q has no breakpoint to fix at");
    return detail::relu_piece_fix_at(q.breakpoints().back(), q.mus().back(),
                                     q.sigmas().back(), target_last);
}

struct SynthesisResult {
    Gaussian1D base;
    FlowStack stack;
    Pwg1D realized;                        // exact pushforward of base through stack
    std::size_t elided_identity_layers = 0; // identity layers kept in the stack
    double achieved_l1 = 0.0;              // grid l1 between pushforward and target
};

// Builds the base Gaussian and the stack of n-1 ReLU planar layers whose
// pushforward realizes a tail-consistent piecewise Gaussian with n pieces.
// Layers that come out as identities (equal sigmas) stay in the stack so the
// depth is exactly n-1; their count is reported.
inline SynthesisResult pwg_synthesize(const Pwg1D& target, bool compute_l1 = true) {
    if (!target.is_tail_consistent(1e-10))
        throw HypothesisViolation(
            "pwg_synthesize: target is not tail-consistent (deviation " +
            std::to_string(target.tail_consistency_deviation()) + ")");
    const std::size_t n = target.n_pieces();
    Gaussian1D base(target.mus()[0], target.sigmas()[0]);

    std::vector<double> breaks;
    std::vector<double> mus = {target.mus()[0]};
    std::vector<double> sigmas = {target.sigmas()[0]};
    FlowStack stack;
    std::size_t identities = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const double t = target.breakpoints()[k - 1];
        const Gaussian1D want(target.mus()[k], target.sigmas()[k]);
        PlanarLayer layer = detail::relu_piece_fix_at(t, mus.back(), sigmas.back(), want);
        const bool identity = layer.w()[0] == 0.0;
        if (identity) ++identities;
        const double ratio = want.sigma() / sigmas.back();
        const double mu_push = identity ? mus.back() : t + ratio * (mus.back() - t);
        const double sigma_push = identity ? sigmas.back() : want.sigma();
        stack.add<PlanarLayer>(std::move(layer));
        breaks.push_back(t);
        mus.push_back(mu_push);
        sigmas.push_back(sigma_push);
    }

    SynthesisResult out{std::move(base), std::move(stack),
                        Pwg1D(std::move(breaks), std::move(mus), std::move(sigmas)),
                        identities, 0.0};
    if (compute_l1) {
        auto base_ptr = std::make_shared<Gaussian1D>(out.base);
        const PushforwardDensity1D push(base_ptr, out.stack);
        const Interval wp = density_window_1d(push);
        const Interval wt = density_window_1d(target);
        out.achieved_l1 =
            l1_grid_1d(push, target, std::min(wp.lo, wt.lo), std::max(wp.hi, wt.hi)).value;
    }
    return out;
}

// Piece-count bound the refinement argument demands for accuracy eps at the
// given sup of the piecewise-constant density: interval widths must not
// exceed this delta.
inline double pwg_delta_bound(double eps, double sup) {
    if (!(eps > 0.0 && eps < 1.0)) throw ContractViolation("pwg_delta_bound: eps in (0,1)");
    if (!(sup > 0.0)) throw ContractViolation("pwg_delta_bound: sup must be positive");
    const double c = norm_quantile(eps / 3.0);
    return eps / (3.0 * sqrt_2pi * sup * sup * std::exp(c * c - 0.5));
}

struct PwcToPwgResult {
    Pwg1D pwg;
    double eps_requested = 0.0;
    double eps_internal = 0.0;     // 0.6 * requested; budgets the tails and scaling
    double tail_mass_each = 0.0;   // eps_internal / 3
    double delta = 0.0;            // refinement width bound at eps_internal
    std::size_t pieces_in = 0;     // after trimming zero-value edge pieces
    std::size_t pieces_used = 0;   // after refinement (interior Gaussian pieces)
    std::size_t pieces_required = 0; // what the delta bound demands
    bool refined = false;
    double sup = 0.0;
};

// Converts a compactly supported piecewise-constant density into a
// tail-consistent piecewise Gaussian with ||pwg - pwc||_1 <= eps. Outer tails
// carry eps_internal/3 mass each; each interior Gaussian matches the scaled
// piece value at the piece's left edge and chains the accumulated mass
// exactly, which keeps the result tail-consistent to rounding. Zero-value
// pieces take the capped sigma route.
inline PwcToPwgResult pwc_to_pwg(const Pwc1D& q_pwc, double eps, bool refine = true,
                                 std::size_t piece_cap = 100000) {
    if (!(eps > 0.0 && eps < 1.0))
        throw ContractViolation("pwc_to_pwg: eps must lie in (0,1)");
    if (std::abs(q_pwc.mass() - 1.0) > 1e-9)
        throw ContractViolation("pwc_to_pwg: input must integrate to 1");

    std::size_t first = 0;
    std::size_t last = q_pwc.n_pieces();
    while (first < last && q_pwc.values()[first] == 0.0) ++first;
    while (last > first && q_pwc.values()[last - 1] == 0.0) --last;

    const double eps_int = 0.6 * eps;
    const double sup = q_pwc.sup_value();
    const double delta = pwg_delta_bound(eps_int, sup);

    // Count before materializing: the demanded piece count can be astronomically
    // large for tiny eps, so the cap has to fire before any allocation.
    double required_f = 0.0;
    for (std::size_t i = first; i < last; ++i) {
        const double w = q_pwc.breakpoints()[i + 1] - q_pwc.breakpoints()[i];
        required_f += std::max(std::ceil(w / delta), 1.0);
    }
    if (refine && required_f > static_cast<double>(piece_cap))
        throw CapacityError("pwc_to_pwg: eps=" + std::to_string(eps) + " demands " +
                            std::to_string(static_cast<long long>(std::min(required_f, 9e18))) +
                            " pieces, cap is " + std::to_string(piece_cap));
    const auto required = static_cast<std::size_t>(std::min(required_f, 9e18));

    std::vector<double> edges;
    std::vector<double> vals;
    for (std::size_t i = first; i < last; ++i) {
        const double lo = q_pwc.breakpoints()[i];
        const double hi = q_pwc.breakpoints()[i + 1];
        const auto parts = std::max(std::ceil((hi - lo) / delta), 1.0);
        const std::size_t m = refine ? static_cast<std::size_t>(parts) : 1;
        for (std::size_t j = 0; j < m; ++j) {
            edges.push_back(lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(m));
            vals.push_back(q_pwc.values()[i]);
        }
    }
    edges.push_back(q_pwc.breakpoints()[last]);

    const std::size_t N = vals.size();
    const double hull_width = edges.back() - edges.front();
    const double sigma_cap = 1e6 * hull_width;
    const double scale = 1.0 - 2.0 * eps_int / 3.0;

    std::vector<double> breaks(edges);
    std::vector<double> mus;
    std::vector<double> sigmas;
    mus.reserve(N + 2);
    sigmas.reserve(N + 2);

    const double tail_mass = eps_int / 3.0;
    const double c_left = norm_quantile(tail_mass);
    const double a0 = scale * vals.front();
    const double sigma_left = std::min(norm_pdf(c_left) / a0, sigma_cap);
    mus.push_back(edges.front() - c_left * sigma_left);
    sigmas.push_back(sigma_left);

    double cum = tail_mass;
    for (std::size_t i = 0; i < N; ++i) {
        if (!(cum > 0.0 && cum < 1.0))
            throw NumericFailure("pwc_to_pwg: accumulated mass left (0,1) at piece " +
                                 std::to_string(i));
        const double c = norm_quantile(cum);
        const double a = scale * vals[i];
        const double sigma = a > 0.0 ? std::min(norm_pdf(c) / a, sigma_cap) : sigma_cap;
        const double mu = edges[i] - c * sigma;
        mus.push_back(mu);
        sigmas.push_back(sigma);
        cum = norm_cdf((edges[i + 1] - mu) / sigma);
    }

    if (!(cum < 1.0))
        throw NumericFailure("pwc_to_pwg: no mass left for the upper tail");
    const double c_right = norm_quantile(cum);
    const double v_edge =
        norm_pdf((edges.back() - mus.back()) / sigmas.back()) / sigmas.back();
    const double sigma_right =
        v_edge > 0.0 ? std::min(norm_pdf(c_right) / v_edge, sigma_cap) : sigma_cap;
    mus.push_back(edges.back() - c_right * sigma_right);
    sigmas.push_back(sigma_right);

    PwcToPwgResult out{Pwg1D(std::move(breaks), std::move(mus), std::move(sigmas)),
                       eps,
                       eps_int,
                       tail_mass,
                       delta,
                       last - first,
                       N,
                       required,
                       refine,
                       sup};
    return out;
}

struct ApproximationResult {
    Pwc1D discretized;
    PwcToPwgResult conversion;
    SynthesisResult synthesis;
    double achieved_l1 = 0.0; // grid l1 between the pushforward and the target
};

// End-to-end pipeline: discretize the target over its hull into equal-width
// midpoint bins, convert to a tail-consistent piecewise Gaussian, synthesize
// the ReLU planar stack, and measure the achieved l1 error.
inline ApproximationResult approximate_target_1d(const Density& p, double eps,
                                                 std::size_t n_pieces) {
    if (p.dim() != 1)
        throw ContractViolation("approximate_target_1d: target must be one-dimensional");
    if (n_pieces == 0) throw ContractViolation("approximate_target_1d: need n_pieces >= 1");
    const Interval hull = p.support_hull();
    if (!hull.finite())
        throw ContractViolation("approximate_target_1d: target needs a finite support hull");

    std::vector<double> breaks(n_pieces + 1);
    std::vector<double> vals(n_pieces);
    for (std::size_t i = 0; i <= n_pieces; ++i)
        breaks[i] = hull.lo + (hull.hi - hull.lo) * static_cast<double>(i) /
                                  static_cast<double>(n_pieces);
    for (std::size_t i = 0; i < n_pieces; ++i)
        vals[i] = p.density1(0.5 * (breaks[i] + breaks[i + 1]));
    Pwc1D pwc = Pwc1D::normalized(std::move(breaks), std::move(vals));

    PwcToPwgResult conv = pwc_to_pwg(pwc, eps, /*refine=*/false);
    SynthesisResult synth = pwg_synthesize(conv.pwg, /*compute_l1=*/false);

    auto base_ptr = std::make_shared<Gaussian1D>(synth.base);
    const PushforwardDensity1D push(base_ptr, synth.stack);
    const Interval wp = density_window_1d(push);
    const double lo = std::min(wp.lo, hull.lo - 0.05 * hull.width());
    const double hi = std::max(wp.hi, hull.hi + 0.05 * hull.width());
    const double l1 = l1_grid_1d(push, p, lo, hi).value;
    return ApproximationResult{std::move(pwc), std::move(conv), std::move(synth), l1};
}

// z -> sigma z as two ReLU planar layers (one per half-line), optionally
// followed by a constant-shift layer for z -> sigma z + mu.
inline std::vector<PlanarLayer> affine_1d_layers(double sigma, double mu = 0.0) {
    if (!(sigma > 1e-9))
        throw ContractViolation("affine_1d_layers: slope must be positive");
    std::vector<PlanarLayer> out;
    out.emplace_back(sigma - 1.0, 1.0, 0.0, Nonlinearity::relu());
    out.emplace_back(1.0 - sigma, -1.0, 0.0, Nonlinearity::relu());
    if (mu != 0.0) out.emplace_back(mu, 0.0, 1.0, Nonlinearity::relu());
    return out;
}

} // namespace flowcap
