#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flowcap/density.hpp"
#include "flowcap/flow_stack.hpp"
#include "flowcap/quadrature.hpp"

namespace flowcap {

struct L1Estimate {
    double value = 0.0;          // estimated l1 distance, in [0, 2]
    double tv = 0.0;             // value / 2
    std::string method;          // "grid" or "monte_carlo"
    double stderr_est = 0.0;     // monte_carlo only
    double lo = 0.0;             // grid only
    double hi = 0.0;
    std::size_t n = 0;
    double refinement_delta = 0.0; // grid only: change when halving resolution
    double coverage_defect = 0.0;  // grid only: mass outside the window
    bool normalization_flag = false; // value suspiciously close to/above 2
};

namespace detail {

inline double mass_outside_window(const Density& d, double lo, double hi,
                                  const std::vector<double>& grid_vals, double h) {
    try {
        return d.cdf1(lo) + (1.0 - d.cdf1(hi));
    } catch (const ContractViolation&) {
        return std::abs(1.0 - trapezoid_uniform(grid_vals, h));
    }
}

} // namespace detail

// Trapezoid estimate of ||p - q||_1 over [lo, hi] plus the tail mass outside
// the window as a remainder. Both densities must keep all but 1e-6 of their
// mass inside the window.
inline L1Estimate l1_grid_1d(const Density& p, const Density& q, double lo, double hi,
                             std::size_t n = (1u << 14) + 1) {
    if (p.dim() != 1 || q.dim() != 1)
        throw ContractViolation("l1_grid_1d: densities must be one-dimensional");
    if (n < 1001) throw ContractViolation("l1_grid_1d: need n >= 1001");
    if (!(lo < hi)) throw ContractViolation("l1_grid_1d: need lo < hi");
    const double h = (hi - lo) / static_cast<double>(n - 1);
    std::vector<double> pv(n), qv(n), diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = lo + h * static_cast<double>(i);
        pv[i] = p.density1(x);
        qv[i] = q.density1(x);
        diff[i] = std::abs(pv[i] - qv[i]);
    }
    const double out_p = detail::mass_outside_window(p, lo, hi, pv, h);
    const double out_q = detail::mass_outside_window(q, lo, hi, qv, h);
    if (std::max(out_p, out_q) > 1e-6)
        throw CoverageError("l1_grid_1d: window misses mass " +
                            std::to_string(std::max(out_p, out_q)));

    // A negative outside-window defect means the density holds more than unit
    // mass inside; the remainder only adds when it is a genuine tail.
    const double rem_p = std::max(out_p, 0.0);
    const double rem_q = std::max(out_q, 0.0);
    L1Estimate est;
    est.method = "grid";
    est.lo = lo;
    est.hi = hi;
    est.n = n;
    est.value = trapezoid_uniform(diff, h) + rem_p + rem_q;
    std::vector<double> half;
    half.reserve(n / 2 + 1);
    for (std::size_t i = 0; i < n; i += 2) half.push_back(diff[i]);
    if (half.size() >= 2)
        est.refinement_delta = std::abs(est.value - (rem_p + rem_q) -
                                        trapezoid_uniform(half, 2.0 * h));
    est.coverage_defect = std::max(out_p, out_q);
    est.tv = 0.5 * est.value;
    est.normalization_flag =
        est.value > 2.0 - 1e-9 || out_p < -1e-6 || out_q < -1e-6;
    return est;
}

// Monte Carlo estimate of ||f#q - p||_1 = E_{z~q} | |det J_f(z)| p(f(z))/q(z) - 1 |.
inline L1Estimate l1_pushforward_mc(const FlowStack& f, const Density& q, const Density& p,
                                    std::size_t n, std::uint64_t seed) {
    if (n < 2) throw ContractViolation("l1_pushforward_mc: need n >= 2");
    Rng rng(seed);
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec z = q.sample(rng);
        const auto [y, lad] = f.forward_with_log_det(z);
        const double t = p.log_density(y) + lad - q.log_density(z);
        const double a = std::isfinite(t) ? std::abs(std::expm1(t)) : 1.0;
        sum += a;
        sumsq += a * a;
    }
    L1Estimate est;
    est.method = "monte_carlo";
    est.n = n;
    est.value = sum / static_cast<double>(n);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(n) - est.value * est.value);
    est.stderr_est = std::sqrt(var / static_cast<double>(n));
    est.tv = 0.5 * est.value;
    est.normalization_flag = est.value > 2.0 - 1e-9;
    return est;
}

// Window covering all but ~1e-12 of a 1D density's mass.
inline Interval density_window_1d(const Density& d, double tail = 1e-12) {
    const Interval hull = d.support_hull();
    if (hull.finite()) return hull;
    try {
        return {d.quantile1(tail), d.quantile1(1.0 - tail)};
    } catch (const ContractViolation&) {
        return {-16.0, 16.0};
    }
}

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double threshold = 0.0;
};

// Normalization, gradient-vs-finite-difference, round-trip inversion, and
// pushforward normalization (when a stack is given). 1D densities are checked
// by quadrature, higher dimensions by sampling-based estimates.
inline std::vector<CheckResult> check_suite(const Density& dist, const FlowStack* f,
                                            std::uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(seed);
    const int d = dist.dim();

    bool sampleable = true;
    try {
        Rng probe(Rng::derive(seed, 99));
        (void)dist.sample(probe);
    } catch (const ContractViolation&) {
        sampleable = false;
    }

    if (d == 1) {
        const Interval w = density_window_1d(dist);
        const double pad = 0.05 * (w.hi - w.lo);
        const double mass = integrate_adaptive(
            [&](double x) { return dist.density1(x); }, w.lo - pad, w.hi + pad, 1e-10);
        CheckResult c{"normalization", false, std::abs(mass - 1.0), 1e-6};
        c.pass = c.measured <= c.threshold;
        out.push_back(c);
    } else if (sampleable) {
        const std::size_t m = 20000;
        Vec mean = Vec::Zero(d);
        std::vector<Vec> zs;
        zs.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            zs.push_back(dist.sample(rng));
            mean += zs.back();
        }
        mean /= static_cast<double>(m);
        Vec var = Vec::Zero(d);
        for (const Vec& z : zs) var += (z - mean).cwiseAbs2();
        var = (var / static_cast<double>(m)).cwiseMax(1e-6);
        const Vec prop_sd = (2.0 * var).cwiseSqrt();
        double sum = 0.0;
        double sumsq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            Vec z(d);
            double log_g = 0.0;
            for (int k = 0; k < d; ++k) {
                const double g = rng.normal();
                z[k] = mean[k] + prop_sd[k] * g;
                log_g += log_norm_pdf(g) - std::log(prop_sd[k]);
            }
            const double r = std::exp(dist.log_density(z) - log_g);
            sum += r;
            sumsq += r * r;
        }
        const double est = sum / static_cast<double>(m);
        const double var_est =
            std::max(0.0, sumsq / static_cast<double>(m) - est * est);
        const double se = std::sqrt(var_est / static_cast<double>(m));
        CheckResult c{"normalization", false, std::abs(est - 1.0), 3.0 * se + 1e-12};
        c.pass = c.measured <= c.threshold;
        out.push_back(c);
    }

    {
        double worst = 0.0;
        int done = 0;
        int attempts = 0;
        const Interval w1 = d == 1 ? density_window_1d(dist) : Interval{};
        while (done < 100 && attempts < 1000) {
            ++attempts;
            Vec z(d);
            if (sampleable) {
                z = dist.sample(rng);
            } else if (d == 1) {
                z[0] = rng.uniform(w1.lo, w1.hi);
            } else {
                z = rng.normal_vec(d);
            }
            try {
                const Vec g = dist.grad_log_density(z);
                Vec fd(d);
                bool usable = true;
                for (int k = 0; k < d && usable; ++k) {
                    const double h = 1e-5 * (1.0 + std::abs(z[k]));
                    Vec zp = z, zm = z;
                    zp[k] += h;
                    zm[k] -= h;
                    const double lp = dist.log_density(zp);
                    const double lm = dist.log_density(zm);
                    usable = std::isfinite(lp) && std::isfinite(lm);
                    fd[k] = (lp - lm) / (2.0 * h);
                }
                if (!usable) continue;
                const double rel = (g - fd).norm() / (1.0 + g.norm());
                worst = std::max(worst, rel);
                ++done;
            } catch (const NonSmoothPoint&) {
            } catch (const ContractViolation&) {
            }
        }
        CheckResult c{"gradient_fd", false, worst, 1e-5};
        c.pass = done == 100 && c.measured <= c.threshold;
        out.push_back(c);
    }

    if (f != nullptr && !f->empty()) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const Vec z = sampleable ? dist.sample(rng) : rng.normal_vec(f->dim());
            const Vec back = f->inverse(f->forward(z));
            worst = std::max(worst, (back - z).norm() / (1.0 + z.norm()));
        }
        CheckResult c{"round_trip", false, worst, 1e-9};
        c.pass = c.measured <= c.threshold;
        out.push_back(c);

        if (d == 1) {
            const Interval w = density_window_1d(dist);
            Vec lo(1), hi(1);
            lo[0] = w.lo;
            hi[0] = w.hi;
            double a = f->forward(lo)[0];
            double b = f->forward(hi)[0];
            if (a > b) std::swap(a, b);
            const double pad = 0.05 * (b - a) + 1.0;
            const double mass = integrate_adaptive(
                [&](double y) {
                    Vec v(1);
                    v[0] = y;
                    return std::exp(f->pushforward_log_density(dist, v));
                },
                a - pad, b + pad, 1e-8);
            CheckResult cp{"pushforward_normalization", false, std::abs(mass - 1.0), 1e-4};
            cp.pass = cp.measured <= cp.threshold;
            out.push_back(cp);
        }
    }
    return out;
}

} // namespace flowcap
