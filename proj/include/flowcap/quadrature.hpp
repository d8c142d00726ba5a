#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "flowcap/errors.hpp"
#include "flowcap/special.hpp"

namespace flowcap {

// Gauss-Legendre rule on [-1, 1].
struct GLRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GLRule make_gl_rule(int n) {
    if (n < 1) throw ContractViolation("make_gl_rule: need n >= 1");
    GLRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int k = 0; k < half; ++k) {
        double x = std::cos(pi * (k + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[k] = -x;
        rule.nodes[n - 1 - k] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[k] = w;
        rule.weights[n - 1 - k] = w;
    }
    return rule;
}

inline const GLRule& gl_rule(int n) {
    static std::map<int, GLRule> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, make_gl_rule(n)).first;
    return it->second;
}

template <class F>
double integrate_gl(F&& f, double a, double b, int panels = 1, int nodes_per_panel = 40) {
    const GLRule& rule = gl_rule(nodes_per_panel);
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double mid = lo + 0.5 * h;
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i)
            s += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
        total += 0.5 * h * s;
    }
    return total;
}

// log of the integral of exp(log_f) over [a, b]; all arithmetic in log space,
// for integrands whose linear version underflows.
template <class LogF>
double integrate_gl_log(LogF&& log_f, double a, double b, int panels = 1,
                        int nodes_per_panel = 40) {
    const GLRule& rule = gl_rule(nodes_per_panel);
    const double h = (b - a) / panels;
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(panels) * rule.nodes.size());
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double mid = lo + 0.5 * h;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double x = mid + 0.5 * h * rule.nodes[i];
            terms.push_back(std::log(0.5 * h * rule.weights[i]) + log_f(x));
        }
    }
    return logsumexp(terms);
}

namespace detail {

template <class F>
double adaptive_simpson_rec(F& f, double a, double b, double fa, double fm, double fb,
                            double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

template <class F>
double integrate_adaptive(F&& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fm = f(m);
    const double fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

inline double trapezoid_uniform(const std::vector<double>& ys, double h) {
    if (ys.size() < 2) throw ContractViolation("trapezoid_uniform: need >= 2 samples");
    double s = 0.5 * (ys.front() + ys.back());
    for (std::size_t i = 1; i + 1 < ys.size(); ++i) s += ys[i];
    return s * h;
}

// Smallest x in [lo, hi] with cdf(x) >= u, for nondecreasing cdf. Plain
// bisection; on plateaus it converges to the left endpoint.
template <class F>
double invert_monotone_cdf(F&& cdf, double u, double lo, double hi) {
    if (!(lo < hi)) throw ContractViolation("invert_monotone_cdf: need lo < hi");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (cdf(mid) >= u)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

struct RootResult {
    double x = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Root of f on a bracket [lo, hi] with f(lo) and f(hi) of opposite sign (or
// zero). Newton steps from x0, falling back to bisection whenever a step
// leaves the bracket; the bracket is tightened every iteration.
template <class F, class DF>
RootResult solve_bracketed_newton(F&& f, DF&& df, double lo, double hi, double x0,
                                  double xtol = 1e-14, int max_iter = 100) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return {lo, 0, true};
    if (fhi == 0.0) return {hi, 0, true};
    if ((flo > 0.0) == (fhi > 0.0))
        throw ContractViolation("solve_bracketed_newton: endpoints do not bracket a root");
    double x = std::clamp(x0, lo, hi);
    RootResult res;
    for (int it = 1; it <= max_iter; ++it) {
        res.iterations = it;
        const double fx = f(x);
        if (fx == 0.0) {
            res.x = x;
            res.converged = true;
            return res;
        }
        if ((fx > 0.0) == (fhi > 0.0)) {
            hi = x;
            fhi = fx;
        } else {
            lo = x;
            flo = fx;
        }
        const double d = df(x);
        double next = (d != 0.0) ? x - fx / d : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        if (step < xtol * (1.0 + std::abs(x)) || hi - lo < xtol * (1.0 + std::abs(x))) {
            res.x = x;
            res.converged = true;
            return res;
        }
    }
    res.x = x;
    return res;
}

} // namespace flowcap
