#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "flowcap/errors.hpp"

namespace flowcap {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double ln_2pi = 1.8378770664093454836;
inline constexpr double sqrt_2pi = 2.5066282746310005024;
inline constexpr double inv_sqrt_2pi = 0.39894228040143267794;

inline double norm_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

inline double log_norm_pdf(double x) { return -0.5 * (x * x + ln_2pi); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Upper tail, accurate for large positive x.
inline double norm_sf(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

namespace detail {

// Rational initial guess for the standard normal quantile (relative error
// below 1.15e-9 over the full open interval).
inline double norm_quantile_estimate(double p) {
    static constexpr double a[6] = {
        -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
        1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {
        -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
        6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[6] = {
        -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {
        7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
        3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

} // namespace detail

// Standard normal quantile: rational estimate plus one Halley correction,
// giving close to full double precision away from the extreme tails.
inline double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ContractViolation("norm_quantile: p must lie in (0, 1)");
    double x = detail::norm_quantile_estimate(p);
    if (std::abs(x) < 37.0) {
        const double e = norm_cdf(x) - p;
        const double u = e * sqrt_2pi * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

namespace detail {

// Series part of the lower regularized incomplete gamma; valid for x < a + 1.
inline double gamma_p_series_sum(double a, double x) {
    double ap = a;
    double del = 1.0 / a;
    double sum = del;
    for (int i = 0; i < 10000; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) return sum;
    }
    throw NumericFailure("gamma_p: series did not converge");
}

// Continued-fraction part of the upper regularized incomplete gamma
// (modified Lentz); valid for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    constexpr double fpmin = std::numeric_limits<double>::min() / 1e-16;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) return h;
    }
    throw NumericFailure("gamma_q: continued fraction did not converge");
}

inline double gamma_log_prefactor(double a, double x) {
    return -x + a * std::log(x) - std::lgamma(a);
}

} // namespace detail

// Lower regularized incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw ContractViolation("gamma_p: need a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0)
        return detail::gamma_p_series_sum(a, x) * std::exp(detail::gamma_log_prefactor(a, x));
    return 1.0 - detail::gamma_q_cf(a, x) * std::exp(detail::gamma_log_prefactor(a, x));
}

// Upper regularized incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw ContractViolation("gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0)
        return 1.0 - detail::gamma_p_series_sum(a, x) * std::exp(detail::gamma_log_prefactor(a, x));
    return detail::gamma_q_cf(a, x) * std::exp(detail::gamma_log_prefactor(a, x));
}

// log P(a, x), usable when P underflows (deep lower tail, x << a).
inline double log_gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw ContractViolation("log_gamma_p: need a > 0 and x >= 0");
    if (x == 0.0) return -std::numeric_limits<double>::infinity();
    if (x < a + 1.0)
        return std::log(detail::gamma_p_series_sum(a, x)) + detail::gamma_log_prefactor(a, x);
    const double p = gamma_p(a, x);
    return std::log(p);
}

// log Q(a, x), usable when Q underflows (deep upper tail, x >> a).
inline double log_gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0)
        throw ContractViolation("log_gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    if (x >= a + 1.0)
        return std::log(detail::gamma_q_cf(a, x)) + detail::gamma_log_prefactor(a, x);
    const double q = gamma_q(a, x);
    return std::log(q);
}

// Kolmogorov distribution survival function Q_KS(lambda).
inline double kolmogorov_sf(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        const double t = std::exp(-pi * pi / (8.0 * lambda * lambda));
        const double s = t * (1.0 + std::pow(t, 8.0) * (1.0 + std::pow(t, 16.0)));
        return 1.0 - sqrt_2pi / lambda * s;
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-18) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double logsumexp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(const std::vector<double>& xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// log(exp(a) - exp(b)) for a > b.
inline double log_diff_exp(double a, double b) {
    if (!(a > b)) throw ContractViolation("log_diff_exp: need a > b");
    return a + std::log1p(-std::exp(b - a));
}

} // namespace flowcap
