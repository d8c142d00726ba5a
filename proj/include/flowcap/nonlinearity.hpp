#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "flowcap/errors.hpp"
#include "flowcap/special.hpp"

namespace flowcap {

// Scalar nonlinearity h with first and second derivatives plus the envelope
// data the invertibility guards and locality bounds consume.
struct Nonlinearity {
    std::string kind; // "relu", "tanh", "sigmoid", "arctan", or "custom-smooth"
    std::function<double(double)> h;
    std::function<double(double)> dh;
    std::function<double(double)> d2h;
    bool smooth = true;
    double deriv_lo = 0.0; // infimum of h' over R
    double deriv_hi = 1.0; // supremum of h' over R
    bool bounded = false;  // h itself bounded
    double h_lo = 0.0;
    double h_hi = 0.0;
    double c_h = 0.0; // locality constant; 0 when not applicable

    bool is_relu() const { return kind == "relu"; }

    static Nonlinearity relu() {
        Nonlinearity n;
        n.kind = "relu";
        n.h = [](double x) { return x > 0.0 ? x : 0.0; };
        n.dh = [](double x) { return x >= 0.0 ? 1.0 : 0.0; };
        n.d2h = [](double) { return 0.0; };
        n.smooth = false;
        n.deriv_lo = 0.0;
        n.deriv_hi = 1.0;
        n.bounded = false;
        return n;
    }

    static Nonlinearity tanh_fn() {
        Nonlinearity n;
        n.kind = "tanh";
        n.h = [](double x) { return std::tanh(x); };
        n.dh = [](double x) {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        };
        n.d2h = [](double x) {
            const double t = std::tanh(x);
            return -2.0 * t * (1.0 - t * t);
        };
        n.deriv_lo = 0.0;
        n.deriv_hi = 1.0;
        n.bounded = true;
        n.h_lo = -1.0;
        n.h_hi = 1.0;
        n.c_h = 2.0;
        return n;
    }

    static Nonlinearity sigmoid() {
        Nonlinearity n;
        n.kind = "sigmoid";
        n.h = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
        n.dh = [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        };
        n.d2h = [](double x) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s) * (1.0 - 2.0 * s);
        };
        n.deriv_lo = 0.0;
        n.deriv_hi = 0.25;
        n.bounded = true;
        n.h_lo = 0.0;
        n.h_hi = 1.0;
        n.c_h = 1.0;
        return n;
    }

    static Nonlinearity arctan_fn() {
        Nonlinearity n;
        n.kind = "arctan";
        n.h = [](double x) { return std::atan(x); };
        n.dh = [](double x) { return 1.0 / (1.0 + x * x); };
        n.d2h = [](double x) {
            const double d = 1.0 + x * x;
            return -2.0 * x / (d * d);
        };
        n.deriv_lo = 0.0;
        n.deriv_hi = 1.0;
        n.bounded = true;
        n.h_lo = -0.5 * pi;
        n.h_hi = 0.5 * pi;
        n.c_h = 0.5 * pi;
        return n;
    }

    static Nonlinearity custom_smooth(std::function<double(double)> h,
                                      std::function<double(double)> dh,
                                      std::function<double(double)> d2h, double deriv_lo,
                                      double deriv_hi, bool bounded = false, double h_lo = 0.0,
                                      double h_hi = 0.0) {
        Nonlinearity n;
        n.kind = "custom-smooth";
        n.h = std::move(h);
        n.dh = std::move(dh);
        n.d2h = std::move(d2h);
        n.deriv_lo = deriv_lo;
        n.deriv_hi = deriv_hi;
        n.bounded = bounded;
        n.h_lo = h_lo;
        n.h_hi = h_hi;
        return n;
    }

    static Nonlinearity by_name(const std::string& name) {
        if (name == "relu") return relu();
        if (name == "tanh") return tanh_fn();
        if (name == "sigmoid") return sigmoid();
        if (name == "arctan") return arctan_fn();
        throw ContractViolation("Nonlinearity: unknown kind '" + name + "'");
    }
};

} // namespace flowcap
