#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "flowcap/density.hpp"
#include "flowcap/quadrature.hpp"

namespace flowcap {

// Scalar function handle with derivative, for densities and diagnostics
// parameterized by a 1D shape g.
struct Func1D {
    std::string name; // "gaussian_pdf", "identity", or "" for custom
    std::function<double(double)> value;
    std::function<double(double)> deriv;

    static Func1D gaussian_pdf() {
        Func1D f;
        f.name = "gaussian_pdf";
        f.value = [](double x) { return norm_pdf(x); };
        f.deriv = [](double x) { return -x * norm_pdf(x); };
        return f;
    }

    static Func1D identity() {
        Func1D f;
        f.name = "identity";
        f.value = [](double x) { return x; };
        f.deriv = [](double) { return 1.0; };
        return f;
    }

    static Func1D by_name(const std::string& name) {
        if (name == "gaussian_pdf") return gaussian_pdf();
        if (name == "identity") return identity();
        throw ContractViolation("Func1D: unknown name '" + name + "'");
    }
};

// Density proportional to prod_i g(z_i)^r. The per-coordinate normalizer is
// computed over a finite window, so this type serves diagnostics and
// serialization; it requires g > 0 wherever it is evaluated.
class ProductPowDensity final : public Density {
public:
    ProductPowDensity(Func1D g, double r, int dim)
        : g_(std::move(g)), r_(r), dim_(dim) {
        if (dim_ < 1) throw ContractViolation("ProductPowDensity: need dim >= 1");
        if (!(r_ > 0.0)) throw ContractViolation("ProductPowDensity: need r > 0");
    }

    int dim() const override { return dim_; }

    double log_density(const Vec& z) const override {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) {
            const double v = g_.value(z[i]);
            if (!(v > 0.0))
                throw ContractViolation("ProductPowDensity: g is not positive at coordinate " +
                                        std::to_string(i));
            s += std::log(v);
        }
        return r_ * s - dim_ * log_norm1();
    }

    Vec grad_log_density(const Vec& z) const override {
        Vec grad(dim_);
        for (int i = 0; i < dim_; ++i) {
            const double v = g_.value(z[i]);
            if (!(v > 0.0))
                throw ContractViolation("ProductPowDensity: g is not positive at coordinate " +
                                        std::to_string(i));
            grad[i] = r_ * g_.deriv(z[i]) / v;
        }
        return grad;
    }

    const Func1D& g() const { return g_; }
    double r() const { return r_; }

private:
    double log_norm1() const {
        if (!log_norm1_) {
            const double Z = integrate_adaptive(
                [this](double x) {
                    const double v = g_.value(x);
                    return v > 0.0 ? std::pow(v, r_) : 0.0;
                },
                -40.0, 40.0, 1e-12);
            if (!(Z > 0.0) || !std::isfinite(Z))
                throw NumericFailure("ProductPowDensity: normalizer is not finite and positive");
            log_norm1_ = std::log(Z);
        }
        return *log_norm1_;
    }

    Func1D g_;
    double r_;
    int dim_;
    mutable std::optional<double> log_norm1_;
};

} // namespace flowcap
